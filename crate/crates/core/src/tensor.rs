//! Named float64 tensors, the unit of checkpoint storage.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayBase, Data, Dimension};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorTable {
    entries: BTreeMap<String, (Vec<usize>, Vec<f64>)>,
}

impl TensorTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put<S: Data<Elem = f64>, D: Dimension>(&mut self, name: impl Into<String>, a: &ArrayBase<S, D>) {
        self.entries.insert(name.into(), (a.shape().to_vec(), a.iter().copied().collect()));
    }

    pub fn put_raw(&mut self, name: impl Into<String>, dims: Vec<usize>, data: Vec<f64>) {
        self.entries.insert(name.into(), (dims, data));
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[usize], &[f64])> {
        self.entries.iter().map(|(k, (d, v))| (k.as_str(), d.as_slice(), v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn raw(&self, name: &str) -> Result<(&[usize], &[f64])> {
        self.entries
            .get(name)
            .map(|(d, v)| (d.as_slice(), v.as_slice()))
            .ok_or_else(|| Error::Incompatible(format!("missing tensor {name}")))
    }

    fn checked(&self, name: &str, dims: &[usize]) -> Result<Vec<f64>> {
        let (d, v) = self.raw(name)?;
        if d != dims {
            return Err(Error::Incompatible(format!("tensor {name} has dims {d:?}, expected {dims:?}")));
        }
        Ok(v.to_vec())
    }

    pub fn get1(&self, name: &str, n: usize) -> Result<Array1<f64>> {
        Ok(Array1::from_vec(self.checked(name, &[n])?))
    }

    pub fn get2(&self, name: &str, shape: (usize, usize)) -> Result<Array2<f64>> {
        let v = self.checked(name, &[shape.0, shape.1])?;
        Array2::from_shape_vec(shape, v).map_err(|e| Error::Shape(e.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }
}
