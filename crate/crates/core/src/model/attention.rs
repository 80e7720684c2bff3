use ndarray::{s, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::forward::Dropout;
use super::ops::softmax_rows;
use super::params::{Layer, LinearCache};
use crate::error::{Error, Result};

/// Whether text queries may attend to the ECG rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrefixVisibility {
    #[default]
    Visible,
    /// Prefix logits forced to -inf, leaving plain causal self-attention.
    Masked,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    pub(crate) q: LinearCache,
    pub(crate) kt: LinearCache,
    pub(crate) vt: LinearCache,
    pub(crate) ke: LinearCache,
    pub(crate) ve: LinearCache,
    pub(crate) o: LinearCache,
    pub(crate) qt: Array2<f64>,
    pub(crate) km: Array2<f64>,
    pub(crate) vm: Array2<f64>,
    /// Attention weights per head, L × (L_e + L).
    pub probs: Vec<Array2<f64>>,
}

pub(crate) fn attention_forward(
    layer: &Layer,
    x: &Array2<f64>,
    e: &Array2<f64>,
    heads: usize,
    prefix: PrefixVisibility,
    mut dropout: Option<&mut Dropout>,
) -> (Array2<f64>, AttentionCache) {
    let mut mask = |r: usize, c: usize| dropout.as_mut().and_then(|d| d.mask(r, c));
    let (l, d) = x.dim();
    let le = e.nrows();
    let dh = d / heads;
    let (qt, cq) = layer.q.forward(x, mask(l, d));
    let (kt, ckt) = layer.k.forward(x, mask(l, d));
    let (vt, cvt) = layer.v.forward(x, mask(l, d));
    let (ke, cke) = layer.k.forward(e, mask(le, d));
    let (ve, cve) = layer.v.forward(e, mask(le, d));
    let km = ndarray::concatenate(Axis(0), &[ke.view(), kt.view()]).unwrap();
    let vm = ndarray::concatenate(Axis(0), &[ve.view(), vt.view()]).unwrap();
    let scale = 1.0 / (dh as f64).sqrt();
    let mut z = Array2::<f64>::zeros((l, d));
    let mut probs = Vec::with_capacity(heads);
    for j in 0..heads {
        let cols = s![.., j * dh..(j + 1) * dh];
        let mut sc = qt.slice(cols).dot(&km.slice(cols).t());
        sc *= scale;
        for p in 0..l {
            let mut row = sc.row_mut(p);
            if prefix == PrefixVisibility::Masked {
                row.slice_mut(s![..le]).fill(f64::NEG_INFINITY);
            }
            row.slice_mut(s![le + p + 1..]).fill(f64::NEG_INFINITY);
        }
        softmax_rows(&mut sc);
        z.slice_mut(cols).assign(&sc.dot(&vm.slice(cols)));
        probs.push(sc);
    }
    let mut m = mask(l, d);
    let (out, co) = layer.o.forward(&z, m.take());
    let cache = AttentionCache { q: cq, kt: ckt, vt: cvt, ke: cke, ve: cve, o: co, qt, km, vm, probs };
    (out, cache)
}

/// Adapter gradients of the attention linears: q, k, v, o.
pub(crate) type AttnGrads<'a> = [Option<&'a mut (Array2<f64>, Array2<f64>)>; 4];

/// Returns (dL/dx, dL/de) and accumulates adapter gradients.
pub(crate) fn attention_backward(
    layer: &Layer,
    dout: &Array2<f64>,
    c: &AttentionCache,
    heads: usize,
    grads: AttnGrads<'_>,
) -> (Array2<f64>, Array2<f64>) {
    let [gq, mut gk, mut gv, go] = grads;
    let dz = layer.o.backward(dout, &c.o, go);
    let (l, d) = dz.dim();
    let le = c.km.nrows() - l;
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut dq = Array2::<f64>::zeros((l, d));
    let mut dkm = Array2::<f64>::zeros((le + l, d));
    let mut dvm = Array2::<f64>::zeros((le + l, d));
    for j in 0..heads {
        let cols = s![.., j * dh..(j + 1) * dh];
        let p = &c.probs[j];
        let doj = dz.slice(cols);
        let dp = doj.dot(&c.vm.slice(cols).t());
        dvm.slice_mut(cols).assign(&p.t().dot(&doj));
        let row_dot = (&dp * p).sum_axis(Axis(1)).insert_axis(Axis(1));
        let mut ds = (dp - &row_dot) * p;
        ds *= scale;
        dq.slice_mut(cols).assign(&ds.dot(&c.km.slice(cols)));
        dkm.slice_mut(cols).assign(&ds.t().dot(&c.qt.slice(cols)));
    }
    let split = |m: &Array2<f64>| (m.slice(s![..le, ..]).to_owned(), m.slice(s![le.., ..]).to_owned());
    let (dke, dkt) = split(&dkm);
    let (dve, dvt) = split(&dvm);
    let mut dx = layer.q.backward(&dq, &c.q, gq);
    dx += &layer.k.backward(&dkt, &c.kt, gk.as_deref_mut());
    dx += &layer.v.backward(&dvt, &c.vt, gv.as_deref_mut());
    let mut de = layer.k.backward(&dke, &c.ke, gk);
    de += &layer.v.backward(&dve, &c.ve, gv);
    (dx, de)
}

/// Concatenated-fusion attention of one layer.
///
/// `h_e` (L_e × D_h) is tiled across the heads and projected with the same
/// key/value maps as the text rows `h_t` (L × D_m); text position p sees
/// every prefix row and text rows 0..=p.
pub fn fused_attention(
    h_e: &Array2<f64>,
    h_t: &Array2<f64>,
    layer: &Layer,
    num_heads: usize,
    prefix: PrefixVisibility,
) -> Result<Array2<f64>> {
    let d = layer.q.d_in();
    if num_heads == 0 || d % num_heads != 0 {
        return Err(Error::Shape(format!("{num_heads} heads do not divide width {d}")));
    }
    if h_t.ncols() != d || h_e.ncols() * num_heads != d || h_t.nrows() == 0 {
        return Err(Error::Shape(format!(
            "text {:?} and prefix {:?} do not fit {num_heads} heads of width {d}",
            h_t.dim(),
            h_e.dim()
        )));
    }
    let views: Vec<_> = (0..num_heads).map(|_| h_e.view()).collect();
    let e = ndarray::concatenate(Axis(1), &views).unwrap();
    Ok(attention_forward(layer, h_t, &e, num_heads, prefix, None).0)
}
