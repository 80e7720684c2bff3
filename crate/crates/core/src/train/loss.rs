use ndarray::Array2;

use crate::error::{Error, Result};

fn check(logits: &Array2<f64>, tokens: &[u32], mask: &[bool]) -> Result<()> {
    if logits.nrows() != tokens.len() || mask.len() != tokens.len() {
        return Err(Error::Shape(format!(
            "logits {:?}, {} tokens and {} mask entries disagree",
            logits.dim(),
            tokens.len(),
            mask.len()
        )));
    }
    if mask.first() == Some(&true) {
        return Err(Error::Argument("position 0 has no preceding logits and cannot be a target".into()));
    }
    if let Some(&id) = tokens.iter().find(|&&t| t as usize >= logits.ncols()) {
        return Err(Error::TokenRange { id, vocab: logits.ncols() });
    }
    if !mask.contains(&true) {
        return Err(Error::EmptyMask);
    }
    Ok(())
}

/// Sum of −log softmax(logits[i−1])[tokens[i]] over masked positions, the
/// number of such positions, and the gradient of the sum divided by
/// `normalizer` with respect to the logits.
pub fn masked_nll(logits: &Array2<f64>, tokens: &[u32], mask: &[bool], normalizer: f64) -> Result<(f64, usize, Array2<f64>)> {
    check(logits, tokens, mask)?;
    let mut grad = Array2::<f64>::zeros(logits.raw_dim());
    let mut total = 0.0;
    let mut count = 0;
    for i in 1..tokens.len() {
        if !mask[i] {
            continue;
        }
        let row = logits.row(i - 1);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|&v| (v - m).exp()).sum();
        let lse = m + sum.ln();
        let t = tokens[i] as usize;
        total += lse - row[t];
        count += 1;
        let mut g = grad.row_mut(i - 1);
        for (gj, &v) in g.iter_mut().zip(row.iter()) {
            *gj = (v - lse).exp() / normalizer;
        }
        g[t] -= 1.0 / normalizer;
    }
    Ok((total, count, grad))
}

/// Mean masked next-token negative log-likelihood.
pub fn masked_autoregressive_loss(logits: &Array2<f64>, tokens: &[u32], mask: &[bool]) -> Result<f64> {
    let (sum, n, _) = masked_nll(logits, tokens, mask, 1.0)?;
    Ok(sum / n as f64)
}
