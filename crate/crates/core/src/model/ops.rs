use ndarray::{Array1, Array2, Axis};

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// tanh approximation of GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// Row-wise softmax in place. `-inf` entries get probability zero; every
/// row must have at least one finite entry.
pub fn softmax_rows(s: &mut Array2<f64>) {
    for mut row in s.rows_mut() {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        row.mapv_inplace(|v| {
            let e = (v - m).exp();
            sum += e;
            e
        });
        row /= sum;
    }
}

/// Row-wise layer norm. Returns the output, the normalized input and the
/// per-row inverse standard deviation.
pub fn layer_norm(x: &Array2<f64>, gamma: &Array1<f64>, beta: &Array1<f64>, eps: f64) -> (Array2<f64>, Array2<f64>, Array1<f64>) {
    let d = x.ncols() as f64;
    let mean = x.sum_axis(Axis(1)) / d;
    let mut xhat = x - &mean.view().insert_axis(Axis(1));
    let var = xhat.mapv(|v| v * v).sum_axis(Axis(1)) / d;
    let inv = var.mapv(|v| 1.0 / (v + eps).sqrt());
    xhat *= &inv.view().insert_axis(Axis(1));
    let y = &xhat * gamma + beta;
    (y, xhat, inv)
}

pub(crate) fn layer_norm_backward(dy: &Array2<f64>, xhat: &Array2<f64>, inv: &Array1<f64>, gamma: &Array1<f64>) -> Array2<f64> {
    let d = dy.ncols() as f64;
    let g = dy * gamma;
    let mean_g = g.sum_axis(Axis(1)) / d;
    let mean_gx = (&g * xhat).sum_axis(Axis(1)) / d;
    let mut dx = g - &mean_g.insert_axis(Axis(1)) - &(xhat * &mean_gx.insert_axis(Axis(1)));
    dx *= &inv.view().insert_axis(Axis(1));
    dx
}
