//! Volume-rendering weights from signed distances along a ray.
//!
//! With `Phi(x) = sigmoid(s x)`, the opacity of the interval between
//! samples `i` and `i + 1` is `max((Phi(d_i) - Phi(d_{i+1})) / Phi(d_i), 0)`
//! and sample `i` receives `alpha_i * prod_{j<i} (1 - alpha_j)`. The last
//! sample has no interval and weight zero. Ratios are formed in log space
//! so large sharpness values cannot underflow.

/// `ln(sigmoid(x))`.
fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// `d/dx ln(sigmoid(x)) = sigmoid(-x)`.
fn log_sigmoid_slope(x: f64) -> f64 {
    crate::nn::sigmoid(-x)
}

/// Per-interval opacities (`n - 1` values, then a trailing zero).
pub fn alphas(sdf: &[f64], s: f64) -> Vec<f64> {
    let n = sdf.len();
    let mut out = vec![0.0; n];
    for i in 0..n.saturating_sub(1) {
        let ratio = (log_sigmoid(s * sdf[i + 1]) - log_sigmoid(s * sdf[i])).exp();
        out[i] = (1.0 - ratio).max(0.0);
    }
    out
}

pub fn render_weights(sdf: &[f64], s: f64) -> Vec<f64> {
    let alpha = alphas(sdf, s);
    let mut transmittance = 1.0;
    alpha
        .iter()
        .map(|a| {
            let w = a * transmittance;
            transmittance *= 1.0 - a;
            w
        })
        .collect()
}

/// Gradients of `sum_i g_i w_i` w.r.t. the sdf values and the sharpness.
pub fn render_weights_backward(sdf: &[f64], s: f64, d_weights: &[f64]) -> (Vec<f64>, f64) {
    let n = sdf.len();
    assert_eq!(d_weights.len(), n);
    let alpha = alphas(sdf, s);
    let mut trans = vec![1.0; n];
    for i in 1..n {
        trans[i] = trans[i - 1] * (1.0 - alpha[i - 1]);
    }
    // tail[i] = sum_{m>i} g_m alpha_m prod_{i<j<m} (1 - alpha_j)
    let mut tail = vec![0.0; n];
    for i in (0..n.saturating_sub(1)).rev() {
        tail[i] = d_weights[i + 1] * alpha[i + 1] + (1.0 - alpha[i + 1]) * tail[i + 1];
    }
    let mut d_sdf = vec![0.0; n];
    let mut d_s = 0.0;
    for i in 0..n.saturating_sub(1) {
        let d_alpha = trans[i] * (d_weights[i] - tail[i]);
        let (x0, x1) = (s * sdf[i], s * sdf[i + 1]);
        let ratio = (log_sigmoid(x1) - log_sigmoid(x0)).exp();
        if ratio >= 1.0 {
            continue;
        }
        // alpha = 1 - exp(ls(x1) - ls(x0))
        let d_x1 = -ratio * log_sigmoid_slope(x1) * d_alpha;
        let d_x0 = ratio * log_sigmoid_slope(x0) * d_alpha;
        d_sdf[i] += s * d_x0;
        d_sdf[i + 1] += s * d_x1;
        d_s += sdf[i] * d_x0 + sdf[i + 1] * d_x1;
    }
    (d_sdf, d_s)
}
