//! Central-difference checks for [`Mlp::backward`].

use super::mlp::{dot, Mlp};
use crate::error::Result;

/// Denominator floor for relative errors of near-zero gradient entries.
pub const RELATIVE_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Largest relative error between the analytic and central-difference
/// gradients of `upstream . net(x)`, over the listed parameter indices and
/// every input coordinate.
pub fn max_relative_error(net: &Mlp, x: &[f64], upstream: &[f64], h: f64, param_indices: &[usize]) -> Result<f64> {
    let cache = net.forward_cached(x)?;
    let mut grad = vec![0.0; net.param_count()];
    let gx = net.backward(&cache, upstream, &mut grad)?;
    let loss = |n: &Mlp, x: &[f64]| -> Result<f64> { Ok(dot(upstream, &n.forward(x)?)) };

    let mut worst: f64 = 0.0;
    let mut probe = net.clone();
    for &k in param_indices {
        let p0 = probe.params()[k];
        probe.params_mut()[k] = p0 + h;
        let up = loss(&probe, x)?;
        probe.params_mut()[k] = p0 - h;
        let dn = loss(&probe, x)?;
        probe.params_mut()[k] = p0;
        worst = worst.max(relative_error(grad[k], (up - dn) / (2.0 * h)));
    }
    let mut xp = x.to_vec();
    for j in 0..x.len() {
        xp[j] = x[j] + h;
        let up = loss(net, &xp)?;
        xp[j] = x[j] - h;
        let dn = loss(net, &xp)?;
        xp[j] = x[j];
        worst = worst.max(relative_error(gx[j], (up - dn) / (2.0 * h)));
    }
    Ok(worst)
}
