//! Central finite-difference verification of analytic gradients.

use super::{backward, forward, LossKind, MlpParams, MlpSpec, Parameters};
use crate::error::Result;

/// `|a - b| / max(1e-12, |a| + |b|)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-12)
}

/// Largest relative error between `analytic` and central differences of `loss`
/// over every scalar parameter of `params`.
pub fn max_relative_error<P, F>(params: &P, analytic: &P, mut loss: F, eps: f64) -> f64
where
    P: Parameters + Clone,
    F: FnMut(&P) -> f64,
{
    let mut probe = params.clone();
    let analytic = analytic.tensors();
    let mut worst = 0.0f64;
    for (k, grad) in analytic.iter().enumerate() {
        for i in 0..grad.len() {
            let orig = probe.tensors()[k][i];
            probe.tensors_mut()[k][i] = orig + eps;
            let up = loss(&probe);
            probe.tensors_mut()[k][i] = orig - eps;
            let down = loss(&probe);
            probe.tensors_mut()[k][i] = orig;
            let fd = (up - down) / (2.0 * eps);
            worst = worst.max(relative_error(grad[i], fd));
        }
    }
    worst
}

fn summed_loss(spec: &MlpSpec, params: &MlpParams, x: &[f64], y: f64, kind: LossKind) -> Result<(f64, Vec<f64>)> {
    let (out, _) = forward(spec, params, x)?;
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(out.len());
    for o in out {
        let (l, g) = kind.eval(o, y);
        total += l;
        grad.push(g);
    }
    Ok((total, grad))
}

/// Compares backprop against central differences for the loss
/// `sum_k loss(output_k, y)` at input `x`.
pub fn gradient_check(
    spec: &MlpSpec,
    params: &MlpParams,
    x: &[f64],
    y: f64,
    loss_kind: LossKind,
    eps: f64,
) -> Result<f64> {
    let (_, cache) = forward(spec, params, x)?;
    let (_, grad_out) = summed_loss(spec, params, x, y, loss_kind)?;
    let (analytic, _) = backward(spec, params, &cache, &grad_out)?;
    Ok(max_relative_error(
        params,
        &analytic,
        |p| summed_loss(spec, p, x, y, loss_kind).map(|r| r.0).unwrap_or(f64::NAN),
        eps,
    ))
}
