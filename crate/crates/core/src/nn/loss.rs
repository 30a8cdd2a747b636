use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    BceWithLogits,
}

impl LossKind {
    /// Loss and its derivative with respect to the prediction.
    pub fn eval(self, pred: f64, y: f64) -> (f64, f64) {
        match self {
            LossKind::Mse => loss_mse(pred, y),
            LossKind::BceWithLogits => loss_bce_with_logits(pred, y),
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy on a logit, in the overflow-free form
/// `max(z, 0) - z*y + ln(1 + e^-|z|)`; the gradient is `sigmoid(z) - y`.
pub fn loss_bce_with_logits(logit: f64, y: f64) -> (f64, f64) {
    let loss = logit.max(0.0) - logit * y + (-logit.abs()).exp().ln_1p();
    (loss, sigmoid(logit) - y)
}

pub fn loss_mse(pred: f64, y: f64) -> (f64, f64) {
    let r = pred - y;
    (r * r, 2.0 * r)
}
