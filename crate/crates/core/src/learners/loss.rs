//! Quasi-binomial loss and logistic helpers.

/// Predictions are clamped into `[LOSS_CLAMP, 1 - LOSS_CLAMP]` before the log.
pub const LOSS_CLAMP: f64 = 1e-12;

pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `log(1 + exp(x))` without overflow.
pub fn log1pexp(x: f64) -> f64 {
    if x > 35.0 {
        x
    } else if x < -35.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Per-row loss `-(y log q + (1 - y) log(1 - q))` on the linear-predictor
/// scale, exact for any finite `eta`.
pub fn loss_eta(y: f64, eta: f64) -> f64 {
    log1pexp(eta) - y * eta
}

/// Per-row loss on the probability scale; `q` must already lie in (0, 1).
pub fn loss_prob(y: f64, q: f64) -> f64 {
    let mut l = 0.0;
    if y > 0.0 {
        l -= y * q.ln();
    }
    if y < 1.0 {
        l -= (1.0 - y) * (1.0 - q).ln();
    }
    l
}

/// Mean loss with a count of predictions that needed clamping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossEval {
    pub risk: f64,
    pub clamped: usize,
}

/// Mean quasi-binomial negative log-likelihood of `predictions` for `y`.
///
/// # Panics
/// Panics when the slices differ in length.
pub fn neg_loglik(predictions: &[f64], y: &[f64]) -> LossEval {
    assert_eq!(predictions.len(), y.len(), "predictions and outcomes differ in length");
    let mut clamped = 0;
    let total: f64 = predictions
        .iter()
        .zip(y)
        .map(|(&q, &y)| {
            let c = q.clamp(LOSS_CLAMP, 1.0 - LOSS_CLAMP);
            if c != q {
                clamped += 1;
            }
            loss_prob(y, c)
        })
        .sum();
    let risk = if y.is_empty() { 0.0 } else { total / y.len() as f64 };
    LossEval { risk, clamped }
}
