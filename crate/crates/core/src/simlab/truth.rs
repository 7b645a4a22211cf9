//! Data-adaptive truths from the closed-form outcome means at the realized
//! contexts. Only the blocks strictly before each evaluated time are read.

use super::dgp::{outcome_prob, DgpKind};
use crate::data::TimeSeries;
use crate::error::{Error, Result};

/// `(1/N_used) Σ_t [E(Y(t) | A(t)=1, past) − E(Y(t) | A(t)=0, past)]` over
/// `t = burn_in+1..=N`.
pub fn true_context_ate(kind: DgpKind, series: &TimeSeries) -> Result<f64> {
    let b = kind.burn_in();
    check_len(kind, series.len())?;
    let blocks = series.blocks();
    let total: f64 = (b..blocks.len())
        .map(|i| outcome_prob(kind, &blocks[..i], 1) - outcome_prob(kind, &blocks[..i], 0))
        .sum();
    Ok(total / (blocks.len() - b) as f64)
}

/// `(1/N_used) Σ_t E(Y(t) | A(t) = d_t, past)` with `rule[k]` the arm
/// assigned to time `t = burn_in + 1 + k`.
pub fn true_mean_under_rule(kind: DgpKind, series: &TimeSeries, rule: &[u8]) -> Result<f64> {
    let b = kind.burn_in();
    check_len(kind, series.len())?;
    let blocks = series.blocks();
    if rule.len() != blocks.len() - b {
        return Err(Error::Dimension { expected: blocks.len() - b, got: rule.len() });
    }
    let total: f64 = rule.iter().enumerate().map(|(k, &d)| outcome_prob(kind, &blocks[..b + k], d)).sum();
    Ok(total / rule.len() as f64)
}

fn check_len(kind: DgpKind, len: usize) -> Result<()> {
    if len <= kind.burn_in() {
        return Err(Error::EmptyFrame { len, burn_in: kind.burn_in() });
    }
    Ok(())
}
