//! Targeting machinery shared by the estimators: the one-dimensional
//! logistic fluctuation, Wald intervals and the report type.

pub mod point;
pub mod seq;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::learners::loss::{expit, logit};

pub use point::{
    clever_covariate_ate, clever_covariate_tsm, eic_ate, fluctuate, psi_ate, tmle_ate, tmle_point_from_fits,
    GMechanism, GMode, NuisanceFits, PointTmle, Target,
};
pub use seq::{
    cum_ratio_clever, integrate_gstar, ltmle_mean, seq_regress_level, LevelFit, NodeIntervention, SeqFitStack,
    SeqTmle, StochasticIntervention,
};

/// Numerical settings shared by all TMLE variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TmleOptions {
    /// Estimated treatment probabilities are truncated to `[delta, 1 - delta]`.
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Wald interval level is `1 - alpha`.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Fluctuation parameters beyond `±eps_bound` are a divergence.
    #[serde(default = "default_eps_bound")]
    pub eps_bound: f64,
}

fn default_delta() -> f64 {
    0.01
}

fn default_alpha() -> f64 {
    0.05
}

fn default_eps_bound() -> f64 {
    10.0
}

impl Default for TmleOptions {
    fn default() -> Self {
        TmleOptions { delta: default_delta(), alpha: default_alpha(), eps_bound: default_eps_bound() }
    }
}

impl TmleOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return Err(Error::Config(format!("delta = {} must lie in (0, 0.5)", self.delta)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha = {} must lie in (0, 1)", self.alpha)));
        }
        if !(self.eps_bound > 0.0) {
            return Err(Error::Config("eps_bound must be positive".into()));
        }
        Ok(())
    }
}

/// Mean-score tolerance of the fluctuation solver.
pub const SCORE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fluctuation {
    pub epsilon: f64,
    pub iterations: usize,
    /// `Σ h (y - expit(offset + epsilon h))` at the solution.
    pub score: f64,
}

fn score(offset: &[f64], h: &[f64], y: &[f64], eps: f64) -> (f64, f64) {
    let mut s = 0.0;
    let mut ds = 0.0;
    for ((&o, &h), &y) in offset.iter().zip(h).zip(y) {
        if h != 0.0 {
            let q = expit(o + eps * h);
            s += h * (y - q);
            ds -= h * h * q * (1.0 - q);
        }
    }
    (s, ds)
}

/// Offset logistic regression of `y` on `h` with offsets `offset` (logits),
/// solved on `[-bound, bound]` by safeguarded Newton on the monotone score.
pub fn fit_fluctuation(offset: &[f64], h: &[f64], y: &[f64], bound: f64) -> Result<Fluctuation> {
    let n = y.len();
    if offset.len() != n || h.len() != n {
        return Err(Error::Dimension { expected: n, got: offset.len().min(h.len()) });
    }
    if n == 0 || h.iter().all(|&v| v == 0.0) {
        return Ok(Fluctuation { epsilon: 0.0, iterations: 0, score: 0.0 });
    }
    let nf = n as f64;
    let hmax = h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = SCORE_TOL * nf * hmax.max(1.0);
    let (s0, _) = score(offset, h, y, 0.0);
    if s0.abs() <= tol {
        return Ok(Fluctuation { epsilon: 0.0, iterations: 0, score: s0 });
    }
    let (s_lo, _) = score(offset, h, y, -bound);
    let (s_hi, _) = score(offset, h, y, bound);
    if s_lo < 0.0 || s_hi > 0.0 {
        return Err(Error::Divergence(format!(
            "score has no root in [-{bound}, {bound}] (score {s_lo:.3e} at -{bound}, {s_hi:.3e} at {bound})"
        )));
    }
    // s is nonincreasing: s(lo) >= 0 >= s(hi)
    let (mut lo, mut hi) = (-bound, bound);
    let mut eps = 0.0;
    let (mut s, mut ds) = score(offset, h, y, eps);
    for it in 1..=200 {
        if s > 0.0 {
            lo = eps;
        } else {
            hi = eps;
        }
        let newton = if ds < 0.0 { eps - s / ds } else { f64::NAN };
        let next = if newton.is_finite() && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        let step = (next - eps).abs();
        eps = next;
        (s, ds) = score(offset, h, y, eps);
        if s.abs() <= tol || step <= 1e-15 * eps.abs().max(1.0) || hi - lo <= 1e-15 {
            if s.abs() > 1e-8 * nf {
                return Err(Error::NonConvergence { iterations: it, residual: s / nf, last_iterate: vec![eps] });
            }
            return Ok(Fluctuation { epsilon: eps, iterations: it, score: s });
        }
    }
    Err(Error::NonConvergence { iterations: 200, residual: s / nf, last_iterate: vec![eps] })
}

/// `expit(logit(q) + eps h)`.
pub fn update_prob(q: f64, eps: f64, h: f64) -> f64 {
    if eps == 0.0 || h == 0.0 {
        q
    } else {
        expit(logit(q) + eps * h)
    }
}

/// Wald interval `psi ± z_{1-alpha/2} sqrt(mean(eic²) / n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaldCi {
    pub lo: f64,
    pub hi: f64,
    pub se: f64,
    /// Every influence value was zero.
    pub degenerate: bool,
}

pub fn z_quantile(alpha: f64) -> f64 {
    Normal::standard().inverse_cdf(1.0 - alpha / 2.0)
}

pub fn wald_ci(psi: f64, eic: &[f64], alpha: f64) -> WaldCi {
    let n = eic.len() as f64;
    let sigma2 = eic.iter().map(|d| d * d).sum::<f64>() / n;
    let se = (sigma2 / n).sqrt();
    let half = z_quantile(alpha) * se;
    WaldCi { lo: psi - half, hi: psi + half, se, degenerate: eic.iter().all(|d| *d == 0.0) }
}

/// Result of any TMLE in this crate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TmleReport {
    pub estimand: String,
    pub psi: f64,
    /// Untargeted plug-in estimate, where defined.
    pub psi_initial: Option<f64>,
    /// Fluctuation parameter; the last (outermost) level for sequential fits.
    pub epsilon: f64,
    pub se: f64,
    pub ci: (f64, f64),
    pub alpha: f64,
    pub n: usize,
    /// `|mean EIC|`.
    pub score_residual: f64,
    pub learner_selected_q: String,
    pub learner_selected_g: String,
    /// Per-level values for sequential fits, from the outcome level down.
    #[serde(default)]
    pub level_epsilons: Vec<f64>,
    #[serde(default)]
    pub level_score_residuals: Vec<f64>,
    #[serde(default)]
    pub flags: Vec<String>,
    /// Per-row influence values, aligned with `times`.
    #[serde(skip)]
    pub eic: Vec<f64>,
    #[serde(skip)]
    pub times: Vec<usize>,
}

impl TmleReport {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn assemble(
        estimand: &str,
        psi: f64,
        psi_initial: Option<f64>,
        epsilon: f64,
        eic: Vec<f64>,
        times: Vec<usize>,
        alpha: f64,
        learner_q: &str,
        learner_g: &str,
        mut flags: Vec<String>,
    ) -> Self {
        let ci = wald_ci(psi, &eic, alpha);
        if ci.degenerate {
            flags.push("degenerate_ci".into());
        }
        let n = eic.len();
        let score_residual = (eic.iter().sum::<f64>() / n as f64).abs();
        TmleReport {
            estimand: estimand.into(),
            psi,
            psi_initial,
            epsilon,
            se: ci.se,
            ci: (ci.lo, ci.hi),
            alpha,
            n,
            score_residual,
            learner_selected_q: learner_q.into(),
            learner_selected_g: learner_g.into(),
            level_epsilons: Vec::new(),
            level_score_residuals: Vec::new(),
            flags,
            eic,
            times,
        }
    }

    pub fn covers(&self, truth: f64) -> bool {
        self.ci.0 <= truth && truth <= self.ci.1
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// CSV `t,eic`.
    pub fn eic_csv(&self) -> String {
        let mut s = String::from("t,eic\n");
        for (t, d) in self.times.iter().zip(&self.eic) {
            s.push_str(&format!("{t},{d}\n"));
        }
        s
    }
}
