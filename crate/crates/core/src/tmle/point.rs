//! Single time-point TMLE: treatment-specific means, the ATE contrast and
//! means under a deterministic per-row rule.
//!
//! All three targets are linear in the arm-specific conditional means. On
//! row `i` the target weights arm `a` by `c_a(i)`, written `(c_0, c_1)`:
//! `(-1, 1)` for the ATE, `(1, 0)` or `(0, 1)` for a treatment-specific mean
//! and `(1 - d_i, d_i)` for a rule `d`. The clever covariate at arm `a` is `c_a / g(a | C)`.

use serde::{Deserialize, Serialize};

use super::{fit_fluctuation, update_prob, TmleOptions, TmleReport};
use crate::data::{build_regression_frame, ContextSpec, RegressionFrame, TimeSeries};
use crate::error::{Error, Result};
use crate::learners::loss::logit;
use crate::learners::{Library, LearnerFit};
use crate::online_sl::{discrete_super_learner, CvConfig};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Ate,
    /// Mean outcome with every row set to arm `0` or `1`.
    Tsm(u8),
    /// Mean outcome under the per-row deterministic rule.
    Rule(Vec<u8>),
}

impl Target {
    fn label(&self) -> String {
        match self {
            Target::Ate => "ate".into(),
            Target::Tsm(a) => format!("tsm(a={a})"),
            Target::Rule(_) => "rule_mean".into(),
        }
    }

    /// `(c_0, c_1)` on row `i`.
    fn weights(&self, i: usize) -> (f64, f64) {
        match self {
            Target::Ate => (-1.0, 1.0),
            Target::Tsm(1) => (0.0, 1.0),
            Target::Tsm(_) => (1.0, 0.0),
            Target::Rule(d) => {
                if d[i] == 1 {
                    (0.0, 1.0)
                } else {
                    (1.0, 0.0)
                }
            }
        }
    }
}

fn check_g(g1: f64, delta: f64) -> Result<()> {
    if !(g1 >= delta && g1 <= 1.0 - delta) {
        return Err(Error::Positivity { t: 0, node: 0, prob: g1, delta });
    }
    Ok(())
}

/// `I(a = 1)/g1 - I(a = 0)/(1 - g1)`; `g1` must already lie in `[delta, 1 - delta]`.
pub fn clever_covariate_ate(a: u8, g1: f64, delta: f64) -> Result<f64> {
    check_g(g1, delta)?;
    Ok(if a == 1 { 1.0 / g1 } else { -1.0 / (1.0 - g1) })
}

/// `I(a = 1)/g1`.
pub fn clever_covariate_tsm(a: u8, g1: f64, delta: f64) -> Result<f64> {
    check_g(g1, delta)?;
    Ok(if a == 1 { 1.0 / g1 } else { 0.0 })
}

/// `h (y - qstar)`.
pub fn eic_ate(h: f64, y: f64, qstar: f64) -> f64 {
    h * (y - qstar)
}

/// Mean of `q1 - q0`.
pub fn psi_ate(q1: &[f64], q0: &[f64]) -> f64 {
    q1.iter().zip(q0).map(|(a, b)| a - b).sum::<f64>() / q1.len() as f64
}

/// Treatment mechanism on the frame rows.
#[derive(Debug, Clone)]
pub enum GMechanism {
    Fitted(LearnerFit),
    /// `P(A = 1 | past)` per row.
    Known(Vec<f64>),
}

/// Initial fits with `g` truncation bounds.
#[derive(Debug, Clone)]
pub struct NuisanceFits {
    pub qbar: LearnerFit,
    pub gbar: GMechanism,
    pub delta: f64,
}

impl NuisanceFits {
    /// `P(A = 1 | C)` per frame row; estimated values are truncated to
    /// `[delta, 1 - delta]`, known values must already lie there.
    pub fn g1(&self, frame: &RegressionFrame) -> Result<(Vec<f64>, usize)> {
        match &self.gbar {
            GMechanism::Known(p) => {
                if p.len() != frame.len() {
                    return Err(Error::Dimension { expected: frame.len(), got: p.len() });
                }
                for (i, &g) in p.iter().enumerate() {
                    if !(g >= self.delta && g <= 1.0 - self.delta) {
                        return Err(Error::Positivity { t: frame.times[i], node: 0, prob: g, delta: self.delta });
                    }
                }
                Ok((p.clone(), 0))
            }
            GMechanism::Fitted(fit) => {
                let raw = fit.predict(&frame.treatment_design())?;
                let mut truncated = 0;
                let g = raw
                    .into_iter()
                    .map(|g| {
                        let c = g.clamp(self.delta, 1.0 - self.delta);
                        if c != g {
                            truncated += 1;
                        }
                        c
                    })
                    .collect();
                Ok((g, truncated))
            }
        }
    }

    fn g_name(&self) -> String {
        match &self.gbar {
            GMechanism::Fitted(f) => f.learner.clone(),
            GMechanism::Known(_) => "known".into(),
        }
    }
}

/// Targeted arm-specific predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct Fluctuated {
    pub epsilon: f64,
    pub q0: Vec<f64>,
    pub q1: Vec<f64>,
    pub q0_star: Vec<f64>,
    pub q1_star: Vec<f64>,
    /// Clever covariate at the observed arm.
    pub h_obs: Vec<f64>,
    pub qstar_obs: Vec<f64>,
}

/// Fluctuates `qbar` along the clever covariate of `target`.
pub fn fluctuate(
    frame: &RegressionFrame,
    qbar: &LearnerFit,
    g1: &[f64],
    target: &Target,
    opts: &TmleOptions,
) -> Result<Fluctuated> {
    if frame.is_empty() {
        return Err(Error::EmptyFrame { len: 0, burn_in: 0 });
    }
    if let Target::Rule(d) = target {
        if d.len() != frame.len() {
            return Err(Error::Dimension { expected: frame.len(), got: d.len() });
        }
    }
    let q_obs = qbar.predict(&frame.outcome_design(None))?;
    let q1 = qbar.predict(&frame.outcome_design(Some(1)))?;
    let q0 = qbar.predict(&frame.outcome_design(Some(0)))?;
    let n = frame.len();
    let mut h1 = Vec::with_capacity(n);
    let mut h0 = Vec::with_capacity(n);
    for (i, &g) in g1.iter().enumerate() {
        check_g(g, opts.delta).map_err(|_| Error::Positivity { t: frame.times[i], node: 0, prob: g, delta: opts.delta })?;
        let (c0, c1) = target.weights(i);
        h1.push(c1 / g);
        h0.push(c0 / (1.0 - g));
    }
    let h_obs: Vec<f64> = (0..n).map(|i| if frame.a[i] == 1 { h1[i] } else { h0[i] }).collect();
    let offset: Vec<f64> = q_obs.iter().map(|&q| logit(q)).collect();
    let fl = fit_fluctuation(&offset, &h_obs, &frame.y, opts.eps_bound)?;
    let eps = fl.epsilon;
    let q1_star: Vec<f64> = q1.iter().zip(&h1).map(|(&q, &h)| update_prob(q, eps, h)).collect();
    let q0_star: Vec<f64> = q0.iter().zip(&h0).map(|(&q, &h)| update_prob(q, eps, h)).collect();
    let qstar_obs = (0..n).map(|i| if frame.a[i] == 1 { q1_star[i] } else { q0_star[i] }).collect();
    Ok(Fluctuated { epsilon: eps, q0, q1, q0_star, q1_star, h_obs, qstar_obs })
}

fn plug_in(target: &Target, q0: &[f64], q1: &[f64]) -> f64 {
    let n = q0.len();
    (0..n)
        .map(|i| {
            let (c0, c1) = target.weights(i);
            c0 * q0[i] + c1 * q1[i]
        })
        .sum::<f64>()
        / n as f64
}

/// TMLE on a frame from given initial fits.
pub fn tmle_point_from_fits(
    frame: &RegressionFrame,
    nuisances: &NuisanceFits,
    target: &Target,
    opts: &TmleOptions,
) -> Result<TmleReport> {
    opts.validate()?;
    let (g1, truncated) = nuisances.g1(frame)?;
    let fl = fluctuate(frame, &nuisances.qbar, &g1, target, opts)?;
    let psi = plug_in(target, &fl.q0_star, &fl.q1_star);
    let psi_initial = plug_in(target, &fl.q0, &fl.q1);
    let eic: Vec<f64> = (0..frame.len()).map(|i| eic_ate(fl.h_obs[i], frame.y[i], fl.qstar_obs[i])).collect();
    let mut flags = Vec::new();
    if truncated > 0 {
        flags.push(format!("g_truncated:{truncated}"));
    }
    if nuisances.qbar.diagnostics.ridge_fallback {
        flags.push("qbar_ridge_fallback".into());
    }
    if fl.h_obs.iter().all(|h| *h == 0.0) {
        flags.push("no_support".into());
    }
    Ok(TmleReport::assemble(
        &target.label(),
        psi,
        Some(psi_initial),
        fl.epsilon,
        eic,
        frame.times.clone(),
        opts.alpha,
        &nuisances.qbar.learner,
        &nuisances.g_name(),
        flags,
    ))
}

/// How the treatment mechanism is obtained.
#[derive(Debug, Clone)]
pub enum GMode {
    /// Probabilities from the series' `g_prob` column.
    Known,
    Estimate(Library),
}

/// End-to-end single time-point TMLE configuration.
#[derive(Debug, Clone)]
pub struct PointTmle {
    pub target: Target,
    pub q_library: Library,
    pub g: GMode,
    pub cv: CvConfig,
    pub options: TmleOptions,
}

impl PointTmle {
    /// Super-learner initial fits on `frame`.
    pub fn fit_nuisances(&self, frame: &RegressionFrame) -> Result<NuisanceFits> {
        let plan = if self.q_library.len() > 1 || matches!(&self.g, GMode::Estimate(l) if l.len() > 1) {
            Some(self.cv.plan(frame.len())?)
        } else {
            None
        };
        let qbar = discrete_super_learner(&self.q_library, &frame.outcome_design(None), &frame.y, plan.as_ref())?.fit;
        let gbar = match &self.g {
            GMode::Known => GMechanism::Known(
                frame
                    .g_prob
                    .clone()
                    .ok_or_else(|| Error::Schema("known-g mode needs a g_prob column".into()))?,
            ),
            GMode::Estimate(lib) => {
                let a: Vec<f64> = frame.a.iter().map(|&a| f64::from(a)).collect();
                GMechanism::Fitted(discrete_super_learner(lib, &frame.treatment_design(), &a, plan.as_ref())?.fit)
            }
        };
        Ok(NuisanceFits { qbar, gbar, delta: self.options.delta })
    }

    pub fn run_frame(&self, frame: &RegressionFrame) -> Result<TmleReport> {
        let nuisances = self.fit_nuisances(frame)?;
        tmle_point_from_fits(frame, &nuisances, &self.target, &self.options)
    }
}

/// Frame construction, super-learner fits, truncation, targeting and
/// inference for the configured single time-point target.
pub fn tmle_ate(series: &TimeSeries, spec: &ContextSpec, config: &PointTmle) -> Result<TmleReport> {
    let frame = build_regression_frame(series, spec)?;
    config.run_frame(&frame)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Block, Schema};
    use crate::learners::{LearnerSpec, library};

    #[test]
    fn clever_covariate_values() {
        assert_eq!(clever_covariate_ate(1, 0.5, 0.01).unwrap(), 2.0);
        assert_eq!(clever_covariate_ate(0, 0.5, 0.01).unwrap(), -2.0);
        assert_eq!(clever_covariate_ate(1, 0.25, 0.01).unwrap(), 4.0);
        assert_eq!(clever_covariate_tsm(0, 0.25, 0.01).unwrap(), 0.0);
        assert!(clever_covariate_ate(1, 0.005, 0.01).is_err());
    }

    #[test]
    fn eic_values() {
        assert_eq!(eic_ate(2.0, 1.0, 0.5), 1.0);
        assert_eq!(eic_ate(2.0, 0.3, 0.3), 0.0);
        assert_eq!(eic_ate(-2.0, 0.0, 0.25), 0.5);
    }

    #[test]
    fn psi_values() {
        assert!((psi_ate(&[0.7; 5], &[0.4; 5]) - 0.3).abs() < 1e-15);
        assert_eq!(psi_ate(&[0.2, 0.6], &[0.2, 0.6]), 0.0);
        assert!((psi_ate(&[0.5, 0.7], &[0.4, 0.4]) - 0.2).abs() < 1e-15);
    }

    fn toy_series(n: usize) -> TimeSeries {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let mut blocks = vec![Block::simple(0, 0.0, vec![0.0])];
        blocks[0].g_prob = Some(vec![0.5]);
        for _ in 1..n {
            let prev_y = blocks.last().unwrap().y;
            let g = 0.3 + 0.4 * prev_y;
            let a = rng.random_bool(g) as u8;
            let y = rng.random_bool(0.2 + 0.3 * f64::from(a) + 0.2 * prev_y) as u8 as f64;
            let mut b = Block::simple(a, y, vec![rng.random::<f64>()]);
            b.g_prob = Some(vec![g]);
            blocks.push(b);
        }
        TimeSeries::new(Schema::simple(["w"]).with_known_g(), blocks).unwrap()
    }

    fn config(g: GMode) -> PointTmle {
        PointTmle {
            target: Target::Ate,
            q_library: library(&[LearnerSpec::InterceptOnly, LearnerSpec::glm()]),
            g,
            cv: CvConfig::default(),
            options: TmleOptions::default(),
        }
    }

    #[test]
    fn report_invariants_hold() {
        let s = toy_series(400);
        let spec = ContextSpec::new(1).lag("y", &[1]).lag("w", &[1]);
        for g in [GMode::Known, GMode::Estimate(library(&[LearnerSpec::glm()]))] {
            let r = tmle_ate(&s, &spec, &config(g)).unwrap();
            assert!(r.score_residual <= 1e-8);
            assert_eq!(r.n, 399);
            assert!(((r.ci.0 + r.ci.1) / 2.0 - r.psi).abs() < 1e-12);
            let z = super::super::z_quantile(0.05);
            assert!(((r.ci.1 - r.ci.0) / 2.0 - z * r.se).abs() < 1e-12);
            let se = (r.eic.iter().map(|d| d * d).sum::<f64>() / r.n as f64 / r.n as f64).sqrt();
            assert_eq!(r.se, se);
        }
    }

    #[test]
    fn psi_is_exact_mean_of_targeted_blips() {
        let s = toy_series(300);
        let spec = ContextSpec::new(1).lag("y", &[1]);
        let frame = build_regression_frame(&s, &spec).unwrap();
        let cfg = config(GMode::Known);
        let nuis = cfg.fit_nuisances(&frame).unwrap();
        let (g1, _) = nuis.g1(&frame).unwrap();
        let fl = fluctuate(&frame, &nuis.qbar, &g1, &Target::Ate, &cfg.options).unwrap();
        let r = tmle_point_from_fits(&frame, &nuis, &Target::Ate, &cfg.options).unwrap();
        let manual = fl.q1_star.iter().zip(&fl.q0_star).map(|(a, b)| a - b).sum::<f64>() / frame.len() as f64;
        assert_eq!(r.psi, manual);
    }

    #[test]
    fn runs_are_bit_identical() {
        let s = toy_series(300);
        let spec = ContextSpec::new(1).lag("y", &[1]).lag("w", &[1]);
        let cfg = config(GMode::Estimate(library(&[LearnerSpec::InterceptOnly, LearnerSpec::glm()])));
        let a = tmle_ate(&s, &spec, &cfg).unwrap();
        let b = tmle_ate(&s, &spec, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn smaller_delta_never_shrinks_max_clever_covariate() {
        let s = toy_series(300);
        let spec = ContextSpec::new(1).lag("y", &[1]).lag("w", &[1]);
        let frame = build_regression_frame(&s, &spec).unwrap();
        let lib = library(&[LearnerSpec::glm()]);
        let a: Vec<f64> = frame.a.iter().map(|&a| f64::from(a)).collect();
        let gfit = discrete_super_learner(&lib, &frame.treatment_design(), &a, None).unwrap().fit;
        let mut last = 0.0;
        for delta in [0.45, 0.4, 0.3, 0.1, 0.01] {
            let n = NuisanceFits { qbar: gfit.clone(), gbar: GMechanism::Fitted(gfit.clone()), delta };
            let (g1, _) = n.g1(&frame).unwrap();
            let hmax = frame
                .a
                .iter()
                .zip(&g1)
                .map(|(&a, &g)| clever_covariate_ate(a, g, delta).unwrap().abs())
                .fold(0.0, f64::max);
            assert!(hmax >= last);
            last = hmax;
        }
    }

    #[test]
    fn rule_with_no_support_is_degenerate() {
        let s = toy_series(200);
        let spec = ContextSpec::new(1).lag("y", &[1]);
        let frame = build_regression_frame(&s, &spec).unwrap();
        let cfg = config(GMode::Known);
        let nuis = cfg.fit_nuisances(&frame).unwrap();
        let d: Vec<u8> = frame.a.iter().map(|a| 1 - a).collect();
        let r = tmle_point_from_fits(&frame, &nuis, &Target::Rule(d), &cfg.options).unwrap();
        assert_eq!(r.epsilon, 0.0);
        assert_eq!(Some(r.psi), r.psi_initial);
        assert!(r.flags.iter().any(|f| f == "degenerate_ci"));
    }
}
