//! Sequential-regression TMLE of the mean outcome under a stochastic
//! intervention on the treatment nodes `A(t, 0..=K)` of each block.
//!
//! Each row carries the history `C_o(t), A(0), L(1), A(1), ..., L(K), A(K)`.
//! Level `L(j)`, for `j = K+1` down to `1`, regresses the current
//! pseudo-outcome (initially `Y`) on the history through `A(j-1)`,
//! fluctuates along `H_j = Π_{l<j} g*_l(A(l)) / g_l(A(l))`, and integrates
//! `A(j-1)` over `g*_{j-1}` to produce the next pseudo-outcome.

use serde::{Deserialize, Serialize};

use super::{fit_fluctuation, update_prob, TmleOptions, TmleReport};
use crate::data::{build_regression_frame, ContextSpec, TimeSeries};
use crate::design::Design;
use crate::error::{Error, Result};
use crate::learners::loss::logit;
use crate::learners::{Library, LearnerFit};
use crate::online_sl::{discrete_super_learner, CvConfig, SlFit};
use crate::tmle::point::GMode;

/// Intervention on one binary node, as `P*(A = 1 | history)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum NodeIntervention {
    Always1,
    Always0,
    Bernoulli { p: f64 },
    /// `A = I(intercept + Σ coef · history[column] > 0)`.
    RuleFromBlip { intercept: f64, coefs: Vec<(String, f64)> },
}

impl NodeIntervention {
    fn validate(&self, history: &[String]) -> Result<()> {
        match self {
            NodeIntervention::Bernoulli { p } if !(0.0..=1.0).contains(p) => {
                Err(Error::Config(format!("bernoulli probability {p} outside [0, 1]")))
            }
            NodeIntervention::RuleFromBlip { coefs, .. } => {
                for (c, _) in coefs {
                    if !history.contains(c) {
                        return Err(Error::Config(format!("rule column `{c}` is not in the node's history")));
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// `P*(A = 1)` given the history row and its column names.
    pub fn prob1(&self, row: &[f64], names: &[String]) -> f64 {
        match self {
            NodeIntervention::Always1 => 1.0,
            NodeIntervention::Always0 => 0.0,
            NodeIntervention::Bernoulli { p } => *p,
            NodeIntervention::RuleFromBlip { intercept, coefs } => {
                let s: f64 = intercept
                    + coefs
                        .iter()
                        .map(|(c, b)| b * row[names.iter().position(|n| n == c).expect("validated column")])
                        .sum::<f64>();
                if s > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// One rule per treatment node, in node order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StochasticIntervention {
    pub nodes: Vec<NodeIntervention>,
}

impl StochasticIntervention {
    pub fn always_treat(k: usize) -> Self {
        StochasticIntervention { nodes: vec![NodeIntervention::Always1; k + 1] }
    }
}

/// `Π_{l<j} gstar_l(a_l) / g_l(a_l)` where `g1[l]`, `gstar1[l]` are
/// `P(A(l) = 1)` under the observed mechanism and the intervention.
pub fn cum_ratio_clever(g1: &[f64], gstar1: &[f64], a: &[u8], j: usize, delta: f64) -> Result<f64> {
    let mut h = 1.0;
    for l in 0..j {
        let (g, gs) = if a[l] == 1 { (g1[l], gstar1[l]) } else { (1.0 - g1[l], 1.0 - gstar1[l]) };
        if g < delta {
            return Err(Error::Positivity { t: 0, node: l, prob: g, delta });
        }
        h *= gs / g;
    }
    Ok(h)
}

/// `(1 - gstar1) q0 + gstar1 q1`.
pub fn integrate_gstar(q0: f64, q1: f64, gstar1: f64) -> f64 {
    if gstar1 == 1.0 {
        q1
    } else if gstar1 == 0.0 {
        q0
    } else {
        (1.0 - gstar1) * q0 + gstar1 * q1
    }
}

/// Super-learner regression of pseudo-outcomes on a level's history.
pub fn seq_regress_level(pseudo: &[f64], x: &Design, library: &Library, cv: &CvConfig) -> Result<SlFit> {
    let plan = if library.len() > 1 { Some(cv.plan(pseudo.len())?) } else { None };
    discrete_super_learner(library, x, pseudo, plan.as_ref())
}

/// Targeted fit of one level.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelFit {
    /// Level `L(j)`, `j = K+1 ..= 1`.
    pub level: usize,
    pub fit: LearnerFit,
    pub epsilon: f64,
    /// `|mean H_j (pseudo - targeted)|`.
    pub score_residual: f64,
}

/// Targeted fits from the outcome level down to `L(1)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeqFitStack {
    pub levels: Vec<LevelFit>,
    pub g_learners: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SeqTmle {
    pub q_library: Library,
    pub g: GMode,
    pub cv: CvConfig,
    pub options: TmleOptions,
}

/// Full history design of the frame rows and the column of each `A(j)`.
fn history(series: &TimeSeries, spec: &ContextSpec) -> Result<(Design, Vec<usize>, Vec<usize>)> {
    let frame = build_regression_frame(series, spec)?;
    let schema = series.schema();
    let mut names: Vec<String> = frame.names().to_vec();
    let mut a_pos = Vec::new();
    for (j, a) in schema.treatments.iter().enumerate() {
        if j > 0 {
            names.extend(schema.intermediates[j - 1].iter().cloned());
        }
        a_pos.push(names.len());
        names.push(a.clone());
    }
    let mut x = Vec::with_capacity(frame.len() * names.len());
    for (i, &t) in frame.times.iter().enumerate() {
        x.extend_from_slice(frame.context(i));
        let b = series.block(t);
        for j in 0..b.a.len() {
            if j > 0 {
                x.extend_from_slice(&b.l[j - 1]);
            }
            x.push(f64::from(b.a[j]));
        }
    }
    let n = frame.len();
    Ok((Design::from_flat(names, x, n), a_pos, frame.times))
}

/// Sequential-regression TMLE of `mean_t E_{g*}[Y(t) | C_o(t)]`.
pub fn ltmle_mean(
    series: &TimeSeries,
    spec: &ContextSpec,
    gstar: &StochasticIntervention,
    config: &SeqTmle,
) -> Result<(TmleReport, SeqFitStack)> {
    config.options.validate()?;
    let schema = series.schema();
    let nodes = schema.treatments.len();
    let delta = config.options.delta;
    if gstar.nodes.len() != nodes {
        return Err(Error::Config(format!(
            "intervention has {} node rules for {nodes} treatment nodes",
            gstar.nodes.len()
        )));
    }
    let (hist, a_pos, times) = history(series, spec)?;
    let n = hist.nrows();
    for (j, rule) in gstar.nodes.iter().enumerate() {
        rule.validate(&hist.names()[..a_pos[j]])?;
    }

    // treatment mechanism and intervention per node and row
    let mut g1 = vec![vec![0.0; nodes]; n];
    let mut gs1 = vec![vec![0.0; nodes]; n];
    let mut g_learners = Vec::with_capacity(nodes);
    let mut flags = Vec::new();
    for j in 0..nodes {
        let names = &hist.names()[..a_pos[j]];
        for i in 0..n {
            gs1[i][j] = gstar.nodes[j].prob1(&hist.row(i)[..a_pos[j]], names);
        }
        match &config.g {
            GMode::Known => {
                for (i, &t) in times.iter().enumerate() {
                    let p = series
                        .block(t)
                        .g_prob
                        .as_ref()
                        .ok_or_else(|| Error::Schema("known-g mode needs g_prob columns".into()))?[j];
                    // positivity is required where the intervention puts mass
                    for (arm_p, gs_arm) in [(p, gs1[i][j]), (1.0 - p, 1.0 - gs1[i][j])] {
                        if gs_arm > 0.0 && arm_p < delta {
                            return Err(Error::Positivity { t, node: j, prob: arm_p, delta });
                        }
                    }
                    g1[i][j] = p;
                }
                g_learners.push("known".to_string());
            }
            GMode::Estimate(lib) => {
                let xg = hist.prefix_columns(a_pos[j]);
                let target = hist.column(a_pos[j]);
                let sl = seq_regress_level(&target, &xg, lib, &config.cv)?;
                let mut truncated = 0;
                for (i, p) in sl.fit.predict(&xg)?.into_iter().enumerate() {
                    let c = p.clamp(delta, 1.0 - delta);
                    if c != p {
                        truncated += 1;
                    }
                    g1[i][j] = c;
                }
                if truncated > 0 {
                    flags.push(format!("g{j}_truncated:{truncated}"));
                }
                g_learners.push(sl.fit.learner.clone());
            }
        }
    }
    let a_obs: Vec<Vec<u8>> = (0..n).map(|i| a_pos.iter().map(|&p| hist.get(i, p) as u8).collect()).collect();

    let mut pseudo: Vec<f64> = (0..n).map(|i| series.block(times[i]).y).collect();
    let mut eic = vec![0.0; n];
    let mut levels = Vec::with_capacity(nodes);
    let mut psi_levels_eps = Vec::with_capacity(nodes);
    for j in (1..=nodes).rev() {
        let m = j - 1;
        let xj = hist.prefix_columns(a_pos[m] + 1);
        let sl = seq_regress_level(&pseudo, &xj, &config.q_library, &config.cv)?;
        let q_obs = sl.fit.predict(&xj)?;
        let mut h_prev = Vec::with_capacity(n);
        let mut h_obs = Vec::with_capacity(n);
        for i in 0..n {
            let hp = cum_ratio_clever(&g1[i], &gs1[i], &a_obs[i], m, 0.0)
                .map_err(|e| with_time(e, times[i]))?;
            h_prev.push(hp);
            h_obs.push(cum_ratio_clever(&g1[i], &gs1[i], &a_obs[i], j, 0.0).map_err(|e| with_time(e, times[i]))?);
        }
        let offset: Vec<f64> = q_obs.iter().map(|&q| logit(q)).collect();
        let fl = fit_fluctuation(&offset, &h_obs, &pseudo, config.options.eps_bound)
            .map_err(|e| level_error(e, j))?;
        let eps = fl.epsilon;
        let mut level_score = 0.0;
        for i in 0..n {
            let qs = update_prob(q_obs[i], eps, h_obs[i]);
            let d = h_obs[i] * (pseudo[i] - qs);
            eic[i] += d;
            level_score += d;
        }
        let level_score = (level_score / n as f64).abs();

        let a_name = hist.names()[a_pos[m]].clone();
        let q1 = sl.fit.predict(&xj.with_column_value(&a_name, 1.0)?)?;
        let q0 = sl.fit.predict(&xj.with_column_value(&a_name, 0.0)?)?;
        let mut next = Vec::with_capacity(n);
        for i in 0..n {
            let gs = gs1[i][m];
            let q1s = if gs > 0.0 { update_prob(q1[i], eps, h_prev[i] * gs / g1[i][m]) } else { 0.0 };
            let q0s = if gs < 1.0 { update_prob(q0[i], eps, h_prev[i] * (1.0 - gs) / (1.0 - g1[i][m])) } else { 0.0 };
            next.push(integrate_gstar(q0s, q1s, gs));
        }
        pseudo = next;
        psi_levels_eps.push(eps);
        levels.push(LevelFit { level: j, fit: sl.fit, epsilon: eps, score_residual: level_score });
    }
    let psi = pseudo.iter().sum::<f64>() / n as f64;
    let mut report = TmleReport::assemble(
        "ltmle_mean",
        psi,
        None,
        *psi_levels_eps.last().expect("at least one level"),
        eic,
        times,
        config.options.alpha,
        &levels.first().map(|l| l.fit.learner.clone()).unwrap_or_default(),
        &g_learners.join(","),
        flags,
    );
    report.level_epsilons = levels.iter().map(|l| l.epsilon).collect();
    report.level_score_residuals = levels.iter().map(|l| l.score_residual).collect();
    Ok((report, SeqFitStack { levels, g_learners }))
}

fn with_time(e: Error, t: usize) -> Error {
    match e {
        Error::Positivity { node, prob, delta, .. } => Error::Positivity { t, node, prob, delta },
        other => other,
    }
}

fn level_error(e: Error, level: usize) -> Error {
    match e {
        Error::Divergence(msg) => Error::Divergence(format!("level L({level}): {msg}")),
        other => other,
    }
}
