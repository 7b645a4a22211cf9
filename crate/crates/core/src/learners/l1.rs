//! L1-penalized logistic regression by proximal Newton with inner
//! coordinate descent.
//!
//! Objective: `F(b0, b) = mean loss(y, b0 + X b) + lambda * ||b||_1`, with an
//! unpenalized intercept. Each outer step minimizes the penalized quadratic
//! model by coordinate descent, then backtracks along the step so that `F`
//! never increases.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::loss::{expit, loss_eta};
use super::{
    expand_terms, inner_cv_default, term_names, FitDiagnostics, Formula, LearnerFit, LinearModel,
    Model, DEFAULT_P_MIN,
};
use crate::design::Design;
use crate::error::{Error, Result};
use crate::online_sl::{CvConfig, FoldPlan};

/// Feature columns without an intercept.
#[derive(Debug, Clone, PartialEq)]
pub enum Columns {
    /// Column-major dense values.
    Dense { n: usize, cols: Vec<Vec<f64>> },
    /// 0/1 columns stored as sorted row indices of the ones.
    Indicator { n: usize, cols: Vec<Vec<u32>> },
}

impl Columns {
    pub fn nrows(&self) -> usize {
        match self {
            Columns::Dense { n, .. } | Columns::Indicator { n, .. } => *n,
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            Columns::Dense { cols, .. } => cols.len(),
            Columns::Indicator { cols, .. } => cols.len(),
        }
    }

    pub fn dense_column(&self, j: usize) -> Vec<f64> {
        match self {
            Columns::Dense { cols, .. } => cols[j].clone(),
            Columns::Indicator { n, cols } => {
                let mut c = vec![0.0; *n];
                for &i in &cols[j] {
                    c[i as usize] = 1.0;
                }
                c
            }
        }
    }

    /// `Σ_i x_ij v_i`.
    fn dot(&self, j: usize, v: &[f64]) -> f64 {
        match self {
            Columns::Dense { cols, .. } => cols[j].iter().zip(v).map(|(a, b)| a * b).sum(),
            Columns::Indicator { cols, .. } => cols[j].iter().map(|&i| v[i as usize]).sum(),
        }
    }

    /// `Σ_i w_i x_ij v_i`.
    fn wdot(&self, j: usize, w: &[f64], v: &[f64]) -> f64 {
        match self {
            Columns::Dense { cols, .. } => {
                cols[j].iter().zip(w).zip(v).map(|((a, w), b)| a * w * b).sum()
            }
            Columns::Indicator { cols, .. } => {
                cols[j].iter().map(|&i| w[i as usize] * v[i as usize]).sum()
            }
        }
    }

    /// `Σ_i w_i x_ij²`.
    fn wsq(&self, j: usize, w: &[f64]) -> f64 {
        match self {
            Columns::Dense { cols, .. } => cols[j].iter().zip(w).map(|(a, w)| a * a * w).sum(),
            Columns::Indicator { cols, .. } => cols[j].iter().map(|&i| w[i as usize]).sum(),
        }
    }

    /// `v += a x_j`.
    fn axpy(&self, j: usize, a: f64, v: &mut [f64]) {
        match self {
            Columns::Dense { cols, .. } => {
                for (vi, x) in v.iter_mut().zip(&cols[j]) {
                    *vi += a * x;
                }
            }
            Columns::Indicator { cols, .. } => {
                for &i in &cols[j] {
                    v[i as usize] += a;
                }
            }
        }
    }

    /// `b0 + X b`.
    pub fn linear_predictor(&self, b0: f64, b: &[f64]) -> Vec<f64> {
        let mut eta = vec![b0; self.nrows()];
        for (j, &bj) in b.iter().enumerate() {
            if bj != 0.0 {
                self.axpy(j, bj, &mut eta);
            }
        }
        eta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOptions {
    /// KKT residual tolerance.
    pub tol: f64,
    pub max_outer: usize,
    pub max_sweeps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-8, max_outer: 200, max_sweeps: 2000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct L1Solution {
    pub lambda: f64,
    pub intercept: f64,
    pub beta: Vec<f64>,
    pub objective: f64,
    /// Objective after every accepted outer step, starting at the initial point.
    pub objective_trace: Vec<f64>,
    pub kkt_residual: f64,
    pub iterations: usize,
}

impl L1Solution {
    pub fn l1_norm(&self) -> f64 {
        self.beta.iter().map(|b| b.abs()).sum()
    }
}

fn penalized_objective(y: &[f64], eta: &[f64], beta: &[f64], lambda: f64) -> f64 {
    let n = y.len() as f64;
    eta.iter().zip(y).map(|(&e, &y)| loss_eta(y, e)).sum::<f64>() / n
        + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

fn soft_threshold(z: f64, g: f64) -> f64 {
    if z > g {
        z - g
    } else if z < -g {
        z + g
    } else {
        0.0
    }
}

/// Mean gradient of the unpenalized loss: `(g0, g)`.
fn gradient(x: &Columns, y: &[f64], eta: &[f64]) -> (f64, Vec<f64>) {
    let n = y.len() as f64;
    let r: Vec<f64> = eta.iter().zip(y).map(|(&e, &y)| expit(e) - y).collect();
    let g0 = r.iter().sum::<f64>() / n;
    let g = (0..x.ncols()).map(|j| x.dot(j, &r) / n).collect();
    (g0, g)
}

/// Largest KKT violation of the penalized problem.
pub fn kkt_residual(x: &Columns, y: &[f64], b0: f64, beta: &[f64], lambda: f64) -> f64 {
    let eta = x.linear_predictor(b0, beta);
    let (g0, g) = gradient(x, y, &eta);
    let mut worst = g0.abs();
    for (gj, &bj) in g.iter().zip(beta) {
        let v = if bj != 0.0 {
            (gj + lambda * bj.signum()).abs()
        } else {
            (gj.abs() - lambda).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// Smallest penalty at which every slope is zero.
pub fn lambda_max(x: &Columns, y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let ybar = y.iter().sum::<f64>() / n;
    let r: Vec<f64> = y.iter().map(|v| v - ybar).collect();
    (0..x.ncols()).map(|j| (x.dot(j, &r) / n).abs()).fold(0.0, f64::max)
}

/// Solves the L1 problem at `lambda`, optionally warm-started.
/// Column count up to which the quadratic model is solved through its
/// weighted Gram matrix instead of row passes.
const GRAM_MAX_COLS: usize = 48;

/// Row-pass coordinate descent; returns `(d0, d, X d + d0)`.
#[allow(clippy::too_many_arguments)]
fn cd_rows(
    x: &Columns,
    w: &[f64],
    g: &[f64],
    g0: f64,
    h0: f64,
    h: &[f64],
    beta: &[f64],
    lambda: f64,
    tol: f64,
    max_sweeps: usize,
) -> (f64, Vec<f64>, Vec<f64>) {
    let n = x.nrows();
    let p = x.ncols();
    let nf = n as f64;
    let mut d0 = 0.0;
    let mut d = vec![0.0; p];
    let mut u = vec![0.0; n];
    for _ in 0..max_sweeps {
        let mut max_change: f64 = 0.0;
        let grad0 = g0 + w.iter().zip(&u).map(|(w, u)| w * u).sum::<f64>() / nf;
        let step0 = -grad0 / h0;
        if step0 != 0.0 {
            d0 += step0;
            for ui in u.iter_mut() {
                *ui += step0;
            }
            max_change = max_change.max(step0.abs() * h0.sqrt());
        }
        for j in 0..p {
            if h[j] <= 0.0 {
                continue;
            }
            let gradj = g[j] + x.wdot(j, w, &u) / nf;
            let cur = beta[j] + d[j];
            let new = soft_threshold(cur - gradj / h[j], lambda / h[j]);
            let delta = new - cur;
            if delta != 0.0 {
                d[j] += delta;
                x.axpy(j, delta, &mut u);
                max_change = max_change.max(delta.abs() * h[j].sqrt());
            }
        }
        if max_change < tol {
            break;
        }
    }
    (d0, d, u)
}

/// Covariance-form coordinate descent on the same quadratic model.
#[allow(clippy::too_many_arguments)]
fn cd_gram(
    x: &Columns,
    w: &[f64],
    g: &[f64],
    g0: f64,
    h0: f64,
    h: &[f64],
    beta: &[f64],
    lambda: f64,
    tol: f64,
    max_sweeps: usize,
) -> (f64, Vec<f64>, Vec<f64>) {
    let n = x.nrows();
    let p = x.ncols();
    let nf = n as f64;
    let cols: Vec<Vec<f64>> = (0..p).map(|j| x.dense_column(j)).collect();
    let wcols: Vec<Vec<f64>> = cols.iter().map(|c| c.iter().zip(w).map(|(a, w)| a * w).collect()).collect();
    // m_j = mean(w x_j), gram[j][k] = mean(w x_j x_k)
    let m: Vec<f64> = wcols.iter().map(|c| c.iter().sum::<f64>() / nf).collect();
    let mut gram = vec![vec![0.0; p]; p];
    for j in 0..p {
        for k in 0..=j {
            let v = wcols[j].iter().zip(&cols[k]).map(|(a, b)| a * b).sum::<f64>() / nf;
            gram[j][k] = v;
            gram[k][j] = v;
        }
    }
    let mut d0 = 0.0;
    let mut d = vec![0.0; p];
    let mut gd = vec![0.0; p]; // gram · d
    let mut md = 0.0; // m · d
    for _ in 0..max_sweeps {
        let mut max_change: f64 = 0.0;
        let step0 = -(g0 + h0 * d0 + md) / h0;
        if step0 != 0.0 {
            d0 += step0;
            max_change = max_change.max(step0.abs() * h0.sqrt());
        }
        for j in 0..p {
            if h[j] <= 0.0 {
                continue;
            }
            let gradj = g[j] + m[j] * d0 + gd[j];
            let cur = beta[j] + d[j];
            let new = soft_threshold(cur - gradj / h[j], lambda / h[j]);
            let delta = new - cur;
            if delta != 0.0 {
                d[j] += delta;
                md += delta * m[j];
                for (gk, row) in gd.iter_mut().zip(&gram) {
                    *gk += delta * row[j];
                }
                max_change = max_change.max(delta.abs() * h[j].sqrt());
            }
        }
        if max_change < tol {
            break;
        }
    }
    let mut u = vec![d0; n];
    for (j, &dj) in d.iter().enumerate() {
        if dj != 0.0 {
            for (ui, xij) in u.iter_mut().zip(&cols[j]) {
                *ui += dj * xij;
            }
        }
    }
    (d0, d, u)
}

pub fn solve_l1(
    x: &Columns,
    y: &[f64],
    lambda: f64,
    warm: Option<(f64, &[f64])>,
    opts: &SolverOptions,
) -> Result<L1Solution> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("lambda {lambda} must be nonnegative")));
    }
    let n = x.nrows();
    let p = x.ncols();
    if y.len() != n {
        return Err(Error::Dimension { expected: n, got: y.len() });
    }
    let nf = n as f64;
    let (mut b0, mut beta) = match warm {
        Some((b0, b)) if b.len() == p => (b0, b.to_vec()),
        _ => {
            let ybar = (y.iter().sum::<f64>() / nf).clamp(1e-6, 1.0 - 1e-6);
            ((ybar / (1.0 - ybar)).ln(), vec![0.0; p])
        }
    };
    let mut eta = x.linear_predictor(b0, &beta);
    let mut f = penalized_objective(y, &eta, &beta, lambda);
    let mut trace = vec![f];
    let mut kkt = kkt_residual(x, y, b0, &beta, lambda);
    let mut outer = 0;
    while kkt > opts.tol {
        if outer >= opts.max_outer {
            return Err(Error::NonConvergence {
                iterations: outer,
                residual: kkt,
                last_iterate: std::iter::once(b0).chain(beta.iter().copied()).collect(),
            });
        }
        outer += 1;
        let q: Vec<f64> = eta.iter().map(|&e| expit(e)).collect();
        let w: Vec<f64> = q.iter().map(|q| (q * (1.0 - q)).max(1e-10)).collect();
        let resid: Vec<f64> = q.iter().zip(y).map(|(q, y)| q - y).collect();
        let g0 = resid.iter().sum::<f64>() / nf;
        let g: Vec<f64> = (0..p).map(|j| x.dot(j, &resid) / nf).collect();
        let h0 = w.iter().sum::<f64>() / nf;
        let h: Vec<f64> = (0..p).map(|j| x.wsq(j, &w) / nf).collect();

        // coordinate descent on the quadratic model, in step variables d
        let inner_tol = (1e-3 * kkt).clamp(1e-14, 1e-6);
        let (d0, d, u) = if p <= GRAM_MAX_COLS {
            cd_gram(x, &w, &g, g0, h0, &h, &beta, lambda, inner_tol, opts.max_sweeps)
        } else {
            cd_rows(x, &w, &g, g0, h0, &h, &beta, lambda, inner_tol, opts.max_sweeps)
        };

        // backtracking on the true objective
        let l1_old: f64 = beta.iter().map(|b| b.abs()).sum();
        let l1_new: f64 = beta.iter().zip(&d).map(|(b, d)| (b + d).abs()).sum();
        let descent = g0 * d0 + g.iter().zip(&d).map(|(g, d)| g * d).sum::<f64>() + lambda * (l1_new - l1_old);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand_beta: Vec<f64> = beta.iter().zip(&d).map(|(b, d)| b + t * d).collect();
            let cand_eta: Vec<f64> = eta.iter().zip(&u).map(|(e, u)| e + t * u).collect();
            let fc = penalized_objective(y, &cand_eta, &cand_beta, lambda);
            if fc <= f + 1e-4 * t * descent.min(0.0) {
                accepted = Some((cand_beta, cand_eta, fc, t));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((nb, ne, fc, t)) => {
                b0 += t * d0;
                beta = nb;
                // recompute exactly to avoid drift from incremental updates
                eta = x.linear_predictor(b0, &beta);
                let _ = ne;
                f = fc.min(penalized_objective(y, &eta, &beta, lambda));
                trace.push(f);
            }
            None => {
                return Err(Error::NonConvergence {
                    iterations: outer,
                    residual: kkt,
                    last_iterate: std::iter::once(b0).chain(beta.iter().copied()).collect(),
                })
            }
        }
        kkt = kkt_residual(x, y, b0, &beta, lambda);
    }
    Ok(L1Solution {
        lambda,
        intercept: b0,
        beta,
        objective: f,
        objective_trace: trace,
        kkt_residual: kkt,
        iterations: outer,
    })
}

/// Penalty grid settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathConfig {
    /// Explicit grid; a geometric grid from `lambda_max` is used when absent.
    #[serde(default)]
    pub grid: Option<Vec<f64>>,
    #[serde(default = "default_n_lambda")]
    pub n_lambda: usize,
    /// Smallest grid value as a fraction of `lambda_max`.
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    /// Online CV used to pick a grid value.
    #[serde(default = "inner_cv_default")]
    pub cv: CvConfig,
    #[serde(default)]
    pub solver: SolverOptions,
}

fn default_n_lambda() -> usize {
    10
}

fn default_ratio() -> f64 {
    1e-3
}

impl Default for PathConfig {
    fn default() -> Self {
        PathConfig {
            grid: None,
            n_lambda: default_n_lambda(),
            ratio: default_ratio(),
            cv: inner_cv_default(),
            solver: SolverOptions::default(),
        }
    }
}

impl PathConfig {
    /// Grid sorted in decreasing order.
    pub fn grid_for(&self, lmax: f64) -> Result<Vec<f64>> {
        let mut grid = match &self.grid {
            Some(g) if !g.is_empty() => g.clone(),
            Some(_) => return Err(Error::InvalidArgument("lambda grid is empty".into())),
            None => {
                let k = self.n_lambda.max(1);
                let hi = if lmax > 0.0 { lmax } else { 1e-8 };
                (0..k)
                    .map(|i| {
                        let frac = if k == 1 { 0.0 } else { i as f64 / (k - 1) as f64 };
                        hi * self.ratio.powf(frac)
                    })
                    .collect()
            }
        };
        if grid.iter().any(|l| !(*l >= 0.0)) {
            return Err(Error::InvalidArgument("lambda grid values must be nonnegative".into()));
        }
        grid.sort_by(|a, b| b.total_cmp(a));
        Ok(grid)
    }
}

/// Solutions along a decreasing grid with warm starts.
pub fn solve_path(x: &Columns, y: &[f64], grid: &[f64], opts: &SolverOptions) -> Vec<Result<L1Solution>> {
    let mut out = Vec::with_capacity(grid.len());
    let mut warm: Option<(f64, Vec<f64>)> = None;
    for &lambda in grid {
        let sol = solve_l1(x, y, lambda, warm.as_ref().map(|(b0, b)| (*b0, b.as_slice())), opts);
        if let Ok(s) = &sol {
            warm = Some((s.intercept, s.beta.clone()));
        }
        out.push(sol);
    }
    out
}

/// Online-CV risk per grid value. `features(train, validate)` returns the
/// training and validation columns of one fold.
pub(crate) fn cv_path_risks(
    y: &[f64],
    grid: &[f64],
    plan: &FoldPlan,
    opts: &SolverOptions,
    mut features: impl FnMut(Range<usize>, Range<usize>) -> Result<(Columns, Columns)>,
) -> Result<Vec<f64>> {
    let mut total = vec![0.0; grid.len()];
    let mut count = 0usize;
    for fold in &plan.folds {
        let (xt, xv) = features(fold.train.clone(), fold.validate.clone())?;
        let yt = &y[fold.train.clone()];
        let yv = &y[fold.validate.clone()];
        for (k, sol) in solve_path(&xt, yt, grid, opts).into_iter().enumerate() {
            match sol {
                Ok(s) => {
                    let eta = xv.linear_predictor(s.intercept, &s.beta);
                    let q: Vec<f64> = eta.into_iter().map(|e| expit(e).clamp(DEFAULT_P_MIN, 1.0 - DEFAULT_P_MIN)).collect();
                    total[k] += super::neg_loglik(&q, yv).risk * yv.len() as f64;
                }
                Err(_) => total[k] = f64::INFINITY,
            }
        }
        count += yv.len();
    }
    Ok(total.into_iter().map(|t| t / count as f64).collect())
}

/// Index of the smallest finite risk; ties resolve to the larger penalty.
pub(crate) fn argmin_risk(risks: &[f64]) -> Result<usize> {
    let mut best: Option<usize> = None;
    for (k, r) in risks.iter().enumerate() {
        if r.is_finite() && best.is_none_or(|b| *r < risks[b]) {
            best = Some(k);
        }
    }
    best.ok_or_else(|| Error::NonConvergence {
        iterations: 0,
        residual: f64::INFINITY,
        last_iterate: Vec::new(),
    })
}

fn linear_fit(x: &Design, terms: Vec<Vec<usize>>, sol: &L1Solution, learner: &str, notes: Vec<String>) -> LearnerFit {
    LearnerFit {
        learner: learner.into(),
        input_names: x.names().to_vec(),
        model: Model::Linear(LinearModel {
            term_names: term_names(&terms, x.names()),
            terms,
            intercept: sol.intercept,
            coef: sol.beta.clone(),
        }),
        p_min: DEFAULT_P_MIN,
        diagnostics: FitDiagnostics {
            iterations: sol.iterations,
            final_loss: sol.objective,
            n_coef: 1 + sol.beta.iter().filter(|b| **b != 0.0).count(),
            ridge_fallback: false,
            lambda: Some(sol.lambda),
            residual: sol.kkt_residual,
            notes,
        },
    }
}

/// L1-penalized logistic regression at a fixed `lambda`.
pub fn fit_l1_logistic(x: &Design, y: &[f64], lambda: f64, formula: &Formula) -> Result<LearnerFit> {
    let terms = formula.resolve(x.names())?;
    let cols = expand_terms(x, &terms);
    let sol = solve_l1(&cols, y, lambda, None, &SolverOptions::default())?;
    Ok(linear_fit(x, terms, &sol, "l1", Vec::new()))
}

/// L1 logistic regression with the penalty chosen by online CV.
pub fn fit_l1_cv(x: &Design, y: &[f64], formula: &Formula, path: &PathConfig) -> Result<LearnerFit> {
    let terms = formula.resolve(x.names())?;
    let cols = expand_terms(x, &terms);
    let grid = path.grid_for(lambda_max(&cols, y))?;
    let plan = path.cv.plan(y.len())?;
    let risks = cv_path_risks(y, &grid, &plan, &path.solver, |tr, va| {
        Ok((expand_terms(&x.slice_rows(tr), &terms), expand_terms(&x.slice_rows(va), &terms)))
    })?;
    let best = argmin_risk(&risks)?;
    let sols = solve_path(&cols, y, &grid[..=best], &path.solver);
    let sol = sols.into_iter().last().expect("nonempty grid")?;
    let note = format!("lambda {} selected from {} grid values", grid[best], grid.len());
    Ok(linear_fit(x, terms, &sol, "l1", vec![note]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::glm::fit_logistic_glm;
    use crate::learners::loss::logit;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn fixture(seed: u64, n: usize, p: usize) -> (Design, Vec<f64>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()).collect();
        let y = rows
            .iter()
            .map(|r| {
                let eta = 0.3 + 1.2 * r[0] - 0.8 * r.get(1).copied().unwrap_or(0.0);
                if rng.random::<f64>() < expit(eta) { 1.0 } else { 0.0 }
            })
            .collect();
        let names = (0..p).map(|j| format!("x{j}")).collect();
        (Design::from_rows(names, &rows).unwrap(), y)
    }

    fn dense(x: &Design) -> Columns {
        expand_terms(x, &Formula::MainEffects.resolve(x.names()).unwrap())
    }

    #[test]
    fn zero_penalty_matches_glm() {
        let (x, y) = fixture(3, 80, 3);
        let l1 = fit_l1_logistic(&x, &y, 0.0, &Formula::MainEffects).unwrap();
        let glm = fit_logistic_glm(&x, &y, &Formula::MainEffects).unwrap();
        let (a, b) = (l1.predict(&x).unwrap(), glm.predict(&x).unwrap());
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-6);
        }
    }

    #[test]
    fn lambda_max_gives_null_model() {
        let (x, y) = fixture(5, 60, 4);
        let cols = dense(&x);
        let lmax = lambda_max(&cols, &y);
        let sol = solve_l1(&cols, &y, lmax * 1.0001, None, &SolverOptions::default()).unwrap();
        assert!(sol.beta.iter().all(|b| *b == 0.0));
        let ybar = y.iter().sum::<f64>() / y.len() as f64;
        assert!((sol.intercept - logit(ybar)).abs() < 1e-8);
        let below = solve_l1(&cols, &y, lmax * 0.9, None, &SolverOptions::default()).unwrap();
        assert!(below.beta.iter().any(|b| *b != 0.0));
    }

    /// Projected gradient on the split `b = u - v`, `u, v >= 0` (independent solver).
    fn projected_gradient_objective(cols: &Columns, y: &[f64], lambda: f64) -> f64 {
        let p = cols.ncols();
        let n = y.len() as f64;
        let dense: Vec<Vec<f64>> = (0..p).map(|j| cols.dense_column(j)).collect();
        let mut b0 = 0.0;
        let mut u = vec![0.0; p];
        let mut v = vec![0.0; p];
        let step = 0.5;
        for _ in 0..200_000 {
            let eta: Vec<f64> = (0..y.len()).map(|i| b0 + (0..p).map(|j| (u[j] - v[j]) * dense[j][i]).sum::<f64>()).collect();
            let r: Vec<f64> = eta.iter().zip(y).map(|(e, y)| expit(*e) - y).collect();
            b0 -= step * r.iter().sum::<f64>() / n;
            for j in 0..p {
                let g = dense[j].iter().zip(&r).map(|(x, r)| x * r).sum::<f64>() / n;
                u[j] = (u[j] - step * (g + lambda)).max(0.0);
                v[j] = (v[j] - step * (-g + lambda)).max(0.0);
            }
        }
        let b: Vec<f64> = u.iter().zip(&v).map(|(a, c)| a - c).collect();
        let eta = cols.linear_predictor(b0, &b);
        penalized_objective(y, &eta, &b, lambda)
    }

    #[test]
    fn penalized_fixture_matches_projected_gradient() {
        let (x, y) = fixture(11, 50, 3);
        let cols = dense(&x);
        let sol = solve_l1(&cols, &y, 0.1, None, &SolverOptions::default()).unwrap();
        let oracle = projected_gradient_objective(&cols, &y, 0.1);
        assert!((sol.objective - oracle).abs() < 1e-6, "{} vs {oracle}", sol.objective);
        assert!(sol.kkt_residual < 1e-8);
    }

    #[test]
    fn indicator_and_dense_columns_agree() {
        let n = 40;
        let idx: Vec<Vec<u32>> = vec![(0..n as u32).filter(|i| i % 3 == 0).collect(), (0..n as u32).filter(|i| i % 2 == 0).collect()];
        let ind = Columns::Indicator { n, cols: idx.clone() };
        let den = Columns::Dense { n, cols: (0..2).map(|j| ind.dense_column(j)).collect() };
        let y: Vec<f64> = (0..n).map(|i| ((i * 5) % 7 < 3) as u8 as f64).collect();
        let a = solve_l1(&ind, &y, 0.01, None, &SolverOptions::default()).unwrap();
        let b = solve_l1(&den, &y, 0.01, None, &SolverOptions::default()).unwrap();
        for (p, q) in a.beta.iter().zip(&b.beta) {
            assert!((p - q).abs() < 1e-9);
        }
    }

    #[test]
    fn cv_fit_selects_from_grid() {
        let (x, y) = fixture(2, 200, 3);
        let fit = fit_l1_cv(&x, &y, &Formula::MainEffects, &PathConfig::default()).unwrap();
        assert!(fit.diagnostics.lambda.is_some());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn objective_trace_is_nonincreasing(seed in 0u64..10_000, lambda in 0.001f64..0.2) {
            let (x, y) = fixture(seed, 60, 4);
            let sol = solve_l1(&dense(&x), &y, lambda, None, &SolverOptions::default()).unwrap();
            for w in sol.objective_trace.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-15);
            }
            prop_assert!(sol.kkt_residual < 1e-8);
        }

        #[test]
        fn l1_norm_nonincreasing_in_lambda(seed in 0u64..10_000) {
            let (x, y) = fixture(seed, 60, 4);
            let cols = dense(&x);
            let grid = PathConfig::default().grid_for(lambda_max(&cols, &y)).unwrap();
            let path: Vec<L1Solution> = solve_path(&cols, &y, &grid, &SolverOptions::default()).into_iter().map(|s| s.unwrap()).collect();
            for w in path.windows(2) {
                // grid decreasing, so the norm should not decrease
                prop_assert!(w[1].l1_norm() >= w[0].l1_norm() - 1e-6);
            }
        }
    }
}
