//! Highly adaptive lasso: L1 logistic regression on the indicator basis
//! `I(x_s >= u_s)` over covariate subsets `s` with `|s| <= depth`, with knots
//! `u_s` at observed values.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::l1::{argmin_risk, cv_path_risks, lambda_max, solve_path, Columns, PathConfig};
use super::{FitDiagnostics, LearnerFit, Model, DEFAULT_P_MIN};
use crate::design::Design;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HalConfig {
    #[serde(default = "default_depth")]
    pub depth: usize,
    /// Per-column cap on distinct knot values (quantile thinning).
    #[serde(default)]
    pub max_knots: Option<usize>,
    /// Restrict the basis to these design columns.
    #[serde(default)]
    pub columns: Option<Vec<String>>,
    /// Fixed penalty; chosen by online CV when absent.
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Upper bound on the variation norm of the selected fit.
    #[serde(default)]
    pub max_variation_norm: Option<f64>,
    #[serde(default)]
    pub path: PathConfig,
}

fn default_depth() -> usize {
    2
}

impl Default for HalConfig {
    fn default() -> Self {
        HalConfig {
            depth: default_depth(),
            max_knots: None,
            columns: None,
            lambda: None,
            max_variation_norm: None,
            path: PathConfig::default(),
        }
    }
}

/// One basis function `Π_{k} I(x[subset_k] >= knot_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalColumn {
    pub subset: Vec<usize>,
    pub knot: Vec<f64>,
}

impl HalColumn {
    fn active(&self, row: &[f64]) -> bool {
        self.subset.iter().zip(&self.knot).all(|(&j, &u)| row[j] >= u)
    }
}

/// Deduplicated indicator basis built from training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalBasis {
    pub input_names: Vec<String>,
    pub depth: usize,
    pub columns: Vec<HalColumn>,
    /// Candidate count before deduplication.
    pub n_candidates: usize,
    /// Candidates dropped because they equal the intercept.
    pub n_all_ones: usize,
    /// For every dropped duplicate, `(candidate, retained column index)`.
    pub duplicates: Vec<(HalColumn, usize)>,
    pub depth_clamped: bool,
}

impl HalBasis {
    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    /// Basis evaluated on `x`.
    pub fn indicators(&self, x: &Design) -> Columns {
        let n = x.nrows();
        let cols = self
            .columns
            .iter()
            .map(|c| (0..n as u32).filter(|&i| c.active(x.row(i as usize))).collect())
            .collect();
        Columns::Indicator { n, cols }
    }
}

/// Subsets of `cols` of size `1..=depth`, smallest first.
fn subsets(cols: &[usize], depth: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    let mut frontier: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..depth {
        let mut next = Vec::new();
        for s in &frontier {
            let start = s.last().map_or(0, |&last| cols.iter().position(|&c| c == last).unwrap() + 1);
            for &c in &cols[start..] {
                let mut t = s.clone();
                t.push(c);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Knot grid per column: sorted distinct values, thinned to `max_knots`.
fn knot_grid(values: &[f64], max_knots: Option<usize>) -> Vec<f64> {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    match max_knots {
        Some(k) if k >= 1 && v.len() > k => {
            let last = v.len() - 1;
            let mut out: Vec<f64> = (0..k).map(|i| v[(i * last) / (k - 1).max(1)]).collect();
            out.dedup();
            out
        }
        _ => v,
    }
}

fn snap(grid: &[f64], x: f64) -> f64 {
    // largest knot <= x; grid[0] is the observed minimum
    match grid.binary_search_by(|g| g.total_cmp(&x)) {
        Ok(i) => grid[i],
        Err(0) => grid[0],
        Err(i) => grid[i - 1],
    }
}

fn resolve_columns(x: &Design, columns: Option<&[String]>) -> Result<Vec<usize>> {
    match columns {
        None => Ok((0..x.ncols()).collect()),
        Some(names) => names
            .iter()
            .map(|n| {
                x.column_index(n)
                    .ok_or_else(|| Error::InvalidArgument(format!("HAL column `{n}` not in design")))
            })
            .collect(),
    }
}

fn build_basis(x: &Design, depth: usize, max_knots: Option<usize>, columns: Option<&[String]>) -> Result<(HalBasis, Columns)> {
    if depth == 0 {
        return Err(Error::InvalidArgument("HAL depth must be at least 1".into()));
    }
    let cols = resolve_columns(x, columns)?;
    let n = x.nrows();
    let mut depth_eff = depth;
    let mut depth_clamped = false;
    if depth > cols.len() {
        log::warn!("HAL depth {depth} exceeds {} covariates; clamped", cols.len());
        depth_eff = cols.len();
        depth_clamped = true;
    }
    let grids: HashMap<usize, Vec<f64>> = cols.iter().map(|&j| (j, knot_grid(&x.column(j), max_knots))).collect();
    let mut kept: Vec<HalColumn> = Vec::new();
    let mut kept_rows: Vec<Vec<u32>> = Vec::new();
    let mut index: HashMap<Vec<u32>, usize> = HashMap::new();
    let mut duplicates = Vec::new();
    let mut n_candidates = 0;
    let mut n_all_ones = 0;
    for s in subsets(&cols, depth_eff) {
        let mut knots: BTreeSet<Vec<u64>> = BTreeSet::new();
        for i in 0..n {
            let row = x.row(i);
            knots.insert(s.iter().map(|&j| snap(&grids[&j], row[j]).to_bits()).collect());
        }
        // ordered by bit pattern; converted back below
        let mut tuples: Vec<Vec<f64>> = knots.into_iter().map(|k| k.into_iter().map(f64::from_bits).collect()).collect();
        tuples.sort_by(|a, b| {
            a.iter().zip(b).map(|(p, q)| p.total_cmp(q)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
        });
        for knot in tuples {
            n_candidates += 1;
            let col = HalColumn { subset: s.clone(), knot };
            let rows: Vec<u32> = (0..n as u32).filter(|&i| col.active(x.row(i as usize))).collect();
            if rows.len() == n {
                n_all_ones += 1;
                continue;
            }
            if rows.is_empty() {
                continue;
            }
            match index.get(&rows) {
                Some(&k) => duplicates.push((col, k)),
                None => {
                    index.insert(rows.clone(), kept.len());
                    kept.push(col);
                    kept_rows.push(rows);
                }
            }
        }
    }
    let basis = HalBasis {
        input_names: x.names().to_vec(),
        depth: depth_eff,
        columns: kept,
        n_candidates,
        n_all_ones,
        duplicates,
        depth_clamped,
    };
    Ok((basis, Columns::Indicator { n, cols: kept_rows }))
}

/// Indicator basis of `x` at interaction `depth`.
pub fn hal_basis(x: &Design, depth: usize) -> Result<HalBasis> {
    build_basis(x, depth, None, None).map(|(b, _)| b)
}

/// Fitted HAL predictor with only the nonzero basis terms retained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalModel {
    pub intercept: f64,
    pub terms: Vec<(HalColumn, f64)>,
}

impl HalModel {
    pub fn eta(&self, x: &Design) -> Vec<f64> {
        (0..x.nrows())
            .map(|i| {
                let row = x.row(i);
                self.intercept + self.terms.iter().filter(|(c, _)| c.active(row)).map(|(_, b)| b).sum::<f64>()
            })
            .collect()
    }

    pub fn variation_norm(&self) -> f64 {
        self.intercept.abs() + self.terms.iter().map(|(_, b)| b.abs()).sum::<f64>()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HalFit {
    pub fit: LearnerFit,
    pub basis_size: usize,
    pub intercept: f64,
    /// Coefficients over the full retained basis.
    pub beta: Vec<f64>,
    /// `|intercept| + Σ|beta|`.
    pub variation_norm: f64,
    pub lambda: f64,
    pub lambda_grid: Vec<f64>,
    /// Online-CV risk per grid value; empty for a fixed penalty.
    pub cv_risks: Vec<f64>,
    pub objective_trace: Vec<f64>,
    pub kkt_residual: f64,
}

/// HAL fit with the penalty selected by online CV over `cfg.path`.
pub fn fit_hal(x: &Design, y: &[f64], cfg: &HalConfig) -> Result<HalFit> {
    if x.nrows() != y.len() {
        return Err(Error::Dimension { expected: x.nrows(), got: y.len() });
    }
    let cols_spec = cfg.columns.as_deref();
    let (basis, xb) = build_basis(x, cfg.depth, cfg.max_knots, cols_spec)?;
    let (grid, cv_risks, best) = match cfg.lambda {
        Some(l) => (vec![l], Vec::new(), 0),
        None => {
            let grid = cfg.path.grid_for(lambda_max(&xb, y))?;
            let plan = cfg.path.cv.plan(y.len())?;
            let risks = cv_path_risks(y, &grid, &plan, &cfg.path.solver, |tr, va| {
                let xt = x.slice_rows(tr);
                let (fold_basis, ct) = build_basis(&xt, cfg.depth, cfg.max_knots, cols_spec)?;
                Ok((ct, fold_basis.indicators(&x.slice_rows(va))))
            })?;
            let best = argmin_risk(&risks).map_err(|_| Error::Learner {
                learner: "hal".into(),
                msg: "every penalty on the grid diverged".into(),
            })?;
            (grid, risks, best)
        }
    };
    let path = solve_path(&xb, y, &grid, &cfg.path.solver);
    let mut chosen = best;
    let mut notes = Vec::new();
    if let Some(bound) = cfg.max_variation_norm {
        let norm = |k: usize| path[k].as_ref().map(|s| s.intercept.abs() + s.l1_norm()).unwrap_or(f64::INFINITY);
        // grid decreases, so move toward larger penalties
        while chosen > 0 && norm(chosen) > bound {
            chosen -= 1;
        }
        if norm(chosen) > bound {
            return Err(Error::InvalidArgument(format!(
                "variation-norm bound {bound} is below every fit on the grid"
            )));
        }
        if chosen != best {
            notes.push(format!("variation-norm bound {bound} moved lambda from {} to {}", grid[best], grid[chosen]));
        }
    }
    let sol = path.into_iter().nth(chosen).expect("index in grid")?;
    if basis.depth_clamped {
        notes.push(format!("depth {} clamped to {}", cfg.depth, basis.depth));
    }
    let model = HalModel {
        intercept: sol.intercept,
        terms: basis
            .columns
            .iter()
            .zip(&sol.beta)
            .filter(|(_, b)| **b != 0.0)
            .map(|(c, b)| (c.clone(), *b))
            .collect(),
    };
    let variation_norm = sol.intercept.abs() + sol.l1_norm();
    let fit = LearnerFit {
        learner: format!("hal(depth={})", cfg.depth),
        input_names: x.names().to_vec(),
        p_min: DEFAULT_P_MIN,
        diagnostics: FitDiagnostics {
            iterations: sol.iterations,
            final_loss: sol.objective,
            n_coef: 1 + model.terms.len(),
            ridge_fallback: false,
            lambda: Some(sol.lambda),
            residual: sol.kkt_residual,
            notes,
        },
        model: Model::Hal(model),
    };
    Ok(HalFit {
        fit,
        basis_size: basis.len(),
        intercept: sol.intercept,
        beta: sol.beta,
        variation_norm,
        lambda: sol.lambda,
        lambda_grid: grid,
        cv_risks,
        objective_trace: sol.objective_trace,
        kkt_residual: sol.kkt_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::loss::logit;

    fn design(names: &[&str], rows: &[Vec<f64>]) -> Design {
        Design::from_rows(names.iter().map(|s| s.to_string()).collect(), rows).unwrap()
    }

    #[test]
    fn two_knots_one_column() {
        let x = design(&["x"], &[vec![0.2], vec![0.7], vec![0.2]]);
        let b = hal_basis(&x, 1).unwrap();
        assert_eq!(b.columns, vec![HalColumn { subset: vec![0], knot: vec![0.7] }]);
        assert_eq!(b.n_all_ones, 1);
    }

    #[test]
    fn two_binary_columns_depth_two() {
        let x = design(&["x1", "x2"], &[vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]]);
        let b = hal_basis(&x, 2).unwrap();
        let got: Vec<(Vec<usize>, Vec<f64>)> = b.columns.iter().map(|c| (c.subset.clone(), c.knot.clone())).collect();
        assert_eq!(
            got,
            vec![(vec![0], vec![1.0]), (vec![1], vec![1.0]), (vec![0, 1], vec![1.0, 1.0])]
        );
        assert!(!b.duplicates.is_empty());
    }

    #[test]
    fn distinct_values_give_n_minus_one_columns() {
        let rows: Vec<Vec<f64>> = [3.0, 1.0, 4.5, 2.2, 9.0, 0.1].iter().map(|v| vec![*v]).collect();
        let b = hal_basis(&design(&["x"], &rows), 1).unwrap();
        assert_eq!(b.len(), rows.len() - 1);
    }

    #[test]
    fn no_identical_or_all_ones_columns() {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![(i % 3) as f64, (i % 2) as f64, ((i * 7) % 5) as f64]).collect();
        let x = design(&["a", "b", "c"], &rows);
        let b = hal_basis(&x, 3).unwrap();
        let Columns::Indicator { cols, n } = b.indicators(&x) else { unreachable!() };
        let mut seen = std::collections::HashSet::new();
        for c in &cols {
            assert!(c.len() < n && !c.is_empty());
            assert!(seen.insert(c.clone()));
        }
        assert!(b.len() <= 3 * 30 + 3 * 30 + 30);
    }

    #[test]
    fn excessive_depth_is_clamped() {
        let x = design(&["x"], &[vec![0.0], vec![1.0]]);
        let b = hal_basis(&x, 4).unwrap();
        assert!(b.depth_clamped);
        assert_eq!(b.depth, 1);
    }

    #[test]
    fn huge_penalty_gives_null_model() {
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![(i % 4) as f64, (i % 2) as f64]).collect();
        let y: Vec<f64> = (0..50).map(|i| ((i * 3) % 4 == 0) as u8 as f64).collect();
        let x = design(&["a", "b"], &rows);
        let cfg = HalConfig { lambda: Some(1e3), ..HalConfig::default() };
        let fit = fit_hal(&x, &y, &cfg).unwrap();
        let ybar = y.iter().sum::<f64>() / 50.0;
        assert!(fit.beta.iter().all(|b| *b == 0.0));
        assert!((fit.variation_norm - logit(ybar).abs()).abs() < 1e-8);
    }

    #[test]
    fn cv_curve_has_one_risk_per_lambda_and_norm_is_recorded() {
        let rows: Vec<Vec<f64>> = (0..150).map(|i| vec![((i * 13) % 7) as f64, (i % 2) as f64]).collect();
        let y: Vec<f64> = rows.iter().enumerate().map(|(i, r)| ((r[0] > 3.0) as u8 ^ ((i % 5 == 0) as u8)) as f64).collect();
        let x = design(&["a", "b"], &rows);
        let fit = fit_hal(&x, &y, &HalConfig::default()).unwrap();
        assert_eq!(fit.cv_risks.len(), fit.lambda_grid.len());
        let Model::Hal(m) = &fit.fit.model else { unreachable!() };
        assert_eq!(m.variation_norm(), fit.variation_norm);
        assert!(fit.kkt_residual < 1e-8);
        for w in fit.objective_trace.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn variation_norm_bound_is_respected() {
        let rows: Vec<Vec<f64>> = (0..150).map(|i| vec![((i * 13) % 7) as f64]).collect();
        let y: Vec<f64> = rows.iter().map(|r| (r[0] > 3.0) as u8 as f64).collect();
        let x = design(&["a"], &rows);
        let cfg = HalConfig { max_variation_norm: Some(2.0), ..HalConfig::default() };
        let fit = fit_hal(&x, &y, &cfg).unwrap();
        assert!(fit.variation_norm <= 2.0);
    }
}
