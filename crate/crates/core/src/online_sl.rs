//! Online cross-validation for time-ordered rows and a discrete super learner.
//!
//! Row indices are 0-based and ranges half-open: the fold written
//! `([1..40], [41..70])` in 1-based notation is `train = 0..40`,
//! `validate = 40..70` here. Every validation index exceeds every training
//! index of its fold.

use std::fmt::Write as _;
use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::design::Design;
use crate::error::{Error, Result};
use crate::learners::{neg_loglik, Learner, LearnerFit};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Range<usize>,
    pub validate: Range<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FoldScheme {
    /// Expanding training window `0..e`.
    #[default]
    Recursive,
    /// Training window of the last `t0` rows before `e`.
    Rolling,
    /// Training window fixed at `0..t0`.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub scheme: FoldScheme,
    pub n: usize,
    pub t0: usize,
    pub v: usize,
    /// Advance of the training end between folds.
    pub step: usize,
    pub folds: Vec<Fold>,
}

fn plan(scheme: FoldScheme, n: usize, t0: usize, v: usize) -> Result<FoldPlan> {
    if t0 == 0 || v == 0 {
        return Err(Error::InvalidArgument("t0 and v must be at least 1".into()));
    }
    if t0 + v > n {
        return Err(Error::InsufficientData(format!(
            "t0 = {t0} plus v = {v} exceeds {n} rows"
        )));
    }
    let mut folds = Vec::new();
    let mut e = t0;
    while e < n {
        let train = match scheme {
            FoldScheme::Recursive => 0..e,
            FoldScheme::Rolling => e - t0..e,
            FoldScheme::Fixed => 0..t0,
        };
        folds.push(Fold { train, validate: e..(e + v).min(n) });
        e += v;
    }
    Ok(FoldPlan { scheme, n, t0, v, step: v, folds })
}

/// Expanding-window folds; the last validation block may be short.
pub fn recursive_folds(n: usize, t0: usize, v: usize) -> Result<FoldPlan> {
    plan(FoldScheme::Recursive, n, t0, v)
}

/// Rolling folds with a training window of `window` rows.
pub fn rolling_folds(n: usize, window: usize, v: usize) -> Result<FoldPlan> {
    plan(FoldScheme::Rolling, n, window, v)
}

/// Folds that all train on the first `t0` rows.
pub fn fixed_window_folds(n: usize, t0: usize, v: usize) -> Result<FoldPlan> {
    plan(FoldScheme::Fixed, n, t0, v)
}

/// `max(40, n / 5)`.
pub fn default_t0(n: usize) -> usize {
    40.max(n / 5)
}

pub const DEFAULT_V: usize = 30;

/// Validation-size rule for [`CvConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ValidationSize {
    Rows(usize),
    /// `max(min, ceil((n - t0) / folds))`.
    Folds { folds: usize, min: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvConfig {
    #[serde(default)]
    pub scheme: FoldScheme,
    /// Initial training window; `min(max(40, n/5), n/2)` when absent.
    #[serde(default)]
    pub t0: Option<usize>,
    #[serde(default = "default_validation")]
    pub v: ValidationSize,
}

fn default_validation() -> ValidationSize {
    ValidationSize::Rows(DEFAULT_V)
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig { scheme: FoldScheme::Recursive, t0: None, v: default_validation() }
    }
}

impl CvConfig {
    /// Inner plan used to choose penalties: at most five validation blocks.
    pub fn inner_default() -> Self {
        CvConfig { scheme: FoldScheme::Recursive, t0: None, v: ValidationSize::Folds { folds: 5, min: DEFAULT_V } }
    }

    pub fn plan(&self, n: usize) -> Result<FoldPlan> {
        // the default window never takes more than half of a short series
        let t0 = self.t0.unwrap_or_else(|| default_t0(n).min(n / 2));
        let v = match self.v {
            ValidationSize::Rows(v) => v,
            ValidationSize::Folds { folds, min } => {
                let rest = n.saturating_sub(t0);
                min.min(rest).max(rest.div_ceil(folds.max(1)))
            }
        };
        plan(self.scheme, n, t0, v)
    }
}

/// Online-CV risk of one learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRisk {
    pub learner: String,
    /// Validation-row-weighted mean loss; `+inf` when any fold failed.
    pub risk: f64,
    pub fold_risks: Vec<f64>,
    pub failure: Option<String>,
}

/// Online-CV risk of `learner` on `(x, y)` under `plan`.
pub fn online_cv_risk(learner: &dyn Learner, x: &Design, y: &[f64], plan: &FoldPlan) -> CvRisk {
    let mut fold_risks = Vec::with_capacity(plan.folds.len());
    let mut total = 0.0;
    let mut count = 0usize;
    for (k, fold) in plan.folds.iter().enumerate() {
        let xt = x.slice_rows(fold.train.clone());
        let xv = x.slice_rows(fold.validate.clone());
        let out = learner
            .fit(&xt, &y[fold.train.clone()])
            .and_then(|f| f.predict(&xv));
        match out {
            Ok(pred) => {
                let r = neg_loglik(&pred, &y[fold.validate.clone()]).risk;
                fold_risks.push(r);
                total += r * fold.validate.len() as f64;
                count += fold.validate.len();
            }
            Err(e) => {
                log::debug!("learner {} failed on fold {k}: {e}", learner.name());
                fold_risks.push(f64::INFINITY);
                return CvRisk {
                    learner: learner.name(),
                    risk: f64::INFINITY,
                    fold_risks,
                    failure: Some(format!("fold {k}: {e}")),
                };
            }
        }
    }
    CvRisk { learner: learner.name(), risk: total / count as f64, fold_risks, failure: None }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlFit {
    pub selected: usize,
    pub fit: LearnerFit,
    /// One entry per library member, in library order; empty when the
    /// library has a single member and CV was skipped.
    pub risks: Vec<CvRisk>,
}

impl SlFit {
    pub fn selected_name(&self) -> &str {
        &self.fit.learner
    }

    /// CSV `learner,fold,risk`; fold `all` carries the aggregate.
    pub fn risk_table_csv(&self) -> String {
        let mut s = String::from("learner,fold,risk\n");
        for r in &self.risks {
            for (k, f) in r.fold_risks.iter().enumerate() {
                let _ = writeln!(s, "{},{k},{f}", r.learner);
            }
            let _ = writeln!(s, "{},all,{}", r.learner, r.risk);
        }
        s
    }
}

/// Selects the minimum-risk learner (first in library order on ties) and
/// refits it on all rows. A single-member library is fit directly.
pub fn discrete_super_learner(library: &[Arc<dyn Learner>], x: &Design, y: &[f64], plan: Option<&FoldPlan>) -> Result<SlFit> {
    if library.is_empty() {
        return Err(Error::InvalidArgument("learner library is empty".into()));
    }
    if library.len() == 1 {
        let fit = library[0].fit(x, y)?;
        return Ok(SlFit { selected: 0, fit, risks: Vec::new() });
    }
    let plan = plan.ok_or_else(|| Error::InsufficientData("no fold plan for a multi-learner library".into()))?;
    let risks: Vec<CvRisk> = library.iter().map(|l| online_cv_risk(l.as_ref(), x, y, plan)).collect();
    let mut order: Vec<usize> = Vec::new();
    for (k, r) in risks.iter().enumerate() {
        if r.risk.is_finite() {
            order.push(k);
        }
    }
    // stable sort keeps library order among equal risks
    order.sort_by(|&a, &b| risks[a].risk.total_cmp(&risks[b].risk));
    for &k in &order {
        match library[k].fit(x, y) {
            Ok(fit) => return Ok(SlFit { selected: k, fit, risks }),
            Err(e) => log::debug!("refit of {} on all rows failed: {e}", library[k].name()),
        }
    }
    Err(Error::AllLearnersFailed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{LearnerFit, LearnerSpec};
    use proptest::prelude::*;

    #[test]
    fn recursive_fold_construction() {
        let p = recursive_folds(100, 40, 30).unwrap();
        assert_eq!(
            p.folds,
            vec![Fold { train: 0..40, validate: 40..70 }, Fold { train: 0..70, validate: 70..100 }]
        );
    }

    #[test]
    fn short_last_fold_is_kept() {
        let p = recursive_folds(75, 40, 30).unwrap();
        assert_eq!(p.folds[1].validate, 70..75);
    }

    #[test]
    fn insufficient_rows() {
        assert!(matches!(recursive_folds(50, 60, 30), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn rolling_and_fixed_windows() {
        let r = rolling_folds(100, 40, 30).unwrap();
        assert_eq!(r.folds[1].train, 30..70);
        let f = fixed_window_folds(100, 40, 30).unwrap();
        assert_eq!(f.folds[1].train, 0..40);
    }

    #[derive(Debug)]
    struct Fixed(LearnerFit);
    impl Learner for Fixed {
        fn name(&self) -> String {
            self.0.learner.clone()
        }
        fn fit(&self, x: &Design, _y: &[f64]) -> Result<LearnerFit> {
            let mut f = self.0.clone();
            f.input_names = x.names().to_vec();
            Ok(f)
        }
    }

    #[derive(Debug)]
    struct Failing;
    impl Learner for Failing {
        fn name(&self) -> String {
            "failing".into()
        }
        fn fit(&self, _x: &Design, _y: &[f64]) -> Result<LearnerFit> {
            Err(Error::InvalidArgument("always fails".into()))
        }
    }

    fn fixture(n: usize) -> (Design, Vec<f64>, Vec<f64>) {
        let x: Vec<Vec<f64>> = (0..n).map(|i| vec![(i % 4) as f64]).collect();
        let truth: Vec<f64> = x.iter().map(|r| 0.15 + 0.2 * r[0]).collect();
        let y: Vec<f64> = (0..n).map(|i| if ((i * 7919 + 13) % 100) as f64 / 100.0 < truth[i] { 1.0 } else { 0.0 }).collect();
        (Design::from_rows(vec!["x".into()], &x).unwrap(), y, truth)
    }

    fn half() -> Arc<dyn Learner> {
        Arc::new(Fixed(LearnerFit::constant("half", vec![], 0.5)))
    }

    fn oracle() -> Arc<dyn Learner> {
        Arc::new(Fixed(LearnerFit::custom("oracle", vec![], |r| 0.15 + 0.2 * r[0])))
    }

    #[test]
    fn constant_half_has_log_two_risk() {
        let (x, y, _) = fixture(120);
        let plan = recursive_folds(120, 40, 30).unwrap();
        let r = online_cv_risk(half().as_ref(), &x, &y, &plan);
        assert!((r.risk - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn oracle_risk_matches_hand_evaluation() {
        let (x, y, truth) = fixture(100);
        let plan = recursive_folds(100, 40, 30).unwrap();
        let r = online_cv_risk(oracle().as_ref(), &x, &y, &plan);
        let hand: f64 = (40..100)
            .map(|i| -(y[i] * truth[i].ln() + (1.0 - y[i]) * (1.0 - truth[i]).ln()))
            .sum::<f64>()
            / 60.0;
        assert!((r.risk - hand).abs() < 1e-12);
    }

    #[test]
    fn failing_learner_gets_infinite_risk() {
        let (x, y, _) = fixture(100);
        let plan = recursive_folds(100, 40, 30).unwrap();
        let r = online_cv_risk(&Failing, &x, &y, &plan);
        assert!(r.risk.is_infinite() && r.failure.is_some());
    }

    #[test]
    fn oracle_dominates_constant() {
        let (x, y, _) = fixture(300);
        let plan = recursive_folds(300, 60, 30).unwrap();
        let sl = discrete_super_learner(&[half(), oracle()], &x, &y, Some(&plan)).unwrap();
        assert_eq!(sl.selected, 1);
        let min = sl.risks.iter().map(|r| r.risk).fold(f64::INFINITY, f64::min);
        assert_eq!(sl.risks[sl.selected].risk, min);
    }

    #[test]
    fn single_member_and_ties() {
        let (x, y, _) = fixture(100);
        let plan = recursive_folds(100, 40, 30).unwrap();
        assert_eq!(discrete_super_learner(&[half()], &x, &y, Some(&plan)).unwrap().selected, 0);
        let sl = discrete_super_learner(&[half(), half()], &x, &y, Some(&plan)).unwrap();
        assert_eq!(sl.selected, 0);
    }

    #[test]
    fn all_failing_is_an_error() {
        let (x, y, _) = fixture(100);
        let plan = recursive_folds(100, 40, 30).unwrap();
        let lib: Vec<Arc<dyn Learner>> = vec![Arc::new(Failing), Arc::new(Failing)];
        assert!(matches!(discrete_super_learner(&lib, &x, &y, Some(&plan)), Err(Error::AllLearnersFailed)));
    }

    #[test]
    fn risk_table_lists_every_fold() {
        let (x, y, _) = fixture(100);
        let plan = recursive_folds(100, 40, 30).unwrap();
        let lib = vec![half(), LearnerSpec::glm().into_learner()];
        let sl = discrete_super_learner(&lib, &x, &y, Some(&plan)).unwrap();
        assert_eq!(sl.risk_table_csv().lines().count(), 1 + 2 * 3);
    }

    proptest! {
        #[test]
        fn folds_never_leak(n in 2usize..500, t0 in 1usize..200, v in 1usize..80, scheme in 0u8..3) {
            let scheme = [FoldScheme::Recursive, FoldScheme::Rolling, FoldScheme::Fixed][scheme as usize];
            if let Ok(p) = plan(scheme, n, t0, v) {
                let mut last = 0;
                for f in &p.folds {
                    prop_assert!(f.train.end <= f.validate.start);
                    prop_assert!(!f.validate.is_empty() && f.validate.end <= n);
                    prop_assert!(f.validate.start >= last);
                    last = f.validate.end;
                }
                prop_assert_eq!(last, n);
            } else {
                prop_assert!(t0 + v > n);
            }
        }

        #[test]
        fn dominated_learner_never_changes_selection(seed in 0u64..500) {
            let (x, _, truth) = fixture(150);
            let y: Vec<f64> = (0..150).map(|i| if (((i as u64) * 2654435761 + seed) % 1000) as f64 / 1000.0 < truth[i] { 1.0 } else { 0.0 }).collect();
            let plan = recursive_folds(150, 40, 30).unwrap();
            let base = discrete_super_learner(&[half(), oracle()], &x, &y, Some(&plan)).unwrap();
            let worse: Arc<dyn Learner> = Arc::new(Fixed(LearnerFit::constant("bad", vec![], 0.999)));
            let more = discrete_super_learner(&[half(), oracle(), worse], &x, &y, Some(&plan)).unwrap();
            let strictly_dominated = more.risks[2].risk > base.risks[base.selected].risk;
            if strictly_dominated {
                prop_assert_eq!(more.selected, base.selected);
            }
        }
    }
}
