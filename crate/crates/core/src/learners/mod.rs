//! Candidate conditional-mean learners for outcomes in `[0, 1]`.
//!
//! Every learner maps a [`Design`] and outcomes to a [`LearnerFit`], an
//! immutable fitted function whose predictions are clamped to
//! `[p_min, 1 - p_min]`.

pub mod glm;
pub mod hal;
pub mod l1;
pub mod loss;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::design::Design;
use crate::error::{Error, Result};
use crate::online_sl::CvConfig;

pub use glm::fit_logistic_glm;
pub use hal::{fit_hal, hal_basis, HalBasis, HalConfig, HalFit};
pub use l1::{fit_l1_logistic, Columns, L1Solution, PathConfig, SolverOptions};
pub use loss::{expit, logit, neg_loglik, LossEval};

/// Default lower clamp for outcome-model predictions.
pub const DEFAULT_P_MIN: f64 = 1e-6;

/// Terms of a linear predictor over the design columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Formula {
    InterceptOnly,
    /// One term per design column.
    #[default]
    MainEffects,
    /// Main effects of the named columns.
    Columns { columns: Vec<String> },
    /// Every nonempty product of the named columns (all columns when absent).
    Saturated {
        #[serde(default)]
        columns: Option<Vec<String>>,
    },
    /// Explicit products; each inner list is one term.
    Terms { terms: Vec<Vec<String>> },
}

impl Formula {
    /// Resolves the formula to column-index products against `names`.
    pub fn resolve(&self, names: &[String]) -> Result<Vec<Vec<usize>>> {
        let idx = |n: &String| -> Result<usize> {
            names
                .iter()
                .position(|c| c == n)
                .ok_or_else(|| Error::InvalidArgument(format!("formula column `{n}` not in design")))
        };
        match self {
            Formula::InterceptOnly => Ok(Vec::new()),
            Formula::MainEffects => Ok((0..names.len()).map(|j| vec![j]).collect()),
            Formula::Columns { columns } => columns.iter().map(|c| idx(c).map(|j| vec![j])).collect(),
            Formula::Saturated { columns } => {
                let cols: Vec<usize> = match columns {
                    Some(c) => c.iter().map(idx).collect::<Result<_>>()?,
                    None => (0..names.len()).collect(),
                };
                if cols.len() > 16 {
                    return Err(Error::InvalidArgument(
                        "saturated formula limited to 16 columns".into(),
                    ));
                }
                let mut terms = Vec::new();
                for mask in 1u32..(1u32 << cols.len()) {
                    terms.push(
                        (0..cols.len())
                            .filter(|b| mask & (1 << b) != 0)
                            .map(|b| cols[b])
                            .collect::<Vec<_>>(),
                    );
                }
                terms.sort_by_key(|t| t.len());
                Ok(terms)
            }
            Formula::Terms { terms } => terms
                .iter()
                .map(|t| {
                    if t.is_empty() {
                        Err(Error::InvalidArgument("empty formula term".into()))
                    } else {
                        t.iter().map(idx).collect()
                    }
                })
                .collect(),
        }
    }
}

fn term_name(term: &[usize], names: &[String]) -> String {
    term.iter().map(|&j| names[j].as_str()).collect::<Vec<_>>().join(":")
}

/// Dense feature columns of `terms` evaluated on `x`.
pub(crate) fn expand_terms(x: &Design, terms: &[Vec<usize>]) -> Columns {
    let n = x.nrows();
    let cols = terms
        .iter()
        .map(|t| (0..n).map(|i| t.iter().map(|&j| x.get(i, j)).product()).collect())
        .collect();
    Columns::Dense { n, cols }
}

/// Linear predictor `intercept + Σ coef_k Π_{j ∈ term_k} x_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub terms: Vec<Vec<usize>>,
    pub term_names: Vec<String>,
    pub intercept: f64,
    pub coef: Vec<f64>,
}

impl LinearModel {
    fn eta(&self, row: &[f64]) -> f64 {
        self.intercept
            + self
                .terms
                .iter()
                .zip(&self.coef)
                .map(|(t, b)| b * t.iter().map(|&j| row[j]).product::<f64>())
                .sum::<f64>()
    }
}

/// Caller-supplied prediction function, used for oracles and tests.
#[derive(Clone)]
pub struct CustomPredictor(pub Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>);

impl fmt::Debug for CustomPredictor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CustomPredictor")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Constant { p: f64 },
    Linear(LinearModel),
    Hal(hal::HalModel),
    #[serde(skip)]
    Custom(CustomPredictor),
}

/// Training diagnostics carried by every fit.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub final_loss: f64,
    pub n_coef: usize,
    pub ridge_fallback: bool,
    pub lambda: Option<f64>,
    /// Gradient inf-norm (GLM) or KKT residual (L1, HAL) at the solution.
    pub residual: f64,
    pub notes: Vec<String>,
}

/// Fitted conditional mean `(row) -> (0, 1)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LearnerFit {
    pub learner: String,
    pub input_names: Vec<String>,
    pub model: Model,
    pub p_min: f64,
    pub diagnostics: FitDiagnostics,
}

impl LearnerFit {
    pub fn constant(learner: &str, input_names: Vec<String>, p: f64) -> Self {
        LearnerFit {
            learner: learner.to_string(),
            input_names,
            model: Model::Constant { p },
            p_min: DEFAULT_P_MIN,
            diagnostics: FitDiagnostics::default(),
        }
    }

    pub fn custom(
        learner: &str,
        input_names: Vec<String>,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        LearnerFit {
            learner: learner.to_string(),
            input_names,
            model: Model::Custom(CustomPredictor(Arc::new(f))),
            p_min: DEFAULT_P_MIN,
            diagnostics: FitDiagnostics::default(),
        }
    }

    /// Unclamped linear predictor where the model has one.
    fn raw(&self, x: &Design) -> Vec<f64> {
        match &self.model {
            Model::Constant { p } => vec![*p; x.nrows()],
            Model::Linear(m) => (0..x.nrows()).map(|i| expit(m.eta(x.row(i)))).collect(),
            Model::Hal(m) => m.eta(x).into_iter().map(expit).collect(),
            Model::Custom(f) => (0..x.nrows()).map(|i| (f.0)(x.row(i))).collect(),
        }
    }

    /// Clamped predictions, in row order.
    pub fn predict(&self, x: &Design) -> Result<Vec<f64>> {
        x.check_names(&self.input_names)?;
        let lo = self.p_min;
        Ok(self.raw(x).into_iter().map(|p| p.clamp(lo, 1.0 - lo)).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// A fit procedure.
pub trait Learner: Send + Sync + fmt::Debug {
    fn name(&self) -> String;
    fn fit(&self, x: &Design, y: &[f64]) -> Result<LearnerFit>;
}

pub type Library = Vec<Arc<dyn Learner>>;

/// Serializable learner description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LearnerSpec {
    InterceptOnly,
    Constant {
        p: f64,
    },
    Glm {
        #[serde(default)]
        formula: Formula,
    },
    L1 {
        #[serde(default)]
        formula: Formula,
        /// Fixed penalty; selected by online CV over `path` when absent.
        #[serde(default)]
        lambda: Option<f64>,
        #[serde(default)]
        path: PathConfig,
    },
    Hal(HalConfig),
}

impl LearnerSpec {
    pub fn glm() -> Self {
        LearnerSpec::Glm { formula: Formula::MainEffects }
    }

    pub fn l1_cv() -> Self {
        LearnerSpec::L1 { formula: Formula::MainEffects, lambda: None, path: PathConfig::default() }
    }

    pub fn hal() -> Self {
        LearnerSpec::Hal(HalConfig::default())
    }

    pub fn into_learner(self) -> Arc<dyn Learner> {
        Arc::new(self)
    }
}

/// Library from specs, preserving order.
pub fn library(specs: &[LearnerSpec]) -> Library {
    specs.iter().cloned().map(LearnerSpec::into_learner).collect()
}

fn check_outcomes(x: &Design, y: &[f64]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::Dimension { expected: x.nrows(), got: y.len() });
    }
    if y.is_empty() {
        return Err(Error::InvalidArgument("cannot fit on zero rows".into()));
    }
    if y.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidArgument("outcomes must lie in [0, 1]".into()));
    }
    Ok(())
}

impl Learner for LearnerSpec {
    fn name(&self) -> String {
        match self {
            LearnerSpec::InterceptOnly => "intercept_only".into(),
            LearnerSpec::Constant { p } => format!("constant({p})"),
            LearnerSpec::Glm { formula } => match formula {
                Formula::MainEffects => "glm".into(),
                Formula::InterceptOnly => "glm[intercept]".into(),
                Formula::Saturated { .. } => "glm[saturated]".into(),
                _ => "glm[custom]".into(),
            },
            LearnerSpec::L1 { lambda: Some(l), .. } => format!("l1({l})"),
            LearnerSpec::L1 { lambda: None, .. } => "l1(cv)".into(),
            LearnerSpec::Hal(c) => format!("hal(depth={})", c.depth),
        }
    }

    fn fit(&self, x: &Design, y: &[f64]) -> Result<LearnerFit> {
        check_outcomes(x, y)?;
        let mut fit = match self {
            LearnerSpec::InterceptOnly => fit_logistic_glm(x, y, &Formula::InterceptOnly)?,
            LearnerSpec::Constant { p } => {
                if !(*p > 0.0 && *p < 1.0) {
                    return Err(Error::InvalidArgument(format!("constant {p} outside (0, 1)")));
                }
                LearnerFit::constant("constant", x.names().to_vec(), *p)
            }
            LearnerSpec::Glm { formula } => fit_logistic_glm(x, y, formula)?,
            LearnerSpec::L1 { formula, lambda: Some(l), .. } => fit_l1_logistic(x, y, *l, formula)?,
            LearnerSpec::L1 { formula, lambda: None, path } => {
                l1::fit_l1_cv(x, y, formula, path)?
            }
            LearnerSpec::Hal(cfg) => fit_hal(x, y, cfg)?.fit,
        };
        fit.learner = self.name();
        Ok(fit)
    }
}

/// Name of a resolved term list, for diagnostics and JSON.
pub(crate) fn term_names(terms: &[Vec<usize>], names: &[String]) -> Vec<String> {
    terms.iter().map(|t| term_name(t, names)).collect()
}

/// Default inner CV used to pick penalties.
pub(crate) fn inner_cv_default() -> CvConfig {
    CvConfig::inner_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|j| format!("x{j}")).collect()
    }

    #[test]
    fn saturated_terms_enumerate_products() {
        let terms = Formula::Saturated { columns: None }.resolve(&names(3)).unwrap();
        assert_eq!(terms.len(), 7);
        assert!(terms.contains(&vec![0, 1, 2]));
        assert_eq!(terms[0].len(), 1);
    }

    #[test]
    fn unknown_formula_column() {
        assert!(Formula::Columns { columns: vec!["zz".into()] }.resolve(&names(2)).is_err());
    }

    #[test]
    fn intercept_only_predicts_constant_expit() {
        let x = Design::from_rows(names(1), &[vec![0.0], vec![1.0], vec![5.0], vec![2.0]]).unwrap();
        let y = [1.0, 0.0, 0.0, 0.0];
        let fit = LearnerSpec::InterceptOnly.fit(&x, &y).unwrap();
        let p = fit.predict(&x).unwrap();
        for v in &p {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_coefficient_model_predicts_half() {
        let fit = LearnerFit {
            learner: "zero".into(),
            input_names: names(2),
            model: Model::Linear(LinearModel {
                terms: vec![vec![0], vec![1]],
                term_names: vec!["x0".into(), "x1".into()],
                intercept: 0.0,
                coef: vec![0.0, 0.0],
            }),
            p_min: DEFAULT_P_MIN,
            diagnostics: FitDiagnostics::default(),
        };
        let x = Design::from_rows(names(2), &[vec![3.0, -1.0], vec![0.5, 9.0]]).unwrap();
        assert_eq!(fit.predict(&x).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn predict_rejects_wrong_dimension() {
        let fit = LearnerFit::constant("c", names(2), 0.3);
        let x = Design::from_rows(names(1), &[vec![1.0]]).unwrap();
        assert!(matches!(fit.predict(&x), Err(Error::Dimension { .. })));
    }

    #[test]
    fn predictions_are_clamped() {
        let fit = LearnerFit::custom("c", names(1), |_| 1.0);
        let x = Design::from_rows(names(1), &[vec![1.0]]).unwrap();
        assert_eq!(fit.predict(&x).unwrap(), vec![1.0 - DEFAULT_P_MIN]);
    }

    #[test]
    fn spec_round_trips_through_json() {
        for spec in [LearnerSpec::InterceptOnly, LearnerSpec::glm(), LearnerSpec::l1_cv(), LearnerSpec::hal()] {
            let s = serde_json::to_string(&spec).unwrap();
            let back: LearnerSpec = serde_json::from_str(&s).unwrap();
            assert_eq!(back, spec);
        }
        assert!(serde_json::from_str::<LearnerSpec>(r#"{"type":"glm","formla":{}}"#).is_err());
    }

    #[test]
    fn fit_json_is_serializable() {
        let x = Design::from_rows(names(1), &[vec![0.0], vec![1.0], vec![0.0], vec![1.0]]).unwrap();
        let fit = LearnerSpec::glm().fit(&x, &[0.0, 1.0, 1.0, 0.0]).unwrap();
        let json = fit.to_json().unwrap();
        assert!(json.contains("\"intercept\""));
    }

    proptest! {
        #[test]
        fn predictions_follow_row_permutations(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let rows: Vec<Vec<f64>> = (0..30).map(|_| vec![rng.random::<f64>(), f64::from(rng.random::<bool>() as u8)]).collect();
            let y: Vec<f64> = rows.iter().map(|r| if rng.random::<f64>() < 0.3 + 0.4 * r[1] { 1.0 } else { 0.0 }).collect();
            let x = Design::from_rows(names(2), &rows).unwrap();
            let fit = LearnerSpec::glm().fit(&x, &y).unwrap();
            let p = fit.predict(&x).unwrap();
            let perm: Vec<usize> = (0..30).rev().collect();
            let pp = fit.predict(&x.select_rows(&perm)).unwrap();
            for (k, &i) in perm.iter().enumerate() {
                prop_assert_eq!(pp[k], p[i]);
            }
        }
    }
}
