//! Logistic GLM by damped Newton on the quasi-binomial likelihood.

use nalgebra::{DMatrix, DVector};

use super::loss::{expit, loss_eta};
use super::{expand_terms, term_names, Columns, FitDiagnostics, Formula, LearnerFit, LinearModel, Model, DEFAULT_P_MIN};
use crate::design::Design;
use crate::error::{Error, Result};

/// Gradient inf-norm tolerance on the mean loss.
pub const GLM_TOL: f64 = 1e-10;
/// Ridge penalty used after separation or a singular Hessian.
pub const RIDGE_FALLBACK: f64 = 1e-6;
const MAX_ITER: usize = 100;
/// Squared Newton decrement at which further steps cannot lower the loss.
const NEWTON_DECREMENT_TOL: f64 = 1e-20;
const LOCAL_DECREMENT: f64 = 1e-12;
/// Linear predictors beyond this magnitude signal quasi-separation.
const SEPARATION_ETA: f64 = 25.0;

pub(crate) struct NewtonResult {
    pub theta: Vec<f64>,
    pub iterations: usize,
    pub loss: f64,
    pub grad_norm: f64,
}

fn objective(x: &DMatrix<f64>, y: &[f64], theta: &DVector<f64>, ridge: f64) -> f64 {
    let eta = x * theta;
    let n = y.len() as f64;
    eta.iter().zip(y).map(|(&e, &y)| loss_eta(y, e)).sum::<f64>() / n
        + 0.5 * ridge * theta.norm_squared()
}

/// Minimizes mean quasi-binomial loss + `ridge/2 ||theta||²` where `x`
/// already includes the intercept column.
pub(crate) fn newton(x: &DMatrix<f64>, y: &[f64], ridge: f64) -> Result<NewtonResult> {
    let (n, p) = x.shape();
    let nf = n as f64;
    let mut theta = DVector::zeros(p);
    let mut f = objective(x, y, &theta, ridge);
    let yv = DVector::from_column_slice(y);
    for it in 0..MAX_ITER {
        let eta = x * &theta;
        let q = eta.map(expit);
        let grad = x.tr_mul(&(&q - &yv)) / nf + &theta * ridge;
        let gnorm = grad.amax();
        if gnorm <= GLM_TOL {
            return Ok(NewtonResult { theta: theta.as_slice().to_vec(), iterations: it, loss: f, grad_norm: gnorm });
        }
        let w = q.map(|q| q * (1.0 - q));
        let mut xw = x.clone();
        for (i, mut row) in xw.row_iter_mut().enumerate() {
            row *= w[i];
        }
        let mut hess = x.tr_mul(&xw) / nf;
        for j in 0..p {
            hess[(j, j)] += ridge;
        }
        let chol = hess.cholesky().ok_or_else(|| Error::NonConvergence {
            iterations: it,
            residual: gnorm,
            last_iterate: theta.as_slice().to_vec(),
        })?;
        let step = chol.solve(&grad);
        if grad.dot(&step) <= NEWTON_DECREMENT_TOL {
            // predicted decrease is below double precision on the objective
            return Ok(NewtonResult { theta: theta.as_slice().to_vec(), iterations: it, loss: f, grad_norm: gnorm });
        }
        let mut t = 1.0;
        let mut accepted = false;
        // inside the quadratic region the objective change is below rounding
        // noise, so full steps are taken on the decrement alone
        let local = grad.dot(&step) <= LOCAL_DECREMENT;
        for _ in 0..60 {
            let cand = &theta - &step * t;
            let fc = objective(x, y, &cand, ridge);
            if fc <= f || local {
                theta = cand;
                f = fc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // no descent at machine precision
            let eta = x * &theta;
            let q = eta.map(expit);
            let grad = x.tr_mul(&(&q - &yv)) / nf + &theta * ridge;
            let gnorm = grad.amax();
            if gnorm <= GLM_TOL * 100.0 {
                return Ok(NewtonResult { theta: theta.as_slice().to_vec(), iterations: it, loss: f, grad_norm: gnorm });
            }
            return Err(Error::NonConvergence {
                iterations: it,
                residual: gnorm,
                last_iterate: theta.as_slice().to_vec(),
            });
        }
    }
    let eta = x * &theta;
    let q = eta.map(expit);
    let grad = x.tr_mul(&(&q - &yv)) / nf + &theta * ridge;
    Err(Error::NonConvergence {
        iterations: MAX_ITER,
        residual: grad.amax(),
        last_iterate: theta.as_slice().to_vec(),
    })
}

pub(crate) fn with_intercept(cols: &Columns) -> DMatrix<f64> {
    let n = cols.nrows();
    let p = cols.ncols();
    let mut m = DMatrix::from_element(n, p + 1, 1.0);
    for j in 0..p {
        let c = cols.dense_column(j);
        for i in 0..n {
            m[(i, j + 1)] = c[i];
        }
    }
    m
}

/// Maximum-likelihood logistic regression of `y` on the `formula` terms of `x`.
///
/// Falls back to a ridge penalty of [`RIDGE_FALLBACK`] on all coefficients
/// when the unpenalized Newton iteration fails or the fit is separated; the
/// fallback is recorded in the diagnostics.
pub fn fit_logistic_glm(x: &Design, y: &[f64], formula: &Formula) -> Result<LearnerFit> {
    if x.nrows() != y.len() {
        return Err(Error::Dimension { expected: x.nrows(), got: y.len() });
    }
    if y.is_empty() {
        return Err(Error::InvalidArgument("cannot fit on zero rows".into()));
    }
    let terms = formula.resolve(x.names())?;
    let xm = with_intercept(&expand_terms(x, &terms));
    let separated = |r: &NewtonResult| (&xm * DVector::from_column_slice(&r.theta)).amax() > SEPARATION_ETA;
    let (res, ridge_fallback) = match newton(&xm, y, 0.0) {
        Ok(r) if !separated(&r) => (r, false),
        _ => {
            log::debug!("logistic GLM: falling back to ridge {RIDGE_FALLBACK}");
            (newton(&xm, y, RIDGE_FALLBACK)?, true)
        }
    };
    let mut notes = Vec::new();
    if ridge_fallback {
        notes.push(format!("ridge fallback {RIDGE_FALLBACK} after separation or singular Hessian"));
    }
    let diagnostics = FitDiagnostics {
        iterations: res.iterations,
        final_loss: res.loss,
        n_coef: terms.len() + 1,
        ridge_fallback,
        lambda: None,
        residual: res.grad_norm,
        notes,
    };
    Ok(LearnerFit {
        learner: "glm".into(),
        input_names: x.names().to_vec(),
        model: Model::Linear(LinearModel {
            term_names: term_names(&terms, x.names()),
            terms,
            intercept: res.theta[0],
            coef: res.theta[1..].to_vec(),
        }),
        p_min: DEFAULT_P_MIN,
        diagnostics,
    })
}
