//! Logistic regression by IRLS, and its L1-penalized variant by proximal
//! gradient with backtracking.

use ndarray::{Array1, Array2, Axis};

use crate::linalg::solve_spd_with_jitter;
use super::{
    labels_f64, sigmoid, transformed_design, validate_inputs, ClassifierKind, FitConfig, FitError,
    ModelParams, ProbClassifier, TrainDiagnostics,
};

/// Total NLL below this means every training point is fitted essentially
/// perfectly, which only happens under separation.
const SEPARATION_NLL: f64 = 1e-6;
const SEPARATION_COEF_NORM: f64 = 1e6;

fn with_intercept(x: &Array2<f64>) -> Array2<f64> {
    let n = x.nrows();
    let ones = Array2::ones((n, 1));
    ndarray::concatenate(Axis(1), &[ones.view(), x.view()]).expect("matching row counts")
}

fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// Total Bernoulli log-likelihood and its gradient with respect to `coef`,
/// on an explicit design matrix (columns map one-to-one to coefficients).
pub fn loglik_and_grad(design: &Array2<f64>, labels: &[u8], coef: &[f64]) -> (f64, Vec<f64>) {
    let beta = Array1::from_vec(coef.to_vec());
    let eta = design.dot(&beta);
    let y = labels_f64(labels);
    let mut ll = 0.0;
    for (&e, &yi) in eta.iter().zip(y.iter()) {
        ll -= softplus(e) - yi * e;
    }
    let resid = &y - &eta.mapv(sigmoid);
    let grad = design.t().dot(&resid);
    (ll, grad.to_vec())
}

fn total_nll(design: &Array2<f64>, y: &Array1<f64>, beta: &Array1<f64>) -> f64 {
    let eta = design.dot(beta);
    eta.iter()
        .zip(y.iter())
        .map(|(&e, &yi)| softplus(e) - yi * e)
        .sum()
}

/// Maximum-likelihood logistic regression via iteratively reweighted least
/// squares, with step halving so the objective never increases. Perfect
/// separation is flagged and the last stable iterate returned.
pub fn fit_logistic(
    features: &Array2<f64>,
    labels: &[u8],
    config: &FitConfig,
) -> Result<ProbClassifier, FitError> {
    config.validate()?;
    validate_inputs(features, labels)?;
    let (x, transform) = transformed_design(features, config);
    let design = with_intercept(&x);
    let y = labels_f64(labels);

    let mut diag = TrainDiagnostics::default();
    if features.nrows() <= features.ncols() {
        diag.warnings
            .push(format!("n = {} <= p = {}", features.nrows(), features.ncols()));
    }

    let q = design.ncols();
    let mut beta = Array1::<f64>::zeros(q);
    let mut obj = total_nll(&design, &y, &beta);
    diag.objective_trace.push(obj);

    for it in 1..=config.max_iterations {
        diag.iterations = it;
        let eta = design.dot(&beta);
        let mu = eta.mapv(sigmoid);
        let w = mu.mapv(|m| (m * (1.0 - m)).max(1e-10));

        // weighted normal equations for the Newton target
        let z = &eta + &((&y - &mu) / &w);
        let wx = &design * &w.view().insert_axis(Axis(1));
        let a = design.t().dot(&wx);
        let b = wx.t().dot(&z);
        let Some((target, jittered)) = solve_spd_with_jitter(&a, &b) else {
            return Err(FitError::Divergence(
                "weighted normal equations are singular".into(),
            ));
        };
        diag.ridge_jitter |= jittered;

        // halve toward the Newton target until the objective descends
        let dir = &target - &beta;
        let mut step = 1.0;
        let mut cand;
        let mut obj_new;
        loop {
            cand = &beta + &(&dir * step);
            obj_new = total_nll(&design, &y, &cand);
            if obj_new <= obj + 1e-12 || step < 1e-4 {
                break;
            }
            step *= 0.5;
        }
        if obj_new > obj + 1e-12 {
            break; // no descent available, keep current iterate
        }
        beta = cand;
        diag.objective_trace.push(obj_new);

        let norm = beta.iter().map(|v| v * v).sum::<f64>().sqrt();
        if obj_new < SEPARATION_NLL || norm > SEPARATION_COEF_NORM {
            diag.separation = true;
            obj = obj_new;
            break;
        }
        let delta = (obj - obj_new).abs();
        obj = obj_new;
        if delta < config.tolerance {
            diag.converged = true;
            break;
        }
    }
    diag.final_objective = obj;

    Ok(ProbClassifier {
        kind: ClassifierKind::Ll,
        transform,
        params: ModelParams::Linear {
            coefficients: beta.to_vec(),
        },
        diagnostics: diag,
    })
}

fn soft_threshold(v: f64, tau: f64) -> f64 {
    if v > tau {
        v - tau
    } else if v < -tau {
        v + tau
    } else {
        0.0
    }
}

/// L1-penalized logistic regression (intercept unpenalized) by proximal
/// gradient with backtracking line search. The soft threshold produces exact
/// zeros in the coefficient vector.
pub fn fit_sparse_logistic(
    features: &Array2<f64>,
    labels: &[u8],
    l1_lambda: f64,
    config: &FitConfig,
) -> Result<ProbClassifier, FitError> {
    config.validate()?;
    if l1_lambda < 0.0 {
        return Err(FitError::BadConfig("l1_lambda must be >= 0".into()));
    }
    validate_inputs(features, labels)?;
    let (x, transform) = transformed_design(features, config);
    let design = with_intercept(&x);
    let y = labels_f64(labels);

    let mut diag = TrainDiagnostics::default();
    let q = design.ncols();
    let mut beta = Array1::<f64>::zeros(q);
    let penalty = |b: &Array1<f64>| l1_lambda * b.iter().skip(1).map(|v| v.abs()).sum::<f64>();

    let mut nll = total_nll(&design, &y, &beta);
    let mut obj = nll + penalty(&beta);
    diag.objective_trace.push(obj);
    let mut t = 1.0;

    for it in 1..=config.max_iterations {
        diag.iterations = it;
        let mu = design.dot(&beta).mapv(sigmoid);
        let grad = design.t().dot(&(&mu - &y));

        // backtrack until the quadratic majorizer holds at the prox point
        let mut cand;
        let mut nll_cand;
        loop {
            let step = &beta - &(&grad * t);
            cand = Array1::from_iter(step.iter().enumerate().map(|(j, &v)| {
                if j == 0 {
                    v
                } else {
                    soft_threshold(v, t * l1_lambda)
                }
            }));
            nll_cand = total_nll(&design, &y, &cand);
            let diff = &cand - &beta;
            let quad = nll
                + grad.dot(&diff)
                + diff.iter().map(|v| v * v).sum::<f64>() / (2.0 * t);
            if nll_cand <= quad + 1e-12 {
                break;
            }
            t *= 0.5;
            if t < 1e-18 {
                return Err(FitError::Divergence(
                    "backtracking step size underflow".into(),
                ));
            }
        }

        let obj_new = nll_cand + penalty(&cand);
        beta = cand;
        nll = nll_cand;
        diag.objective_trace.push(obj_new);

        let norm = beta.iter().map(|v| v * v).sum::<f64>().sqrt();
        if l1_lambda == 0.0 && (nll < SEPARATION_NLL || norm > SEPARATION_COEF_NORM) {
            diag.separation = true;
            obj = obj_new;
            break;
        }
        let delta = (obj - obj_new).abs();
        obj = obj_new;
        if delta < config.tolerance {
            diag.converged = true;
            break;
        }
    }
    diag.final_objective = obj;

    Ok(ProbClassifier {
        kind: ClassifierKind::SparseLl,
        transform,
        params: ModelParams::Linear {
            coefficients: beta.to_vec(),
        },
        diagnostics: diag,
    })
}
