use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{dot, logit, sigmoid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub iterations: usize,
    pub converged: bool,
    /// Mean log-loss plus the L1 penalty at the returned coefficients.
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoLogisticModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    pub report: ConvergenceReport,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoOptions {
    /// Stop when no parameter moves more than this in one iteration.
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iter: 10_000,
        }
    }
}

pub(crate) fn check_labels(ys: &[u8]) -> Result<()> {
    if ys.iter().any(|y| *y > 1) {
        return Err(Error::InvalidInput("labels must be 0 or 1".into()));
    }
    Ok(())
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Mean log-loss and its gradient; `theta = [intercept, w...]`.
fn loss_and_grad(xs: &[Vec<f64>], ys: &[u8], theta: &[f64]) -> (f64, Vec<f64>) {
    let m = xs.len() as f64;
    let mut grad = vec![0.0; theta.len()];
    let mut loss = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let z = theta[0] + dot(&theta[1..], x);
        let p = sigmoid(z);
        // log(1 + e^z) - y z, computed stably
        loss += z.max(0.0) + (-z.abs()).exp().ln_1p() - y as f64 * z;
        let r = p - y as f64;
        grad[0] += r;
        for (g, xi) in grad[1..].iter_mut().zip(x) {
            *g += r * xi;
        }
    }
    grad.iter_mut().for_each(|g| *g /= m);
    (loss / m, grad)
}

/// Lipschitz constant of the mean log-loss gradient: `lambda_max(X'X) / (4m)`
/// with the intercept column included.
fn lipschitz(xs: &[Vec<f64>]) -> f64 {
    let d = xs[0].len() + 1;
    let mut gram = DMatrix::<f64>::zeros(d, d);
    for x in xs {
        let row: Vec<f64> = std::iter::once(1.0).chain(x.iter().copied()).collect();
        for i in 0..d {
            for j in i..d {
                gram[(i, j)] += row[i] * row[j];
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            gram[(i, j)] = gram[(j, i)];
        }
    }
    let top = SymmetricEigen::new(gram).eigenvalues.max();
    (top / (4.0 * xs.len() as f64)).max(1e-12)
}

pub fn fit_lasso_logistic(xs: &[Vec<f64>], ys: &[u8], lambda: f64) -> Result<LassoLogisticModel> {
    fit_lasso_logistic_with(xs, ys, lambda, LassoOptions::default())
}

/// Minimizes `mean log-loss + lambda ||w||_1` by accelerated proximal
/// gradient (soft-thresholding, step `1/L`, adaptive momentum restart).
/// The intercept is never penalized.
pub fn fit_lasso_logistic_with(
    xs: &[Vec<f64>],
    ys: &[u8],
    lambda: f64,
    opts: LassoOptions,
) -> Result<LassoLogisticModel> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(Error::InvalidInput(format!(
            "{} rows and {} labels",
            xs.len(),
            ys.len()
        )));
    }
    check_labels(ys)?;
    if !(lambda >= 0.0) {
        return Err(Error::InvalidInput("lambda must be non-negative".into()));
    }
    let d = xs[0].len();
    if xs.iter().any(|x| x.len() != d) {
        return Err(Error::InvalidInput("ragged feature matrix".into()));
    }

    let step = 1.0 / lipschitz(xs);
    let base_rate = ys.iter().map(|y| *y as f64).sum::<f64>() / ys.len() as f64;
    let mut theta = vec![0.0; d + 1];
    if base_rate > 0.0 && base_rate < 1.0 {
        theta[0] = logit(base_rate);
    }
    let mut look = theta.clone();
    let mut t = 1.0f64;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < opts.max_iter {
        iterations += 1;
        let (_, grad) = loss_and_grad(xs, ys, &look);
        let mut next: Vec<f64> = look.iter().zip(&grad).map(|(v, g)| v - step * g).collect();
        for v in next[1..].iter_mut() {
            *v = soft_threshold(*v, step * lambda);
        }

        let change = next
            .iter()
            .zip(&theta)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);

        // restart momentum when the step points against the last move
        let against: f64 = look
            .iter()
            .zip(&next)
            .zip(&theta)
            .map(|((y, n), o)| (y - n) * (n - o))
            .sum();
        if against > 0.0 {
            t = 1.0;
        }
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let momentum = (t - 1.0) / t_next;
        look = next
            .iter()
            .zip(&theta)
            .map(|(n, o)| n + momentum * (n - o))
            .collect();
        theta = next;
        t = t_next;

        if !theta.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("fitting lasso logistic regression".into()));
        }
        if change < opts.tolerance {
            converged = true;
            break;
        }
    }

    let (loss, _) = loss_and_grad(xs, ys, &theta);
    let objective = loss + lambda * theta[1..].iter().map(|w| w.abs()).sum::<f64>();
    if !converged {
        log::warn!("lasso logistic stopped after {iterations} iterations without converging");
    }
    Ok(LassoLogisticModel {
        intercept: theta[0],
        coefficients: theta[1..].to_vec(),
        lambda,
        report: ConvergenceReport {
            iterations,
            converged,
            objective,
        },
    })
}

pub fn predict_logistic(model: &LassoLogisticModel, x: &[f64]) -> Result<f64> {
    if x.len() != model.coefficients.len() {
        return Err(Error::InvalidInput(format!(
            "model has {} coefficients, input has {} features",
            model.coefficients.len(),
            x.len()
        )));
    }
    Ok(sigmoid(model.intercept + dot(&model.coefficients, x)))
}

/// Mean log-loss of `model` on `(xs, ys)`, without the penalty.
pub fn mean_log_loss(model: &LassoLogisticModel, xs: &[Vec<f64>], ys: &[u8]) -> f64 {
    let theta: Vec<f64> = std::iter::once(model.intercept)
        .chain(model.coefficients.iter().copied())
        .collect();
    loss_and_grad(xs, ys, &theta).0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
        assert_eq!(soft_threshold(0.5, 1.0), 0.0);
    }

    #[test]
    fn prediction_basics() {
        let model = LassoLogisticModel {
            coefficients: vec![0.0, 0.0],
            intercept: 0.0,
            lambda: 0.0,
            report: ConvergenceReport {
                iterations: 0,
                converged: true,
                objective: 0.0,
            },
        };
        assert_eq!(predict_logistic(&model, &[1.0, 2.0]).unwrap(), 0.5);
        let m3 = LassoLogisticModel {
            intercept: 3f64.ln(),
            ..model.clone()
        };
        assert!((predict_logistic(&m3, &[5.0, -5.0]).unwrap() - 0.75).abs() < 1e-15);
        assert!(predict_logistic(&m3, &[1.0]).is_err());

        let pos = LassoLogisticModel {
            coefficients: vec![0.7, -0.2],
            ..model
        };
        let a = predict_logistic(&pos, &[0.1, 1.0]).unwrap();
        let b = predict_logistic(&pos, &[0.2, 1.0]).unwrap();
        assert!(b > a);
    }

    #[test]
    fn rejects_non_binary_labels() {
        let xs = vec![vec![0.0], vec![1.0]];
        assert!(fit_lasso_logistic(&xs, &[0, 2], 0.1).is_err());
        assert!(fit_lasso_logistic(&xs, &[0], 0.1).is_err());
        assert!(fit_lasso_logistic(&xs, &[0, 1], -1.0).is_err());
    }

    #[test]
    fn huge_penalty_zeroes_coefficients() {
        let xs: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()])
            .collect();
        let ys: Vec<u8> = (0..40).map(|i| (i % 3 == 0) as u8).collect();
        let m = fit_lasso_logistic(&xs, &ys, 1e6).unwrap();
        assert!(m.coefficients.iter().all(|w| *w == 0.0));
        let rate = ys.iter().map(|y| *y as f64).sum::<f64>() / 40.0;
        assert!((m.intercept - logit(rate)).abs() < 1e-6, "{}", m.intercept);
        assert!(m.report.converged);
    }
}
