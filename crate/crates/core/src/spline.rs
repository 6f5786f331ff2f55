//! Penalized cubic regression spline used to smooth binned fill rates.
//!
//! Truncated-power basis `1, x, x^2, x^3, (x - k_j)^3_+` on `x` rescaled to
//! `[0, 1]`, with a ridge penalty on the knot coefficients only. A penalty of
//! zero is a plain regression spline; a large penalty tends to the global cubic.

use nalgebra::{DMatrix, DVector};

fn basis_row(x: f64, degree: usize, knots: &[f64]) -> Vec<f64> {
    let mut row: Vec<f64> = (0..=degree).map(|p| x.powi(p as i32)).collect();
    row.extend(knots.iter().map(|k| (x - k).max(0.0).powi(3)));
    row
}

/// Quantiles of `xs` (sorted ascending) at `probs`, linear interpolation.
fn quantiles(sorted: &[f64], probs: &[f64]) -> Vec<f64> {
    let n = sorted.len();
    probs
        .iter()
        .map(|p| {
            let pos = p * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            let frac = pos - lo as f64;
            sorted[lo] * (1.0 - frac) + sorted[hi] * frac
        })
        .collect()
}

/// Fits the smoother to `(x, y)` with weights `w` and returns fitted values at `x`.
///
/// `x` must be sorted ascending. Knots sit at the interior deciles of `x`,
/// thinned so the basis never has more columns than points.
pub fn smooth(x: &[f64], y: &[f64], w: &[f64], penalty: f64) -> Vec<f64> {
    let n = x.len();
    let lo = x[0];
    let hi = x[n - 1];
    if n < 2 || hi <= lo {
        let total: f64 = w.iter().sum();
        let avg = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / total;
        return vec![avg; n];
    }
    let scaled: Vec<f64> = x.iter().map(|v| (v - lo) / (hi - lo)).collect();

    let degree = 3.min(n - 1);
    let max_knots = n.saturating_sub(degree + 1);
    let deciles: Vec<f64> = (1..10).map(|k| k as f64 / 10.0).collect();
    let mut knots = quantiles(&scaled, &deciles);
    knots.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    knots.retain(|k| *k > 0.0 && *k < 1.0);
    if knots.len() > max_knots {
        // keep an evenly spread subset
        let keep = max_knots;
        knots = (0..keep)
            .map(|i| knots[(i * knots.len()) / keep.max(1)])
            .collect();
    }

    let p = degree + 1 + knots.len();
    let mut design = DMatrix::<f64>::zeros(n, p);
    for (i, xi) in scaled.iter().enumerate() {
        for (j, b) in basis_row(*xi, degree, &knots).into_iter().enumerate() {
            design[(i, j)] = b;
        }
    }
    let mean_w = w.iter().sum::<f64>() / n as f64;
    let weights = DVector::from_iterator(n, w.iter().map(|v| v / mean_w));
    let target = DVector::from_column_slice(y);

    let mut wx = design.clone();
    for i in 0..n {
        for j in 0..p {
            wx[(i, j)] *= weights[i];
        }
    }
    let mut gram = design.transpose() * &wx;
    for j in (degree + 1)..p {
        gram[(j, j)] += penalty;
    }
    let rhs = wx.transpose() * &target;

    let coef = match gram.clone().cholesky() {
        Some(chol) => chol.solve(&rhs),
        None => gram
            .svd(true, true)
            .solve(&rhs, 1e-12)
            .unwrap_or_else(|_| DVector::zeros(p)),
    };
    (design * coef).iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_a_cubic_exactly() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.3).collect();
        let y: Vec<f64> = x.iter().map(|v| 1.0 - 0.5 * v + 0.1 * v * v * v).collect();
        let w = vec![1.0; x.len()];
        for penalty in [0.0, 1.0, 1e6] {
            let fit = smooth(&x, &y, &w, penalty);
            for (a, b) in fit.iter().zip(&y) {
                assert!((a - b).abs() < 1e-8, "penalty {penalty}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn handles_tiny_inputs() {
        assert_eq!(smooth(&[1.0, 2.0], &[0.2, 0.4], &[1.0, 1.0], 0.0).len(), 2);
        let flat = smooth(&[3.0, 3.0, 3.0], &[0.0, 1.0, 0.5], &[1.0, 1.0, 2.0], 0.0);
        assert!(flat.iter().all(|v| (v - 0.5).abs() < 1e-12));
    }
}
