//! Model-intrinsic explanations: gate-weight feature importance and
//! probability grids over two features.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{BntModel, NodeRef};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub scores: Vec<f64>,
    /// True when the tree has no gates and the scores are uniform.
    pub degenerate: bool,
}

/// `score_k ∝ sum_gates mass(gate) |w_k| / ||w||_1`, normalized to sum to one,
/// where `mass` is the expected number of rows of `xs` reaching the gate.
pub fn feature_importance(model: &BntModel, xs: &[Vec<f64>]) -> Result<FeatureImportance> {
    let d = model.n_features;
    if model.gates.is_empty() {
        log::warn!("single-leaf tree: feature importance is uniform");
        return Ok(FeatureImportance {
            scores: vec![1.0 / d as f64; d],
            degenerate: true,
        });
    }
    if let Some(bad) = xs.iter().find(|x| x.len() != d) {
        return Err(Error::InvalidInput(format!(
            "row has {} features, model expects {d}",
            bad.len()
        )));
    }
    let order = model.gate_preorder();
    let mut reach = vec![0.0; model.gates.len()];
    let mut mass = vec![0.0; model.gates.len()];
    for x in xs {
        reach[order[0]] = 1.0;
        for &n in &order {
            let gate = &model.gates[n];
            let g = gate.eval(x);
            mass[n] += reach[n];
            if let NodeRef::Gate(k) = gate.left {
                reach[k] = reach[n] * g;
            }
            if let NodeRef::Gate(k) = gate.right {
                reach[k] = reach[n] * (1.0 - g);
            }
        }
    }
    let mut scores = vec![0.0; d];
    for (gate, m) in model.gates.iter().zip(&mass) {
        let l1: f64 = gate.weights.iter().map(|w| w.abs()).sum();
        if l1 == 0.0 {
            continue;
        }
        for (s, w) in scores.iter_mut().zip(&gate.weights) {
            *s += m * w.abs() / l1;
        }
    }
    let total: f64 = scores.iter().sum();
    if total == 0.0 {
        return Ok(FeatureImportance {
            scores: vec![1.0 / d as f64; d],
            degenerate: true,
        });
    }
    scores.iter_mut().for_each(|s| *s /= total);
    Ok(FeatureImportance {
        scores,
        degenerate: false,
    })
}

/// Evenly spaced values `lo..=hi` (a single point at `lo` when `n == 1`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl GridAxis {
    pub fn values(&self) -> Vec<f64> {
        if self.n == 1 {
            return vec![self.lo];
        }
        (0..self.n)
            .map(|k| self.lo + (self.hi - self.lo) * k as f64 / (self.n - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub x_i: f64,
    pub x_j: f64,
    pub probability: f64,
}

/// `predict_proba` over a rectangle in features `i` and `j`, all other
/// features held at `baseline`. Rows are emitted with `i` varying slowest.
pub fn decision_boundary_grid(
    model: &BntModel,
    feature_i: usize,
    feature_j: usize,
    axis_i: GridAxis,
    axis_j: GridAxis,
    baseline: &[f64],
) -> Result<Vec<GridPoint>> {
    if feature_i == feature_j {
        return Err(Error::InvalidInput("grid features must differ".into()));
    }
    let d = model.n_features;
    if feature_i >= d || feature_j >= d {
        return Err(Error::InvalidInput(format!(
            "feature index out of range for {d} features"
        )));
    }
    if baseline.len() != d {
        return Err(Error::InvalidInput(format!(
            "baseline has {} values, model expects {d}",
            baseline.len()
        )));
    }
    if axis_i.n == 0 || axis_j.n == 0 {
        return Err(Error::InvalidInput(
            "grid axes need at least one point".into(),
        ));
    }
    let mut row = baseline.to_vec();
    let mut out = Vec::with_capacity(axis_i.n * axis_j.n);
    for xi in axis_i.values() {
        for xj in axis_j.values() {
            row[feature_i] = xi;
            row[feature_j] = xj;
            out.push(GridPoint {
                x_i: xi,
                x_j: xj,
                probability: model.predict_proba(&row)?,
            });
        }
    }
    Ok(out)
}
