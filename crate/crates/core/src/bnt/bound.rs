//! Soft-count posteriors, the Jensen lower bound `c` and its gradient.
//!
//! For leaf `l` with membership `p_il = p(x_i in l)`:
//!
//! ```text
//! alpha'_l = alpha + sum_i p_il (1 - y_i)
//! beta'_l  = beta  + sum_i p_il y_i
//! c_l      = ln B(alpha'_l, beta'_l) - ln B(alpha, beta)
//! c        = sum_l c_l
//! ```
//!
//! The gradient is back-propagated through the tree in one pass per sample:
//! with `r_n` the probability of reaching gate `n` and `S_n` the
//! membership-weighted sum of leaf sensitivities below `n`,
//! `dc/dlogit_n = r_n g_n (1 - g_n) (S_left - S_right)`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::math::{digamma, ln_beta};

use super::{BntModel, NodeRef};

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub potentials: Vec<f64>,
    pub total: f64,
}

pub(crate) fn check_data(model: &BntModel, xs: &[Vec<f64>], ys: &[u8]) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::InvalidInput("empty training data".into()));
    }
    if xs.len() != ys.len() {
        return Err(Error::InvalidInput(format!(
            "{} rows but {} labels",
            xs.len(),
            ys.len()
        )));
    }
    if let Some(bad) = xs.iter().find(|x| x.len() != model.n_features) {
        return Err(Error::InvalidInput(format!(
            "row has {} features, model expects {}",
            bad.len(),
            model.n_features
        )));
    }
    if ys.iter().any(|y| *y > 1) {
        return Err(Error::InvalidInput("labels must be 0 or 1".into()));
    }
    Ok(())
}

/// Samples per parallel work unit. Partial sums are combined in chunk
/// order, so results do not depend on the thread count.
const CHUNK: usize = 256;

/// Gate values `g` (by gate id) and leaf memberships for one sample.
fn forward(
    model: &BntModel,
    order: &[usize],
    x: &[f64],
    g: &mut [f64],
    reach: &mut [f64],
    leaf: &mut [f64],
) {
    let Some(&root) = order.first() else {
        leaf.iter_mut().for_each(|p| *p = 1.0);
        return;
    };
    for &n in order {
        g[n] = model.gates[n].eval(x);
    }
    reach[root] = 1.0;
    for &n in order {
        let gate = &model.gates[n];
        for (child, r) in [
            (gate.left, reach[n] * g[n]),
            (gate.right, reach[n] * (1.0 - g[n])),
        ] {
            match child {
                NodeRef::Gate(k) => reach[k] = r,
                NodeRef::Leaf(l) => leaf[l] = r,
            }
        }
    }
}

fn add_counts(
    model: &BntModel,
    order: &[usize],
    xs: &[Vec<f64>],
    ys: &[u8],
    g: &mut [f64],
    misses: &mut [f64],
    fills: &mut [f64],
) {
    let n_gates = model.gates.len();
    let mut reach = vec![0.0; n_gates];
    let mut leaf = vec![0.0; model.leaves.len()];
    for (i, (x, &y)) in xs.iter().zip(ys).enumerate() {
        let gi = &mut g[i * n_gates..(i + 1) * n_gates];
        forward(model, order, x, gi, &mut reach, &mut leaf);
        let target = if y == 1 { &mut *fills } else { &mut *misses };
        for (t, p) in target.iter_mut().zip(&leaf) {
            *t += p;
        }
    }
}

/// Per-leaf soft counts plus every sample's gate values, row-major.
fn counts_and_gates(
    model: &BntModel,
    xs: &[Vec<f64>],
    ys: &[u8],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let order = model.gate_preorder();
    let n_gates = model.gates.len();
    let n_leaves = model.leaves.len();
    let mut g = vec![0.0; xs.len() * n_gates];
    let partial: Vec<(Vec<f64>, Vec<f64>)> = if n_gates == 0 {
        let fills = ys.iter().filter(|y| **y == 1).count() as f64;
        vec![(vec![xs.len() as f64 - fills], vec![fills])]
    } else {
        g.par_chunks_mut(CHUNK * n_gates)
            .zip(xs.par_chunks(CHUNK).zip(ys.par_chunks(CHUNK)))
            .map(|(gc, (xc, yc))| {
                let mut misses = vec![0.0; n_leaves];
                let mut fills = vec![0.0; n_leaves];
                add_counts(model, &order, xc, yc, gc, &mut misses, &mut fills);
                (misses, fills)
            })
            .collect()
    };
    let mut misses = vec![0.0; n_leaves];
    let mut fills = vec![0.0; n_leaves];
    for (m, f) in partial {
        misses.iter_mut().zip(&m).for_each(|(a, b)| *a += b);
        fills.iter_mut().zip(&f).for_each(|(a, b)| *a += b);
    }
    (misses, fills, g)
}

/// Soft counts `(sum_i p_il (1 - y_i), sum_i p_il y_i)` per leaf.
pub(crate) fn soft_counts(model: &BntModel, xs: &[Vec<f64>], ys: &[u8]) -> (Vec<f64>, Vec<f64>) {
    let (misses, fills, _) = counts_and_gates(model, xs, ys);
    (misses, fills)
}

fn report_from_counts(model: &BntModel, misses: &[f64], fills: &[f64]) -> BoundReport {
    let a0 = model.hyperparams.prior_alpha;
    let b0 = model.hyperparams.prior_beta;
    let prior = ln_beta(a0, b0);
    let alpha: Vec<f64> = misses.iter().map(|m| a0 + m).collect();
    let beta: Vec<f64> = fills.iter().map(|f| b0 + f).collect();
    let potentials: Vec<f64> = alpha
        .iter()
        .zip(&beta)
        .map(|(a, b)| ln_beta(*a, *b) - prior)
        .collect();
    let total = potentials.iter().sum();
    BoundReport {
        alpha,
        beta,
        potentials,
        total,
    }
}

/// Leaf posteriors, unexplained potentials and the bound `c`; no side effects.
pub fn posterior_and_bound(model: &BntModel, xs: &[Vec<f64>], ys: &[u8]) -> Result<BoundReport> {
    check_data(model, xs, ys)?;
    let (misses, fills) = soft_counts(model, xs, ys);
    Ok(report_from_counts(model, &misses, &fills))
}

impl BntModel {
    /// Recomputes and stores every leaf's posterior and potential; returns `c`.
    pub fn refresh_posteriors(&mut self, xs: &[Vec<f64>], ys: &[u8]) -> Result<f64> {
        let report = posterior_and_bound(self, xs, ys)?;
        for (leaf, ((a, b), c)) in self.leaves.iter_mut().zip(
            report
                .alpha
                .iter()
                .zip(&report.beta)
                .zip(&report.potentials),
        ) {
            leaf.alpha = *a;
            leaf.beta = *b;
            leaf.potential = *c;
        }
        self.fitted = true;
        Ok(report.total)
    }

    pub(crate) fn bound_value(&self, xs: &[Vec<f64>], ys: &[u8]) -> f64 {
        let (misses, fills) = soft_counts(self, xs, ys);
        report_from_counts(self, &misses, &fills).total
    }
}

/// Gradient of `c` with respect to every gate parameter, laid out like
/// [`BntModel::params`]. Also returns the bound at the current weights.
pub fn grad_bound(model: &BntModel, xs: &[Vec<f64>], ys: &[u8]) -> Result<(Vec<f64>, f64)> {
    check_data(model, xs, ys)?;
    let (misses, fills, g) = counts_and_gates(model, xs, ys);
    let report = report_from_counts(model, &misses, &fills);

    let d = model.n_features;
    let stride = d + 1;
    let n_gates = model.gates.len();
    if n_gates == 0 {
        return Ok((Vec::new(), report.total));
    }

    // dc/d(alpha'_l) and dc/d(beta'_l)
    let sens_miss: Vec<f64> = report
        .alpha
        .iter()
        .zip(&report.beta)
        .map(|(a, b)| digamma(*a) - digamma(a + b))
        .collect();
    let sens_fill: Vec<f64> = report
        .alpha
        .iter()
        .zip(&report.beta)
        .map(|(a, b)| digamma(*b) - digamma(a + b))
        .collect();
    let order = model.gate_preorder();

    let partial: Vec<Vec<f64>> = g
        .par_chunks(CHUNK * n_gates)
        .zip(xs.par_chunks(CHUNK).zip(ys.par_chunks(CHUNK)))
        .map(|(gc, (xc, yc))| {
            let mut grad = vec![0.0; n_gates * stride];
            let mut reach = vec![0.0; n_gates];
            let mut below = vec![0.0; n_gates];
            for (i, (x, &y)) in xc.iter().zip(yc).enumerate() {
                let g = &gc[i * n_gates..(i + 1) * n_gates];
                let leaf_sens = if y == 1 { &sens_fill } else { &sens_miss };
                let child_value = |node: NodeRef, below: &[f64]| match node {
                    NodeRef::Leaf(l) => leaf_sens[l],
                    NodeRef::Gate(k) => below[k],
                };
                reach[order[0]] = 1.0;
                for &n in &order {
                    let gate = &model.gates[n];
                    if let NodeRef::Gate(k) = gate.left {
                        reach[k] = reach[n] * g[n];
                    }
                    if let NodeRef::Gate(k) = gate.right {
                        reach[k] = reach[n] * (1.0 - g[n]);
                    }
                }
                for &n in order.iter().rev() {
                    let gate = &model.gates[n];
                    let left = child_value(gate.left, &below);
                    let right = child_value(gate.right, &below);
                    below[n] = g[n] * left + (1.0 - g[n]) * right;

                    let dlogit = reach[n] * g[n] * (1.0 - g[n]) * (left - right);
                    let slot = &mut grad[n * stride..(n + 1) * stride];
                    slot[0] += dlogit;
                    for (s, xi) in slot[1..].iter_mut().zip(x) {
                        *s += dlogit * xi;
                    }
                }
            }
            grad
        })
        .collect();

    let mut grad = vec![0.0; n_gates * stride];
    for p in partial {
        grad.iter_mut().zip(&p).for_each(|(a, b)| *a += b);
    }
    Ok((grad, report.total))
}
