//! Adaptive growth of the tree: select a leaf, split it with a random
//! hyperplane, ascend locally, ascend globally, prune. Repeated `n_iter` times.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::math::{digamma, dot, ln_beta, sigmoid};

use super::bound::{check_data, grad_bound};
use super::{AdamConfig, BntHyperparams, BntModel, GateNode, LeafNode, NodeRef, TrainingLogEntry};

/// Adam in ascent form over a fixed-length parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64, cfg: AdamConfig) -> Self {
        Self {
            cfg,
            lr,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// Update direction for this step (to be added to the parameters).
    pub fn direction(&mut self, grad: &[f64]) -> Vec<f64> {
        self.t += 1;
        let AdamConfig {
            beta1,
            beta2,
            epsilon,
        } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - beta2.powi(self.t);
        grad.iter()
            .enumerate()
            .map(|(i, g)| {
                self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
                self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
                let m_hat = self.m[i] / c1;
                let v_hat = self.v[i] / c2;
                self.lr * m_hat / (v_hat.sqrt() + epsilon)
            })
            .collect()
    }
}

/// Runs `steps` Adam ascent steps on the parameters in `active` (indices into
/// [`BntModel::params`]). Returns the bound after every step.
fn ascend(
    model: &mut BntModel,
    xs: &[Vec<f64>],
    ys: &[u8],
    active: &[usize],
    steps: usize,
) -> Result<Vec<f64>> {
    let hp = model.hyperparams.clone();
    let mut adam = Adam::new(active.len(), hp.learning_rate_init, hp.adam.clone());
    let mut params = model.params();
    let mut log = Vec::with_capacity(steps);
    for step in 0..steps {
        let (grad, current) = grad_bound(model, xs, ys)?;
        if step > 0 {
            log.push(current);
        }
        let sub: Vec<f64> = active.iter().map(|&i| grad[i]).collect();
        let dir = adam.direction(&sub);

        let attempts = if hp.backtracking { 12 } else { 1 };
        let mut scale = 1.0;
        for _ in 0..attempts {
            let mut trial = params.clone();
            for (&i, d) in active.iter().zip(&dir) {
                trial[i] += scale * d;
            }
            model.set_params(&trial);
            if !hp.backtracking || model.bound_value(xs, ys) >= current {
                params = trial;
                break;
            }
            scale *= 0.5;
        }
        model.set_params(&params);
    }
    if steps > 0 {
        log.push(model.bound_value(xs, ys));
    }
    Ok(log)
}

/// Bound and gradient for a single gate splitting a leaf whose memberships
/// are `weights`; `rest` is the fixed potential of every other leaf.
pub(crate) fn split_bound_and_grad(
    theta: &[f64],
    xs: &[Vec<f64>],
    ys: &[u8],
    weights: &[f64],
    rest: f64,
    hp: &BntHyperparams,
) -> (f64, Vec<f64>) {
    let (a0, b0) = (hp.prior_alpha, hp.prior_beta);
    let mut counts = [0.0f64; 4]; // left misses, left fills, right misses, right fills
    let mut g = Vec::with_capacity(xs.len());
    for ((x, &y), &r) in xs.iter().zip(ys).zip(weights) {
        let gi = sigmoid(theta[0] + dot(&theta[1..], x));
        g.push(gi);
        let k = y as usize;
        counts[k] += r * gi;
        counts[2 + k] += r * (1.0 - gi);
    }
    let (al, bl) = (a0 + counts[0], b0 + counts[1]);
    let (ar, br) = (a0 + counts[2], b0 + counts[3]);
    let bound = rest + ln_beta(al, bl) + ln_beta(ar, br) - 2.0 * ln_beta(a0, b0);

    let sens = |a: f64, b: f64| {
        let s = digamma(a + b);
        [digamma(a) - s, digamma(b) - s]
    };
    let (sl, sr) = (sens(al, bl), sens(ar, br));
    let mut grad = vec![0.0; theta.len()];
    for (((x, &y), &r), gi) in xs.iter().zip(ys).zip(weights).zip(&g) {
        let k = y as usize;
        let dlogit = r * gi * (1.0 - gi) * (sl[k] - sr[k]);
        grad[0] += dlogit;
        for (gr, xi) in grad[1..].iter_mut().zip(x) {
            *gr += dlogit * xi;
        }
    }
    (bound, grad)
}

/// Adam ascent on one freshly grown gate. The other leaves' soft counts do
/// not depend on it, so only the split leaf's data enters each step.
fn local_ascent(
    model: &mut BntModel,
    xs: &[Vec<f64>],
    ys: &[u8],
    weights: &[f64],
    gate_id: usize,
    rest: f64,
    steps: usize,
) -> Vec<f64> {
    let hp = model.hyperparams.clone();
    let gate = &model.gates[gate_id];
    let mut theta: Vec<f64> = std::iter::once(gate.bias)
        .chain(gate.weights.iter().copied())
        .collect();
    let mut adam = Adam::new(theta.len(), hp.learning_rate_init, hp.adam.clone());
    let mut log = Vec::with_capacity(steps);
    for step in 0..steps {
        let (current, grad) = split_bound_and_grad(&theta, xs, ys, weights, rest, &hp);
        if step > 0 {
            log.push(current);
        }
        let dir = adam.direction(&grad);
        let attempts = if hp.backtracking { 12 } else { 1 };
        let mut scale = 1.0;
        for _ in 0..attempts {
            let trial: Vec<f64> = theta.iter().zip(&dir).map(|(t, d)| t + scale * d).collect();
            if !hp.backtracking
                || split_bound_and_grad(&trial, xs, ys, weights, rest, &hp).0 >= current
            {
                theta = trial;
                break;
            }
            scale *= 0.5;
        }
    }
    if steps > 0 {
        log.push(split_bound_and_grad(&theta, xs, ys, weights, rest, &hp).0);
    }
    let gate = &mut model.gates[gate_id];
    gate.bias = theta[0];
    gate.weights.copy_from_slice(&theta[1..]);
    log
}

/// Leaf selection distribution `c_l / sum c`; falls back to a softmax of
/// `-c_l` if the potentials do not share a sign, and to uniform if all vanish.
pub fn leaf_selection_probabilities(potentials: &[f64]) -> Vec<f64> {
    let n = potentials.len();
    let all_nonpos = potentials.iter().all(|c| *c <= 0.0);
    let all_nonneg = potentials.iter().all(|c| *c >= 0.0);
    let total: f64 = potentials.iter().sum();
    if (all_nonpos || all_nonneg) && total != 0.0 {
        return potentials.iter().map(|c| c / total).collect();
    }
    if total == 0.0 && (all_nonpos || all_nonneg) {
        return vec![1.0 / n as f64; n];
    }
    log::debug!("mixed-sign leaf potentials, selecting by softmax(-c)");
    let max = potentials
        .iter()
        .map(|c| -c)
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = potentials.iter().map(|c| (-c - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Samples a leaf id in proportion to its unexplained potential.
pub fn select_leaf<R: Rng + ?Sized>(model: &BntModel, rng: &mut R) -> usize {
    let potentials: Vec<f64> = model.leaves.iter().map(|l| l.potential).collect();
    let probs = leaf_selection_probabilities(&potentials);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left `acc` just below 1: take the last leaf with mass
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowOutcome {
    pub leaf: usize,
    /// Id of the new gate, or `None` when the leaf held too little data.
    pub gate: Option<usize>,
    pub soft_mass: f64,
    /// Bound after each local ascent step.
    pub local_bounds: Vec<f64>,
}

/// Splits a potential-weighted random leaf and trains only the new gate.
pub fn grow_step<R: Rng + ?Sized>(
    model: &mut BntModel,
    xs: &[Vec<f64>],
    ys: &[u8],
    rng: &mut R,
) -> Result<GrowOutcome> {
    check_data(model, xs, ys)?;
    let leaf = select_leaf(model, rng);
    let d = model.n_features;

    let mut buf = vec![0.0; model.leaves.len()];
    let mut weights = Vec::with_capacity(xs.len());
    let mut mass = 0.0;
    let mut centroid = vec![0.0; d];
    for x in xs {
        model.memberships_into(x, &mut buf);
        let p = buf[leaf];
        weights.push(p);
        mass += p;
        for (c, xi) in centroid.iter_mut().zip(x) {
            *c += p * xi;
        }
    }
    if mass < model.hyperparams.min_split_mass() {
        log::debug!("leaf {leaf} holds soft mass {mass:.3}; growth rejected");
        return Ok(GrowOutcome {
            leaf,
            gate: None,
            soft_mass: mass,
            local_bounds: Vec::new(),
        });
    }
    centroid.iter_mut().for_each(|c| *c /= mass);

    let mut direction: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = model.hyperparams.initial_relative_stiffness / norm;
    direction.iter_mut().for_each(|v| *v *= scale);
    let bias = -direction
        .iter()
        .zip(&centroid)
        .map(|(w, c)| w * c)
        .sum::<f64>();

    let gate_id = model.gates.len();
    let new_leaf = model.leaves.len();
    let (a0, b0) = (model.hyperparams.prior_alpha, model.hyperparams.prior_beta);
    model.leaves.push(LeafNode {
        id: new_leaf,
        alpha: a0,
        beta: b0,
        potential: 0.0,
    });
    model.replace_child(NodeRef::Leaf(leaf), NodeRef::Gate(gate_id));
    model.gates.push(GateNode {
        id: gate_id,
        weights: direction,
        bias,
        left: NodeRef::Leaf(leaf),
        right: NodeRef::Leaf(new_leaf),
    });
    model.refresh_posteriors(xs, ys)?;

    let rest: f64 = model
        .leaves
        .iter()
        .filter(|l| l.id != leaf && l.id != new_leaf)
        .map(|l| l.potential)
        .sum();
    let steps = model.hyperparams.n_gradient_descent_steps / 2;
    let local_bounds = local_ascent(model, xs, ys, &weights, gate_id, rest, steps);
    model.refresh_posteriors(xs, ys)?;
    Ok(GrowOutcome {
        leaf,
        gate: Some(gate_id),
        soft_mass: mass,
        local_bounds,
    })
}

/// Adam ascent on all gate parameters jointly; leaf posteriors are then
/// recomputed from the final weights. Returns the bound after each step.
pub fn global_ascent(model: &mut BntModel, xs: &[Vec<f64>], ys: &[u8]) -> Result<Vec<f64>> {
    check_data(model, xs, ys)?;
    if model.gates.is_empty() {
        return Ok(Vec::new());
    }
    let n = model.hyperparams.n_gradient_descent_steps;
    let steps = n - n / 2;
    let active: Vec<usize> = (0..model.params().len()).collect();
    let log = ascend(model, xs, ys, &active, steps)?;
    model.refresh_posteriors(xs, ys)?;
    Ok(log)
}

/// Keep a split only when its children explain the data better than the
/// merged leaf by the pruning factor. All potentials are `<= 0`.
pub fn keep_split(c_left: f64, c_right: f64, c_merged: f64, pruning_factor: f64) -> bool {
    c_left + c_right > c_merged / pruning_factor
}

/// Collapses bottom gates that fail [`keep_split`] until none do.
/// Returns the number of gates removed.
pub fn prune(model: &mut BntModel, xs: &[Vec<f64>], ys: &[u8]) -> Result<usize> {
    check_data(model, xs, ys)?;
    model.refresh_posteriors(xs, ys)?;
    let (a0, b0) = (model.hyperparams.prior_alpha, model.hyperparams.prior_beta);
    let prior = ln_beta(a0, b0);
    let factor = model.hyperparams.pruning_factor;

    let mut removed = 0;
    loop {
        let mut changed = false;
        for n in model.gate_preorder().into_iter().rev() {
            let gate = &model.gates[n];
            let (NodeRef::Leaf(l), NodeRef::Leaf(r)) = (gate.left, gate.right) else {
                continue;
            };
            let (left, right) = (&model.leaves[l], &model.leaves[r]);
            let alpha = left.alpha + right.alpha - a0;
            let beta = left.beta + right.beta - b0;
            let merged = ln_beta(alpha, beta) - prior;
            if keep_split(left.potential, right.potential, merged, factor) {
                continue;
            }
            model.leaves[l].alpha = alpha;
            model.leaves[l].beta = beta;
            model.leaves[l].potential = merged;
            model.replace_child(NodeRef::Gate(n), NodeRef::Leaf(l));
            removed += 1;
            changed = true;
            break;
        }
        if !changed {
            break;
        }
        model.compact();
    }
    if removed > 0 {
        model.compact();
        model.refresh_posteriors(xs, ys)?;
    }
    Ok(removed)
}

/// Grows a tree on standardized features `xs` with binary labels `ys`.
pub fn fit(xs: &[Vec<f64>], ys: &[u8], hyperparams: &BntHyperparams) -> Result<BntModel> {
    hyperparams.validate()?;
    let d = xs.first().map(|x| x.len()).unwrap_or(0);
    let mut model = BntModel::new(d, hyperparams.clone());
    check_data(&model, xs, ys)?;
    let mut rng = ChaCha8Rng::seed_from_u64(hyperparams.seed);
    model.refresh_posteriors(xs, ys)?;

    for iteration in 0..hyperparams.n_iter {
        let outcome = grow_step(&mut model, xs, ys, &mut rng)?;
        global_ascent(&mut model, xs, ys)?;
        prune(&mut model, xs, ys)?;
        let bound = model.refresh_posteriors(xs, ys)?;
        model.training_log.push(TrainingLogEntry {
            iteration,
            bound,
            n_leaves: model.n_leaves(),
            grown: outcome.gate.is_some(),
        });
        log::debug!(
            "bnt iteration {iteration}: bound {bound:.4}, {} leaves",
            model.n_leaves()
        );
    }
    model.refresh_posteriors(xs, ys)?;
    model.validate_structure()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn selection_probabilities() {
        assert_eq!(leaf_selection_probabilities(&[-2.0]), vec![1.0]);
        let p = leaf_selection_probabilities(&[-3.0, -1.0]);
        assert!((p[0] - 0.75).abs() < 1e-15 && (p[1] - 0.25).abs() < 1e-15);
        assert_eq!(leaf_selection_probabilities(&[0.0, 0.0]), vec![0.5, 0.5]);
        let mixed = leaf_selection_probabilities(&[-1.0, 1.0]);
        assert!(mixed[0] > mixed[1]);
        assert!((mixed.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn selection_frequencies_match() {
        let mut m = BntModel::new(1, BntHyperparams::default());
        m.leaves[0].potential = -3.0;
        m.leaves.push(LeafNode {
            id: 1,
            alpha: 1.0,
            beta: 1.0,
            potential: -1.0,
        });
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 10_000;
        let first = (0..n).filter(|_| select_leaf(&m, &mut rng) == 0).count();
        let freq = first as f64 / n as f64;
        let se = (0.75f64 * 0.25 / n as f64).sqrt();
        assert!((freq - 0.75).abs() < 3.0 * se, "{freq}");
    }

    #[test]
    fn keep_rule_boundary() {
        assert!(!keep_split(-1.0, -1.0, -2.0, 1.0));
        assert!(keep_split(-0.9, -1.0, -2.0, 1.0));
        // 5% improvement needed at factor 1.05
        assert!(!keep_split(-0.96, -0.96, -2.0, 1.05));
        assert!(keep_split(-0.9, -0.9, -2.0, 1.05));
    }

    #[test]
    fn adam_first_step_is_lr_times_sign() {
        let mut adam = Adam::new(3, 0.05, AdamConfig::default());
        let d = adam.direction(&[2.0, -0.5, 0.0]);
        assert!((d[0] - 0.05).abs() < 1e-8);
        assert!((d[1] + 0.05).abs() < 1e-8);
        assert_eq!(d[2], 0.0);
    }

    #[test]
    fn zero_iterations_gives_prior_updated_leaf() {
        let xs: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let ys = vec![1, 1, 1, 0, 1, 0, 1, 1, 0, 1];
        let hp = BntHyperparams {
            n_iter: 0,
            ..BntHyperparams::default()
        };
        let m = fit(&xs, &ys, &hp).unwrap();
        assert_eq!(m.n_leaves(), 1);
        // Beta(1 + 3, 1 + 7) mean
        assert!((m.predict_proba(&[0.0]).unwrap() - 8.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn split_gradient_matches_full_backprop() {
        let mut m = BntModel::new(2, BntHyperparams::default());
        m.gates.push(GateNode {
            id: 0,
            weights: vec![0.8, -1.1],
            bias: 0.3,
            left: NodeRef::Leaf(0),
            right: NodeRef::Leaf(1),
        });
        m.root = NodeRef::Gate(0);
        m.leaves.push(LeafNode {
            id: 1,
            alpha: 1.0,
            beta: 1.0,
            potential: 0.0,
        });
        let xs: Vec<Vec<f64>> = (0..30)
            .map(|i| vec![(i as f64 * 0.7).sin(), (i as f64 * 0.3).cos()])
            .collect();
        let ys: Vec<u8> = (0..30).map(|i| ((i * 7) % 3 == 0) as u8).collect();
        let (full, c) = grad_bound(&m, &xs, &ys).unwrap();
        let weights = vec![1.0; xs.len()];
        let (c2, g2) = split_bound_and_grad(&m.params(), &xs, &ys, &weights, 0.0, &m.hyperparams);
        assert!((c - c2).abs() < 1e-12);
        for (a, b) in full.iter().zip(&g2) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}
