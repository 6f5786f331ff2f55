//! Bayesian Neural Tree: a soft binary decision tree with sigmoid hyperplane
//! gates and Beta posteriors at the leaves.
//!
//! Gate `g(x) = sigmoid(w0 + w.x)` is the probability of routing to the LEFT
//! child. A point's membership of a leaf is the product of `g` or `1 - g`
//! along the root-to-leaf path; leaf posteriors are soft counts of the
//! training labels weighted by those memberships. Only gate weights are ever
//! trained, by gradient ascent on the Jensen lower bound of the Beta-Bernoulli
//! marginal likelihood (see [`bound`]).

mod bound;
mod explain;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{dot, sigmoid};

pub use bound::{grad_bound, posterior_and_bound, BoundReport};
pub use explain::{
    decision_boundary_grid, feature_importance, FeatureImportance, GridAxis, GridPoint,
};
pub use train::{
    fit, global_ascent, grow_step, keep_split, leaf_selection_probabilities, prune, select_leaf,
    Adam, GrowOutcome,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "snake_case")]
pub enum NodeRef {
    Gate(usize),
    Leaf(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateNode {
    pub id: usize,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub left: NodeRef,
    pub right: NodeRef,
}

impl GateNode {
    /// Probability of routing `x` to the left child.
    pub fn eval(&self, x: &[f64]) -> f64 {
        sigmoid(self.bias + dot(&self.weights, x))
    }
}

/// `g(x) = 1 / (1 + exp(-(w0 + w.x)))`.
pub fn gate_eval(gate: &GateNode, x: &[f64]) -> Result<f64> {
    if gate.weights.len() != x.len() {
        return Err(Error::InvalidInput(format!(
            "gate has {} weights, input has {} features",
            gate.weights.len(),
            x.len()
        )));
    }
    Ok(gate.eval(x))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafNode {
    pub id: usize,
    /// Posterior count of misses, `alpha'`.
    pub alpha: f64,
    /// Posterior count of fills, `beta'`.
    pub beta: f64,
    /// Unexplained potential `ln(B(alpha', beta') / B(alpha, beta))`.
    pub potential: f64,
}

impl LeafNode {
    /// Posterior mean of `P(status = done)` in this leaf.
    pub fn fill_probability(&self) -> f64 {
        self.beta / (self.alpha + self.beta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BntHyperparams {
    pub prior_alpha: f64,
    pub prior_beta: f64,
    pub pruning_factor: f64,
    /// Number of growth attempts (Algorithm 1's `max_attempts`).
    pub n_iter: usize,
    pub learning_rate_init: f64,
    /// Split `floor(n/2)` local and `ceil(n/2)` global steps per iteration.
    pub n_gradient_descent_steps: usize,
    /// Norm of a freshly sampled gate weight vector, in standardized units.
    pub initial_relative_stiffness: f64,
    pub adam: AdamConfig,
    /// Halve (and finally reject) Adam steps that lower the bound.
    pub backtracking: bool,
    pub seed: u64,
}

impl Default for BntHyperparams {
    fn default() -> Self {
        Self {
            prior_alpha: 1.0,
            prior_beta: 1.0,
            pruning_factor: 1.0,
            n_iter: 50,
            learning_rate_init: 0.05,
            n_gradient_descent_steps: 100,
            initial_relative_stiffness: 6.0,
            adam: AdamConfig::default(),
            backtracking: false,
            seed: 0,
        }
    }
}

impl BntHyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.prior_alpha > 0.0 && self.prior_beta > 0.0) {
            return Err(Error::Config(
                "Beta prior parameters must be positive".into(),
            ));
        }
        if !(self.pruning_factor >= 1.0) {
            return Err(Error::Config("pruning_factor must be at least 1".into()));
        }
        if !(self.learning_rate_init >= 0.0) {
            return Err(Error::Config("learning rate must be non-negative".into()));
        }
        if !(self.initial_relative_stiffness > 0.0) {
            return Err(Error::Config("stiffness must be positive".into()));
        }
        Ok(())
    }

    /// Minimum soft data mass a leaf needs before it may be split.
    pub fn min_split_mass(&self) -> f64 {
        2.0 * (self.prior_alpha + self.prior_beta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLogEntry {
    pub iteration: usize,
    pub bound: f64,
    pub n_leaves: usize,
    pub grown: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BntModel {
    pub n_features: usize,
    pub root: NodeRef,
    pub gates: Vec<GateNode>,
    pub leaves: Vec<LeafNode>,
    pub hyperparams: BntHyperparams,
    pub fitted: bool,
    pub training_log: Vec<TrainingLogEntry>,
}

impl BntModel {
    /// Single-leaf tree holding the prior; not yet fitted.
    pub fn new(n_features: usize, hyperparams: BntHyperparams) -> Self {
        let leaf = LeafNode {
            id: 0,
            alpha: hyperparams.prior_alpha,
            beta: hyperparams.prior_beta,
            potential: 0.0,
        };
        Self {
            n_features,
            root: NodeRef::Leaf(0),
            gates: Vec::new(),
            leaves: vec![leaf],
            hyperparams,
            fitted: false,
            training_log: Vec::new(),
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves.len()
    }

    pub fn n_gates(&self) -> usize {
        self.gates.len()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::InvalidInput(format!(
                "model expects {} features, got {}",
                self.n_features,
                x.len()
            )));
        }
        Ok(())
    }

    /// Gates in pre-order (every parent before its children).
    pub fn gate_preorder(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.gates.len());
        let mut stack = vec![self.root];
        while let Some(node) = stack.pop() {
            if let NodeRef::Gate(g) = node {
                order.push(g);
                stack.push(self.gates[g].right);
                stack.push(self.gates[g].left);
            }
        }
        order
    }

    /// Fills `out[leaf_id]` with `p(x in leaf)`.
    pub(crate) fn memberships_into(&self, x: &[f64], out: &mut [f64]) {
        let mut stack = vec![(self.root, 1.0)];
        while let Some((node, reach)) = stack.pop() {
            match node {
                NodeRef::Leaf(l) => out[l] = reach,
                NodeRef::Gate(g) => {
                    let gate = &self.gates[g];
                    let gv = gate.eval(x);
                    stack.push((gate.right, reach * (1.0 - gv)));
                    stack.push((gate.left, reach * gv));
                }
            }
        }
    }

    /// `p(x in leaf)` for every leaf, indexed by leaf id.
    pub fn leaf_membership(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut out = vec![0.0; self.leaves.len()];
        self.memberships_into(x, &mut out);
        Ok(out)
    }

    /// `sum_l p(y = 1 | x in l) p(x in l)`.
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        if !self.fitted {
            return Err(Error::NotFitted);
        }
        let m = self.leaf_membership(x)?;
        Ok(m.iter()
            .zip(&self.leaves)
            .map(|(p, leaf)| p * leaf.fill_probability())
            .sum())
    }

    pub fn predict_proba_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        xs.iter().map(|x| self.predict_proba(x)).collect()
    }

    /// Gate parameters flattened as `[bias, w_1..w_d]` per gate, in gate-id order.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.gates.len() * (self.n_features + 1));
        for g in &self.gates {
            p.push(g.bias);
            p.extend_from_slice(&g.weights);
        }
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let stride = self.n_features + 1;
        assert_eq!(p.len(), self.gates.len() * stride, "parameter length");
        for (g, chunk) in self.gates.iter_mut().zip(p.chunks(stride)) {
            g.bias = chunk[0];
            g.weights.copy_from_slice(&chunk[1..]);
        }
    }

    fn parent_of(&self, child: NodeRef) -> Option<(usize, bool)> {
        self.gates.iter().enumerate().find_map(|(i, g)| {
            if g.left == child {
                Some((i, true))
            } else if g.right == child {
                Some((i, false))
            } else {
                None
            }
        })
    }

    fn replace_child(&mut self, old: NodeRef, new: NodeRef) {
        match self.parent_of(old) {
            Some((p, true)) => self.gates[p].left = new,
            Some((p, false)) => self.gates[p].right = new,
            None => {
                debug_assert_eq!(self.root, old);
                self.root = new;
            }
        }
    }

    /// Renumbers gates and leaves contiguously in pre-order, dropping
    /// anything unreachable from the root.
    pub(crate) fn compact(&mut self) {
        let mut gates = Vec::new();
        let mut leaves = Vec::new();
        fn visit(
            model: &BntModel,
            node: NodeRef,
            gates: &mut Vec<GateNode>,
            leaves: &mut Vec<LeafNode>,
        ) -> NodeRef {
            match node {
                NodeRef::Leaf(l) => {
                    let id = leaves.len();
                    leaves.push(LeafNode {
                        id,
                        ..model.leaves[l].clone()
                    });
                    NodeRef::Leaf(id)
                }
                NodeRef::Gate(g) => {
                    let id = gates.len();
                    gates.push(model.gates[g].clone());
                    let left = visit(model, model.gates[g].left, gates, leaves);
                    let right = visit(model, model.gates[g].right, gates, leaves);
                    gates[id].id = id;
                    gates[id].left = left;
                    gates[id].right = right;
                    NodeRef::Gate(id)
                }
            }
        }
        let root = visit(self, self.root, &mut gates, &mut leaves);
        self.root = root;
        self.gates = gates;
        self.leaves = leaves;
    }

    /// Checks the node graph is a binary tree covering every stored node.
    pub fn validate_structure(&self) -> Result<()> {
        let mut seen_gates = vec![false; self.gates.len()];
        let mut seen_leaves = vec![false; self.leaves.len()];
        let mut stack = vec![self.root];
        while let Some(node) = stack.pop() {
            let (seen, idx) = match node {
                NodeRef::Gate(g) => (&mut seen_gates, g),
                NodeRef::Leaf(l) => (&mut seen_leaves, l),
            };
            match seen.get_mut(idx) {
                None => return Err(Error::InvalidInput(format!("dangling reference {node:?}"))),
                Some(true) => return Err(Error::InvalidInput(format!("{node:?} has two parents"))),
                Some(s) => *s = true,
            }
            if let NodeRef::Gate(g) = node {
                let gate = &self.gates[g];
                if gate.weights.len() != self.n_features {
                    return Err(Error::InvalidInput(format!("gate {g} has wrong dimension")));
                }
                if !gate.bias.is_finite() || gate.weights.iter().any(|w| !w.is_finite()) {
                    return Err(Error::InvalidInput(format!(
                        "gate {g} has non-finite weights"
                    )));
                }
                stack.push(gate.left);
                stack.push(gate.right);
            }
        }
        if seen_gates.iter().chain(&seen_leaves).any(|s| !s) {
            return Err(Error::InvalidInput("unreachable nodes in tree".into()));
        }
        for leaf in &self.leaves {
            if !(leaf.alpha > 0.0 && leaf.beta > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "leaf {} has non-positive posterior",
                    leaf.id
                )));
            }
        }
        Ok(())
    }
}
