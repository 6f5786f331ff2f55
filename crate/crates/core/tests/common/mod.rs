//! Helpers shared by the integration test targets: random trees and
//! oracles that do not touch the crate's own numerics.
#![allow(dead_code)]

use rand::Rng;
use rfq_core::bnt::{BntHyperparams, BntModel, GateNode, LeafNode, NodeRef};
use rfq_core::features::FeatureRow;
use rfq_core::market_sim::Side;
use rfq_core::pricing::{offset_grid, ExceedCurve, FillProbability, NextMidPredictor};
use rfq_core::Result;
use statrs::function::gamma::ln_gamma;

/// `ln B(a, b)` via statrs' log-gamma.
pub fn ln_beta_oracle(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Random tree with `n_leaves` leaves over `d` features. Gate weights have
/// entries in `[-scale, scale]`.
pub fn random_tree<R: Rng>(rng: &mut R, d: usize, n_leaves: usize, scale: f64) -> BntModel {
    fn build<R: Rng>(
        rng: &mut R,
        d: usize,
        k: usize,
        scale: f64,
        gates: &mut Vec<GateNode>,
        leaves: &mut Vec<LeafNode>,
    ) -> NodeRef {
        if k == 1 {
            let id = leaves.len();
            leaves.push(LeafNode {
                id,
                alpha: 1.0,
                beta: 1.0,
                potential: 0.0,
            });
            return NodeRef::Leaf(id);
        }
        let id = gates.len();
        gates.push(GateNode {
            id,
            weights: (0..d).map(|_| rng.random_range(-scale..scale)).collect(),
            bias: rng.random_range(-scale..scale) * 0.5,
            left: NodeRef::Leaf(0),
            right: NodeRef::Leaf(0),
        });
        let k_left = rng.random_range(1..k);
        let left = build(rng, d, k_left, scale, gates, leaves);
        let right = build(rng, d, k - k_left, scale, gates, leaves);
        gates[id].left = left;
        gates[id].right = right;
        NodeRef::Gate(id)
    }
    let mut gates = Vec::new();
    let mut leaves = Vec::new();
    let root = build(rng, d, n_leaves, scale, &mut gates, &mut leaves);
    let mut model = BntModel::new(d, BntHyperparams::default());
    model.root = root;
    model.gates = gates;
    model.leaves = leaves;
    model.validate_structure().expect("valid random tree");
    model
}

pub fn random_points<R: Rng>(rng: &mut R, m: usize, d: usize) -> Vec<Vec<f64>> {
    (0..m)
        .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect()
}

pub fn random_labels<R: Rng>(rng: &mut R, m: usize) -> Vec<u8> {
    (0..m).map(|_| rng.random_bool(0.5) as u8).collect()
}

/// Leaf reached by sign routing: affine form > 0 goes left.
pub fn hard_leaf(model: &BntModel, x: &[f64]) -> usize {
    let mut node = model.root;
    loop {
        match node {
            NodeRef::Leaf(l) => return l,
            NodeRef::Gate(g) => {
                let gate = &model.gates[g];
                let z = gate.bias + gate.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
                node = if z > 0.0 { gate.left } else { gate.right };
            }
        }
    }
}

/// Smallest `|w0 + w.x|` over all gates; used to reject points too close to
/// a hyperplane.
pub fn min_margin(model: &BntModel, x: &[f64]) -> f64 {
    model
        .gates
        .iter()
        .map(|g| (g.bias + g.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()).abs())
        .fold(f64::INFINITY, f64::min)
}

/// Membership of every leaf computed by walking each root-to-leaf path.
pub fn path_memberships(model: &BntModel, x: &[f64]) -> Vec<f64> {
    fn walk(model: &BntModel, node: NodeRef, reach: f64, x: &[f64], out: &mut [f64]) {
        match node {
            NodeRef::Leaf(l) => out[l] = reach,
            NodeRef::Gate(g) => {
                let gate = &model.gates[g];
                let z = gate.bias + gate.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
                let p = 1.0 / (1.0 + (-z).exp());
                walk(model, gate.left, reach * p, x, out);
                walk(model, gate.right, reach * (1.0 - p), x, out);
            }
        }
    }
    let mut out = vec![0.0; model.leaves.len()];
    walk(model, model.root, 1.0, x, &mut out);
    out
}

/// Exact `sum_omega p(omega) sum_l [ln B(alpha'_l(omega), beta'_l(omega)) - ln B(alpha, beta)]`
/// by enumerating every assignment of samples to leaves.
pub fn exact_configuration_sum(model: &BntModel, xs: &[Vec<f64>], ys: &[u8]) -> f64 {
    let n_leaves = model.leaves.len();
    let (a0, b0) = (model.hyperparams.prior_alpha, model.hyperparams.prior_beta);
    let prior = ln_beta_oracle(a0, b0);
    let memberships: Vec<Vec<f64>> = xs.iter().map(|x| path_memberships(model, x)).collect();
    let m = xs.len();
    let total = n_leaves.pow(m as u32);
    let mut sum = 0.0;
    let mut assign = vec![0usize; m];
    let mut n0 = vec![0usize; n_leaves];
    let mut n1 = vec![0usize; n_leaves];
    for code in 0..total {
        let mut c = code;
        for a in assign.iter_mut() {
            *a = c % n_leaves;
            c /= n_leaves;
        }
        let mut p = 1.0;
        n0.iter_mut().for_each(|v| *v = 0);
        n1.iter_mut().for_each(|v| *v = 0);
        for (i, &l) in assign.iter().enumerate() {
            p *= memberships[i][l];
            if ys[i] == 1 {
                n1[l] += 1;
            } else {
                n0[l] += 1;
            }
        }
        if p == 0.0 {
            continue;
        }
        let ll: f64 = (0..n_leaves)
            .map(|l| ln_beta_oracle(a0 + n0[l] as f64, b0 + n1[l] as f64) - prior)
            .sum();
        sum += p * ll;
    }
    sum
}

/// Central finite-difference gradient of `f` at `theta`.
pub fn central_difference(theta: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut t = theta.to_vec();
    (0..theta.len())
        .map(|k| {
            t[k] = theta[k] + h;
            let up = f(&t);
            t[k] = theta[k] - h;
            let down = f(&t);
            t[k] = theta[k];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `max_k |a_k - b_k| / max_k |b_k|`, or the absolute error when `b` is zero.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let scale = b.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// Worst relative error between `grad_bound` and central differences of the
/// bound over random trees with `d <= 4`, `<= 8` leaves, `<= 64` samples.
pub fn worst_gradient_error(seed: u64, instances: usize) -> f64 {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let d = rng.random_range(1..=4);
        let leaves = rng.random_range(2..=8);
        let m = rng.random_range(4..=64);
        let mut model = random_tree(&mut rng, d, leaves, 1.5);
        let xs = random_points(&mut rng, m, d);
        let ys = random_labels(&mut rng, m);
        let (grad, _) = rfq_core::bnt::grad_bound(&model, &xs, &ys).unwrap();
        let theta = model.params();
        let fd = central_difference(&theta, 1e-5, |t| {
            model.set_params(t);
            rfq_core::bnt::posterior_and_bound(&model, &xs, &ys)
                .unwrap()
                .total
        });
        worst = worst.max(relative_error(&grad, &fd));
    }
    worst
}

/// Worst absolute difference between the bound of a saturated tree and
/// direct per-leaf Beta-Bernoulli counting under sign routing.
pub fn worst_hard_gate_error(seed: u64, instances: usize) -> f64 {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let d = rng.random_range(1..=4);
        let leaves = rng.random_range(1..=8);
        let mut model = random_tree(&mut rng, d, leaves, 1.5);
        for g in &mut model.gates {
            g.weights.iter_mut().for_each(|w| *w *= 1e6);
            g.bias *= 1e6;
        }
        let m = rng.random_range(1..=64);
        let mut xs = Vec::with_capacity(m);
        while xs.len() < m {
            let x = random_points(&mut rng, 1, d).pop().unwrap();
            if min_margin(&model, &x) > 1e2 {
                xs.push(x);
            }
        }
        let ys = random_labels(&mut rng, m);
        let mut n0 = vec![0.0; model.leaves.len()];
        let mut n1 = vec![0.0; model.leaves.len()];
        for (x, y) in xs.iter().zip(&ys) {
            let l = hard_leaf(&model, x);
            if *y == 1 {
                n1[l] += 1.0;
            } else {
                n0[l] += 1.0;
            }
        }
        let prior = ln_beta_oracle(1.0, 1.0);
        let expected: f64 = n0
            .iter()
            .zip(&n1)
            .map(|(a, b)| ln_beta_oracle(1.0 + a, 1.0 + b) - prior)
            .sum();
        let got = rfq_core::bnt::posterior_and_bound(&model, &xs, &ys)
            .unwrap()
            .total;
        worst = worst.max((got - expected).abs());
    }
    worst
}

/// Smallest `exact - c` over random soft trees with `m <= 12`, `|L| <= 3`.
/// Negative values would violate the Jensen bound.
pub fn smallest_jensen_gap(seed: u64, instances: usize) -> f64 {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut smallest = f64::INFINITY;
    for _ in 0..instances {
        let d = rng.random_range(1..=3);
        let leaves = rng.random_range(1..=3);
        let m = rng.random_range(1..=12);
        let model = random_tree(&mut rng, d, leaves, 1.5);
        let xs = random_points(&mut rng, m, d);
        let ys = random_labels(&mut rng, m);
        let c = rfq_core::bnt::posterior_and_bound(&model, &xs, &ys)
            .unwrap()
            .total;
        smallest = smallest.min(exact_configuration_sum(&model, &xs, &ys) - c);
    }
    smallest
}

/// Worst `|sum_l p(x in l) - 1|` over random trees and points.
pub fn worst_membership_sum_error(seed: u64, pairs: usize) -> f64 {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let d = rng.random_range(1..=6);
        let leaves = rng.random_range(1..=16);
        let model = random_tree(&mut rng, d, leaves, 4.0);
        let x = random_points(&mut rng, 1, d).pop().unwrap();
        let total: f64 = model.leaf_membership(&x).unwrap().iter().sum();
        worst = worst.max((total - 1.0).abs());
    }
    worst
}

/// Compares `actual` with `tests/golden/<name>`; `UPDATE_GOLDEN=1` rewrites it.
pub fn check_golden(name: &str, actual: &str) -> Result<(), String> {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name);
    if std::env::var("UPDATE_GOLDEN").is_ok_and(|v| v == "1") {
        std::fs::write(&path, actual).map_err(|e| e.to_string())?;
        return Ok(());
    }
    let expected = std::fs::read_to_string(&path)
        .map_err(|e| format!("{}: {e} (run with UPDATE_GOLDEN=1)", path.display()))?;
    if expected == actual {
        Ok(())
    } else {
        Err(format!("{} differs from the output", path.display()))
    }
}

/// Runs the `rfq` binary in `dir`.
pub fn rfq(dir: &std::path::Path, args: &[&str]) -> std::process::Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_rfq"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn rfq")
}

/// Runs `rfq` and returns stdout, panicking with stderr on failure.
pub fn rfq_ok(dir: &std::path::Path, args: &[&str]) -> String {
    let out = rfq(dir, args);
    assert!(
        out.status.success(),
        "rfq {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Simulates the default dataset and trains a next-mid model and a short
/// BNT run into `dir`: data.csv, next_mid.json and bnt.json.
pub fn quick_models(dir: &std::path::Path) {
    rfq_ok(dir, &["simulate", "--out", "data.csv"]);
    rfq_ok(
        dir,
        &[
            "train",
            "--data",
            "data.csv",
            "--model",
            "next_mid",
            "--out",
            "next_mid.json",
        ],
    );
    rfq_ok(
        dir,
        &[
            "train",
            "--data",
            "data.csv",
            "--model",
            "bnt",
            "--stiffness",
            "6",
            "--n-iter",
            "3",
            "--out",
            "bnt.json",
        ],
    );
}

/// `sigmoid(a + b * response + c * spread)`, optionally rounded to a coarse
/// lattice so that equal payoffs (and hence tie-breaks) occur.
pub struct LogisticFill {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub lattice: Option<f64>,
}

impl LogisticFill {
    pub fn at(&self, spread: f64, response: f64) -> f64 {
        let p = 1.0 / (1.0 + (-(self.a + self.b * response + self.c * spread)).exp());
        match self.lattice {
            Some(step) => (p / step).round() * step,
            None => p,
        }
    }
}

impl FillProbability for LogisticFill {
    fn fill_probability(&self, row: &FeatureRow) -> Result<f64> {
        Ok(self.at(row.spread, row.response))
    }
}

pub struct Constant(pub f64);

impl FillProbability for Constant {
    fn fill_probability(&self, _: &FeatureRow) -> Result<f64> {
        Ok(self.0)
    }
}

pub struct FixedPrediction(pub f64);

impl NextMidPredictor for FixedPrediction {
    fn predict_next_mid(&self, _: f64, _: Side) -> f64 {
        self.0
    }
}

pub fn row(side: Side) -> FeatureRow {
    FeatureRow {
        mom5: 0.0,
        mom10: 0.0,
        mom20: 0.0,
        spread: 0.0,
        response: 0.0,
        log_notional: 10.0,
        competition: 2,
        counterparty: 1,
        side,
        history_valid: true,
    }
}

pub fn random_curve<R: Rng>(rng: &mut R, side: Side) -> ExceedCurve {
    let mut probs: Vec<f64> = (0..201)
        .map(|_| (rng.random_range(0..=50) as f64) / 50.0)
        .collect();
    probs.sort_by(f64::total_cmp);
    if side == Side::Offer {
        probs.reverse();
    }
    ExceedCurve {
        bond: 0,
        side,
        offsets: offset_grid(),
        probabilities: probs,
        n_samples: 50,
    }
}

/// Exhaustive argmax over feasible integer cents; ties go to the quote
/// furthest from the predicted mid.
pub fn brute_force_cents(
    side: Side,
    mid: f64,
    predicted: f64,
    fill: &LogisticFill,
    curve: &ExceedCurve,
) -> i32 {
    let feasible: Vec<i32> = match side {
        Side::Bid => (-100..=0).collect(),
        Side::Offer => (0..=100).collect(),
    };
    let mut best: Option<(i32, f64)> = None;
    for c in feasible {
        let quote = predicted + c as f64 / 100.0;
        let spread = mid - quote;
        let response = if side == Side::Bid { spread } else { -spread };
        let payoff = fill.at(spread, response) - curve.probabilities[(c + 100) as usize];
        let better = match best {
            None => true,
            Some((bc, bp)) => payoff > bp || (payoff == bp && c.abs() > bc.abs()),
        };
        if better {
            best = Some((c, payoff));
        }
    }
    best.unwrap().0
}

/// Randomized quote problems (half on a coarse payoff lattice to force ties)
/// where `optimal_quote` disagrees with the exhaustive search; empty when all agree.
pub fn pricing_mismatches(seed: u64, instances: u32) -> Vec<String> {
    use rfq_core::pricing::{optimal_quote, CurveSet, QuoteRequest};
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
    let mut bad = Vec::new();
    for i in 0..instances {
        let side = if rng.random_bool(0.5) {
            Side::Bid
        } else {
            Side::Offer
        };
        let mid = 124.0 + rng.random_range(-1.0..1.0);
        let predicted = mid + rng.random_range(-0.05..0.05);
        let fill = LogisticFill {
            a: rng.random_range(-1.0..1.0),
            b: -rng.random_range(0.0..200.0),
            c: rng.random_range(-50.0..50.0),
            lattice: (i % 2 == 0).then_some(0.05),
        };
        let curve = random_curve(&mut rng, side);
        let curves = CurveSet {
            curves: vec![curve.clone()],
        };
        let rfq = QuoteRequest {
            time: 10_000 + i,
            bond: 0,
            side,
            mid,
            features: row(side),
        };
        let d = match optimal_quote(&rfq, &fill, &FixedPrediction(predicted), &curves) {
            Ok(d) => d,
            Err(e) => {
                bad.push(format!("instance {i}: {e}"));
                continue;
            }
        };
        let expected = brute_force_cents(side, mid, predicted, &fill, &curve);
        let candidate = predicted + expected as f64 / 100.0;
        let capped = match side {
            Side::Bid => candidate.max(mid - 0.01).min(predicted),
            Side::Offer => candidate.min(mid + 0.01).max(predicted),
        };
        let got = (d.grid_offset * 100.0).round() as i32;
        let on_side = match side {
            Side::Bid => d.quote <= predicted,
            Side::Offer => d.quote >= predicted,
        };
        if got != expected
            || d.quote != capped
            || !on_side
            || !(-1.0..=1.0).contains(&d.expected_payoff)
        {
            bad.push(format!(
                "instance {i}: offset {got} vs {expected}, quote {} vs {capped}",
                d.quote
            ));
        }
    }
    bad
}
