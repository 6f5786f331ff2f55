//! Quote selection: exceed-limit curves, expected payoff, the grid search
//! over offsets from the predicted next mid, and auction utilities.
//!
//! Offsets live on a grid of whole cents from -1.00 to +1.00 around the
//! predicted next mid `P̂`. A quote *exceeds the limit* when it crosses the
//! realized next mid adversely: a bid above it or an offer below it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{EnsembleModel, FillModel};
use crate::error::{Error, Result};
use crate::features::FeatureRow;
use crate::linear_models::NextMidModel;
use crate::market_sim::Side;

/// Grid half-width in cents.
pub const GRID_CENTS: i32 = 100;
/// Distance from mid enforced by the final cap.
pub const CAP_DISTANCE: f64 = 0.01;

/// Offsets `-1.00, -0.99, ..., +1.00` built from integer cents.
pub fn offset_grid() -> Vec<f64> {
    (-GRID_CENTS..=GRID_CENTS)
        .map(|c| c as f64 / 100.0)
        .collect()
}

pub trait FillProbability {
    /// Probability of a fill for the RFQ described by `row`.
    fn fill_probability(&self, row: &FeatureRow) -> Result<f64>;
}

pub trait NextMidPredictor {
    fn predict_next_mid(&self, mid: f64, side: Side) -> f64;
}

impl FillProbability for FillModel {
    fn fill_probability(&self, row: &FeatureRow) -> Result<f64> {
        self.predict_row(row)
    }
}

impl FillProbability for EnsembleModel {
    fn fill_probability(&self, row: &FeatureRow) -> Result<f64> {
        self.predict_proba(row)
    }
}

impl NextMidPredictor for NextMidModel {
    fn predict_next_mid(&self, mid: f64, side: Side) -> f64 {
        self.predict(mid, side)
    }
}

/// `true` when `quote` crosses `next_mid` adversely for `side`.
pub fn exceeds_limit(side: Side, quote: f64, next_mid: f64) -> bool {
    match side {
        Side::Bid => quote > next_mid,
        Side::Offer => quote < next_mid,
    }
}

/// One validation row: predicted and realized next mid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExceedSample {
    pub predicted: f64,
    pub next_mid: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceedCurve {
    pub bond: u32,
    pub side: Side,
    pub offsets: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub n_samples: usize,
}

impl ExceedCurve {
    /// Probability at `offset`, which must be one of the curve's offsets.
    pub fn probability_at(&self, offset: f64) -> Option<f64> {
        self.offsets
            .iter()
            .position(|o| (o - offset).abs() < 1e-9)
            .map(|i| self.probabilities[i])
    }
}

/// `P(exceed | δ) = mean_i 1[P̂_i + δ crosses next_mid_i]` for each offset.
pub fn exceed_curve(
    samples: &[ExceedSample],
    bond: u32,
    side: Side,
    offsets: &[f64],
) -> Result<ExceedCurve> {
    if samples.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no validation rows for bond {bond} {side:?}"
        )));
    }
    let n = samples.len() as f64;
    let probabilities = offsets
        .iter()
        .map(|d| {
            samples
                .iter()
                .filter(|s| exceeds_limit(side, s.predicted + d, s.next_mid))
                .count() as f64
                / n
        })
        .collect();
    Ok(ExceedCurve {
        bond,
        side,
        offsets: offsets.to_vec(),
        probabilities,
        n_samples: samples.len(),
    })
}

/// Exceed curves keyed by (bond, side).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CurveSet {
    pub curves: Vec<ExceedCurve>,
}

impl CurveSet {
    pub fn get(&self, bond: u32, side: Side) -> Result<&ExceedCurve> {
        self.curves
            .iter()
            .find(|c| c.bond == bond && c.side == side)
            .ok_or_else(|| Error::InvalidInput(format!("no exceed curve for bond {bond} {side:?}")))
    }
}

/// `P(fill) - P(exceed)`.
pub fn expected_payoff(p_fill: f64, p_exceed: f64) -> f64 {
    p_fill - p_exceed
}

/// The RFQ being priced.
#[derive(Debug, Clone, PartialEq)]
pub struct QuoteRequest {
    pub time: u32,
    pub bond: u32,
    pub side: Side,
    pub mid: f64,
    /// Features of the RFQ; Spread and Response are re-derived per candidate.
    pub features: FeatureRow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PayoffPoint {
    pub cents: i32,
    pub offset: f64,
    pub quote: f64,
    pub p_fill: f64,
    pub p_exceed: f64,
    pub payoff: f64,
    /// Quote on the correct side of `P̂` for the RFQ side.
    pub feasible: bool,
}

fn feasible(side: Side, cents: i32) -> bool {
    match side {
        Side::Bid => cents <= 0,
        Side::Offer => cents >= 0,
    }
}

/// Expected payoff at every grid offset around the predicted next mid.
pub fn payoff_curve<F, N>(
    rfq: &QuoteRequest,
    fill: &F,
    next_mid: &N,
    curves: &CurveSet,
) -> Result<Vec<PayoffPoint>>
where
    F: FillProbability + Sync + ?Sized,
    N: NextMidPredictor + ?Sized,
{
    let curve = curves.get(rfq.bond, rfq.side)?;
    let predicted = next_mid.predict_next_mid(rfq.mid, rfq.side);
    if !predicted.is_finite() {
        return Err(Error::NonFinite("predicting the next mid".into()));
    }
    (-GRID_CENTS..=GRID_CENTS)
        .into_par_iter()
        .map(|cents| {
            let offset = cents as f64 / 100.0;
            let quote = predicted + offset;
            let p_exceed = curve.probability_at(offset).ok_or_else(|| {
                Error::InvalidInput(format!("exceed curve has no offset {offset:.2}"))
            })?;
            let p_fill = fill.fill_probability(&rfq.features.with_quote(rfq.mid, quote))?;
            Ok(PayoffPoint {
                cents,
                offset,
                quote,
                p_fill,
                p_exceed,
                payoff: expected_payoff(p_fill, p_exceed),
                feasible: feasible(rfq.side, cents),
            })
        })
        .collect()
}

/// Best feasible grid point; equal payoffs resolve to the less aggressive
/// quote (lower for bids, higher for offers).
pub fn best_point(side: Side, points: &[PayoffPoint]) -> Option<PayoffPoint> {
    let mut best: Option<PayoffPoint> = None;
    let ordered: Box<dyn Iterator<Item = &PayoffPoint>> = match side {
        Side::Bid => Box::new(points.iter()),
        Side::Offer => Box::new(points.iter().rev()),
    };
    for p in ordered.filter(|p| p.feasible) {
        if best.is_none_or(|b| p.payoff > b.payoff) {
            best = Some(*p);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuoteDecision {
    pub time: u32,
    pub bond: u32,
    pub side: Side,
    pub mid: f64,
    pub predicted_next_mid: f64,
    /// Grid offset from `P̂` chosen by the search, before the cap.
    pub grid_offset: f64,
    pub candidate_quote: f64,
    pub quote: f64,
    /// `quote - P̂`.
    pub offset_from_prediction: f64,
    /// `quote - mid`.
    pub offset_from_mid: f64,
    pub p_fill: f64,
    pub p_exceed: f64,
    pub expected_payoff: f64,
    pub cap_applied: bool,
}

/// Final cap: a bid is raised to at least `mid - 0.01` but never above `P̂`;
/// an offer is lowered to at most `mid + 0.01` but never below `P̂`.
pub fn apply_cap(side: Side, candidate: f64, mid: f64, predicted: f64) -> f64 {
    match side {
        Side::Bid => candidate.max(mid - CAP_DISTANCE).min(predicted),
        Side::Offer => candidate.min(mid + CAP_DISTANCE).max(predicted),
    }
}

pub fn optimal_quote<F, N>(
    rfq: &QuoteRequest,
    fill: &F,
    next_mid: &N,
    curves: &CurveSet,
) -> Result<QuoteDecision>
where
    F: FillProbability + Sync + ?Sized,
    N: NextMidPredictor + ?Sized,
{
    let points = payoff_curve(rfq, fill, next_mid, curves)?;
    let best = best_point(rfq.side, &points)
        .ok_or_else(|| Error::InvalidInput("no feasible grid offsets".into()))?;
    let predicted = next_mid.predict_next_mid(rfq.mid, rfq.side);
    let quote = apply_cap(rfq.side, best.quote, rfq.mid, predicted);
    Ok(QuoteDecision {
        time: rfq.time,
        bond: rfq.bond,
        side: rfq.side,
        mid: rfq.mid,
        predicted_next_mid: predicted,
        grid_offset: best.offset,
        candidate_quote: best.quote,
        quote,
        offset_from_prediction: quote - predicted,
        offset_from_mid: quote - rfq.mid,
        p_fill: best.p_fill,
        p_exceed: best.p_exceed,
        expected_payoff: best.payoff,
        cap_applied: quote != best.quote,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Participant {
    pub quote: f64,
    pub loss: bool,
    pub utility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuctionOutcome {
    /// Our quote first, then the competitors in input order.
    pub participants: Vec<Participant>,
    pub winners: Vec<usize>,
}

impl AuctionOutcome {
    pub fn ours(&self) -> &Participant {
        &self.participants[0]
    }

    pub fn we_won(&self) -> bool {
        self.winners.contains(&0)
    }
}

/// Loss-making quotes score -1 and drop out; the most competitive remaining
/// price scores +1, or `1/n - 0.5` each when `n` quotes tie exactly;
/// everyone else scores 0.
pub fn auction_utility(
    our_quote: f64,
    competitors: &[f64],
    next_mid: f64,
    side: Side,
) -> AuctionOutcome {
    let quotes: Vec<f64> = std::iter::once(our_quote)
        .chain(competitors.iter().copied())
        .collect();
    let mut participants: Vec<Participant> = quotes
        .iter()
        .map(|&quote| Participant {
            quote,
            loss: exceeds_limit(side, quote, next_mid),
            utility: 0.0,
        })
        .collect();

    let best = participants
        .iter()
        .filter(|p| !p.loss)
        .map(|p| p.quote)
        .reduce(|a, b| match side {
            Side::Bid => a.max(b),
            Side::Offer => a.min(b),
        });
    let winners: Vec<usize> = match best {
        Some(b) => (0..participants.len())
            .filter(|&i| !participants[i].loss && participants[i].quote == b)
            .collect(),
        None => Vec::new(),
    };
    let win_utility = if winners.len() == 1 {
        1.0
    } else {
        1.0 / winners.len() as f64 - 0.5
    };
    for (i, p) in participants.iter_mut().enumerate() {
        p.utility = if p.loss {
            -1.0
        } else if winners.contains(&i) {
            win_utility
        } else {
            0.0
        };
    }
    AuctionOutcome {
        participants,
        winners,
    }
}
