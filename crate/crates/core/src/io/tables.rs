//! CSV renderings of curves, reports and decisions. Prices and offsets are
//! written with six decimals; other reals in shortest round-trip form.

use crate::bnt::{GridPoint, TrainingLogEntry};
use crate::error::{Error, Result};
use crate::evaluation::CvResult;
use crate::features::{FillRateCurve, FEATURE_NAMES};
use crate::linear_models::QqPoint;
use crate::pipeline::{CompeteResult, ModelEvaluation, Prepared};
use crate::pricing::{CurveSet, PayoffPoint, QuoteDecision};

fn price(v: f64) -> String {
    format!("{v:.6}")
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::io("<csv buffer>", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn side_name(side: crate::market_sim::Side) -> &'static str {
    match side {
        crate::market_sim::Side::Bid => "bid",
        crate::market_sim::Side::Offer => "offer",
    }
}

/// Engineered features of every record.
pub fn features_csv(prepared: &Prepared) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["Time", "Bond", "Live", "HistoryValid", "Status"];
    header.extend(FEATURE_NAMES);
    w.write_record(&header)?;
    for (r, f) in prepared.records.iter().zip(&prepared.features) {
        let mut row = vec![
            r.time.to_string(),
            r.bond.to_string(),
            (r.live as u8).to_string(),
            (f.history_valid as u8).to_string(),
            r.status.code().to_string(),
        ];
        row.extend(
            FEATURE_NAMES
                .iter()
                .map(|n| f.get(n).expect("known feature").to_string()),
        );
        w.write_record(&row)?;
    }
    finish(w)
}

pub fn fill_rate_curves_csv(curves: &[FillRateCurve]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["feature", "bin_center", "raw_rate", "smooth_rate", "count"])?;
    for c in curves {
        for k in 0..c.bin_centers.len() {
            w.write_record([
                c.feature.clone(),
                c.bin_centers[k].to_string(),
                c.raw_rates[k].to_string(),
                c.smoothed_rates[k].to_string(),
                c.counts[k].to_string(),
            ])?;
        }
    }
    finish(w)
}

pub fn training_log_csv(log: &[TrainingLogEntry]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["iteration", "bound", "n_leaves", "grown"])?;
    for e in log {
        w.write_record([
            e.iteration.to_string(),
            e.bound.to_string(),
            e.n_leaves.to_string(),
            (e.grown as u8).to_string(),
        ])?;
    }
    finish(w)
}

pub fn qq_csv(points: &[QqPoint]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["theoretical", "empirical"])?;
    for p in points {
        w.write_record([p.theoretical.to_string(), p.empirical.to_string()])?;
    }
    finish(w)
}

pub fn quote_decisions_csv(decisions: &[QuoteDecision]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "Time",
        "Bond",
        "Side",
        "MidPrice",
        "PredictedNextMid",
        "GridOffset",
        "CandidateQuote",
        "Quote",
        "OffsetFromPrediction",
        "OffsetFromMid",
        "PFill",
        "PExceed",
        "ExpectedPayoff",
        "CapApplied",
    ])?;
    for d in decisions {
        w.write_record([
            d.time.to_string(),
            d.bond.to_string(),
            side_name(d.side).to_string(),
            price(d.mid),
            price(d.predicted_next_mid),
            format!("{:.2}", d.grid_offset),
            price(d.candidate_quote),
            price(d.quote),
            price(d.offset_from_prediction),
            price(d.offset_from_mid),
            d.p_fill.to_string(),
            d.p_exceed.to_string(),
            d.expected_payoff.to_string(),
            (d.cap_applied as u8).to_string(),
        ])?;
    }
    finish(w)
}

pub fn payoff_curves_csv(curves: &[(u32, Vec<PayoffPoint>)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "Time", "offset", "quote", "p_fill", "p_exceed", "payoff", "feasible",
    ])?;
    for (time, points) in curves {
        for p in points {
            w.write_record([
                time.to_string(),
                format!("{:.2}", p.offset),
                price(p.quote),
                p.p_fill.to_string(),
                p.p_exceed.to_string(),
                p.payoff.to_string(),
                (p.feasible as u8).to_string(),
            ])?;
        }
    }
    finish(w)
}

pub fn exceed_curves_csv(curves: &CurveSet) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["bond", "side", "offset", "probability", "n_samples"])?;
    for c in &curves.curves {
        for (o, p) in c.offsets.iter().zip(&c.probabilities) {
            w.write_record([
                c.bond.to_string(),
                side_name(c.side).to_string(),
                format!("{o:.2}"),
                p.to_string(),
                c.n_samples.to_string(),
            ])?;
        }
    }
    finish(w)
}

/// One row per participant of every auction; participant 0 is us.
pub fn compete_csv(results: &[CompeteResult]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "Time",
        "Bond",
        "NextMidPrice",
        "participant",
        "quote",
        "loss",
        "winner",
        "utility",
    ])?;
    for r in results {
        for (i, p) in r.outcome.participants.iter().enumerate() {
            w.write_record([
                r.time.to_string(),
                r.bond.to_string(),
                price(r.next_mid),
                if i == 0 {
                    "us".to_string()
                } else {
                    format!("competitor_{i}")
                },
                price(p.quote),
                (p.loss as u8).to_string(),
                (r.outcome.winners.contains(&i) as u8).to_string(),
                p.utility.to_string(),
            ])?;
        }
    }
    finish(w)
}

/// Model-comparison table.
pub fn evaluation_csv(evals: &[ModelEvaluation]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "model", "n", "log_loss", "accuracy", "f1", "tp", "fp", "tn", "fn", "fpr", "fnr",
    ])?;
    for e in evals {
        let r = &e.report;
        let c = &r.confusion;
        w.write_record([
            e.model.clone(),
            r.n.to_string(),
            r.log_loss.to_string(),
            r.accuracy.to_string(),
            r.f1.to_string(),
            c.tp.to_string(),
            c.fp.to_string(),
            c.tn.to_string(),
            c.fn_.to_string(),
            opt(c.false_positive_rate()),
            opt(c.false_negative_rate()),
        ])?;
    }
    finish(w)
}

pub fn competition_errors_csv(evals: &[ModelEvaluation]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["model", "competition", "n", "errors", "error_rate"])?;
    for e in evals {
        for c in &e.by_competition {
            w.write_record([
                e.model.clone(),
                c.competition.to_string(),
                c.n.to_string(),
                c.errors.to_string(),
                c.error_rate.to_string(),
            ])?;
        }
    }
    finish(w)
}

pub fn cv_table_csv(param: &str, grid: &[f64], cv: &CvResult<f64>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        param,
        "fold",
        "log_loss",
        "error",
        "mean_log_loss",
        "selected",
    ])?;
    for row in &cv.table {
        w.write_record([
            grid[row.point].to_string(),
            (row.fold + 1).to_string(),
            opt(row.log_loss),
            row.error.clone().unwrap_or_default(),
            opt(cv.mean_log_loss[row.point]),
            ((row.point == cv.best_index) as u8).to_string(),
        ])?;
    }
    finish(w)
}

pub fn boundary_csv(names: (&str, &str), grid: &[GridPoint], raw: &[(f64, f64)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        format!("{}_z", names.0),
        format!("{}_z", names.1),
        names.0.to_string(),
        names.1.to_string(),
        "probability".to_string(),
    ])?;
    for (p, (ri, rj)) in grid.iter().zip(raw) {
        w.write_record([
            p.x_i.to_string(),
            p.x_j.to_string(),
            ri.to_string(),
            rj.to_string(),
            p.probability.to_string(),
        ])?;
    }
    finish(w)
}
