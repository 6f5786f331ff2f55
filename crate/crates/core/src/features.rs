//! Feature engineering for the fill-probability models and the empirical
//! fill-rate curves.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_sim::{RfqRecord, Side};
use crate::spline;

/// Prior observations a bond needs before its momentum features are usable.
pub const MIN_HISTORY: usize = 20;

pub const FEATURE_NAMES: [&str; 9] = [
    "mom5",
    "mom10",
    "mom20",
    "spread",
    "response",
    "log_notional",
    "competition",
    "counterparty",
    "side",
];

/// Columns treated as categorical (never z-scored).
const CATEGORICAL: [&str; 3] = ["competition", "counterparty", "side"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub mom5: f64,
    pub mom10: f64,
    pub mom20: f64,
    pub spread: f64,
    pub response: f64,
    pub log_notional: f64,
    pub competition: u8,
    pub counterparty: u8,
    pub side: Side,
    pub history_valid: bool,
}

impl FeatureRow {
    /// Copy of this row with Spread and Response re-derived for another quote.
    pub fn with_quote(&self, mid: f64, quote: f64) -> FeatureRow {
        FeatureRow {
            spread: mid - quote,
            response: response(self.side, mid, quote),
            ..self.clone()
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        Some(match name {
            "mom5" => self.mom5,
            "mom10" => self.mom10,
            "mom20" => self.mom20,
            "spread" => self.spread,
            "response" => self.response,
            "log_notional" => self.log_notional,
            "competition" => self.competition as f64,
            "counterparty" => self.counterparty as f64,
            "side" => self.side.code() as f64,
            _ => return None,
        })
    }
}

/// `current / past - 1`.
pub fn momentum(current: f64, past: f64) -> Result<f64> {
    if past == 0.0 {
        return Err(Error::InvalidInput(
            "zero mid-price in momentum denominator".into(),
        ));
    }
    Ok(current / past - 1.0)
}

/// Side-signed `MidPrice - QuotedPrice`.
pub fn response(side: Side, mid: f64, quoted: f64) -> f64 {
    (mid - quoted) * side.sign()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoricalEncoding {
    #[default]
    PassThrough,
    OneHot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureOptions {
    /// Base of the notional logarithm; `e` by default.
    pub log_base: f64,
    pub encoding: CategoricalEncoding,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        Self {
            log_base: std::f64::consts::E,
            encoding: CategoricalEncoding::PassThrough,
        }
    }
}

/// Engineered features for every record, in input order.
///
/// Momentum is taken over each bond's own mid-price sequence.
pub fn compute_features(records: &[RfqRecord], opts: &FeatureOptions) -> Result<Vec<FeatureRow>> {
    if !(opts.log_base > 0.0 && opts.log_base != 1.0) {
        return Err(Error::Config(format!("invalid log base {}", opts.log_base)));
    }
    let n_bonds = records
        .iter()
        .map(|r| r.bond as usize + 1)
        .max()
        .unwrap_or(0);
    let mut history: Vec<Vec<f64>> = vec![Vec::new(); n_bonds];
    let ln_base = opts.log_base.ln();

    records
        .iter()
        .map(|r| {
            let hist = &mut history[r.bond as usize];
            hist.push(r.mid_price);
            let j = hist.len() - 1;
            let mom = |lag: usize| -> Result<f64> {
                if j >= lag {
                    momentum(hist[j], hist[j - lag])
                } else {
                    Ok(0.0)
                }
            };
            Ok(FeatureRow {
                mom5: mom(5)?,
                mom10: mom(10)?,
                mom20: mom(20)?,
                spread: r.mid_price - r.quoted_price,
                response: response(r.side, r.mid_price, r.quoted_price),
                log_notional: (r.notional as f64).ln() / ln_base,
                competition: r.competition,
                counterparty: r.counterparty,
                side: r.side,
                history_valid: j >= MIN_HISTORY,
            })
        })
        .collect()
}

/// Column layout of the model input before standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub columns: Vec<String>,
    pub encoding: CategoricalEncoding,
}

impl FeatureSchema {
    pub fn new(encoding: CategoricalEncoding) -> Self {
        let mut columns = Vec::new();
        for name in FEATURE_NAMES {
            match (encoding, name) {
                (CategoricalEncoding::OneHot, "competition") => {
                    columns.extend((1..=4).map(|k| format!("competition_{k}")))
                }
                (CategoricalEncoding::OneHot, "counterparty") => {
                    columns.extend((0..=3).map(|k| format!("counterparty_{k}")))
                }
                _ => columns.push(name.to_string()),
            }
        }
        Self { columns, encoding }
    }

    pub fn encode(&self, row: &FeatureRow) -> Vec<f64> {
        self.columns
            .iter()
            .map(|c| {
                if let Some(v) = row.get(c) {
                    v
                } else if let Some(k) = c.strip_prefix("competition_") {
                    (row.competition.to_string() == k) as u8 as f64
                } else if let Some(k) = c.strip_prefix("counterparty_") {
                    (row.counterparty.to_string() == k) as u8 as f64
                } else {
                    unreachable!("unknown column {c}")
                }
            })
            .collect()
    }

    fn is_categorical(name: &str) -> bool {
        CATEGORICAL
            .iter()
            .any(|c| name == *c || name.starts_with(&format!("{c}_")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    ZScore,
    PassThrough,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub name: String,
    pub kind: ColumnKind,
    pub mean: f64,
    pub std: f64,
}

/// Per-column transform learned on training rows. Constant columns are dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    /// Position of each kept column in the raw design row.
    pub kept: Vec<usize>,
    pub columns: Vec<ColumnStats>,
    pub dropped: Vec<String>,
}

impl StandardizationStats {
    pub fn fit(rows: &[Vec<f64>], names: &[String]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidInput(
                "cannot standardize an empty table".into(),
            ));
        }
        let n = rows.len() as f64;
        let mut kept = Vec::new();
        let mut columns = Vec::new();
        let mut dropped = Vec::new();
        for (j, name) in names.iter().enumerate() {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            let min = col.iter().copied().fold(f64::INFINITY, f64::min);
            let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if min == max {
                dropped.push(name.clone());
                continue;
            }
            let mean = col.iter().sum::<f64>() / n;
            let std = (col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
            let kind = if FeatureSchema::is_categorical(name) {
                ColumnKind::PassThrough
            } else {
                ColumnKind::ZScore
            };
            kept.push(j);
            columns.push(ColumnStats {
                name: name.clone(),
                kind,
                mean,
                std,
            });
        }
        if !dropped.is_empty() {
            log::warn!("dropped constant columns: {}", dropped.join(", "));
        }
        Ok(Self {
            kept,
            columns,
            dropped,
        })
    }

    pub fn names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn apply(&self, raw: &[f64]) -> Vec<f64> {
        self.kept
            .iter()
            .zip(&self.columns)
            .map(|(&j, c)| match c.kind {
                ColumnKind::ZScore => (raw[j] - c.mean) / c.std,
                ColumnKind::PassThrough => raw[j],
            })
            .collect()
    }

    /// Maps a standardized row back to the raw scale of the kept columns.
    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(&self.columns)
            .map(|(v, c)| match c.kind {
                ColumnKind::ZScore => v * c.std + c.mean,
                ColumnKind::PassThrough => *v,
            })
            .collect()
    }
}

/// Standardizes `rows`, fitting the statistics unless `stats` is supplied.
pub fn standardize(
    rows: &[Vec<f64>],
    names: &[String],
    stats: Option<&StandardizationStats>,
) -> Result<(Vec<Vec<f64>>, StandardizationStats)> {
    if rows.is_empty() {
        return Err(Error::InvalidInput(
            "cannot standardize an empty table".into(),
        ));
    }
    let stats = match stats {
        Some(s) => s.clone(),
        None => StandardizationStats::fit(rows, names)?,
    };
    let out = rows.iter().map(|r| stats.apply(r)).collect();
    Ok((out, stats))
}

/// Schema plus learned statistics: everything needed to turn a
/// [`FeatureRow`] into a model input vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePipeline {
    pub schema: FeatureSchema,
    pub stats: StandardizationStats,
}

impl FeaturePipeline {
    pub fn fit(rows: &[FeatureRow], encoding: CategoricalEncoding) -> Result<Self> {
        let schema = FeatureSchema::new(encoding);
        let raw: Vec<Vec<f64>> = rows.iter().map(|r| schema.encode(r)).collect();
        let stats = StandardizationStats::fit(&raw, &schema.columns)?;
        Ok(Self { schema, stats })
    }

    pub fn transform(&self, row: &FeatureRow) -> Vec<f64> {
        self.stats.apply(&self.schema.encode(row))
    }

    pub fn transform_all(&self, rows: &[FeatureRow]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| self.transform(r)).collect()
    }

    pub fn names(&self) -> Vec<String> {
        self.stats.names()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FillRateCurve {
    pub feature: String,
    pub bin_centers: Vec<f64>,
    pub raw_rates: Vec<f64>,
    pub smoothed_rates: Vec<f64>,
    pub counts: Vec<usize>,
    /// Set when smoothing was skipped.
    pub notice: Option<String>,
}

/// Equal-count binned fill rates of `values`, plus a clamped spline smoothing.
pub fn fill_rate_curve(
    feature: &str,
    values: &[f64],
    statuses: &[bool],
    n_bins: usize,
    smoothing: f64,
) -> Result<FillRateCurve> {
    if values.len() != statuses.len() {
        return Err(Error::InvalidInput(format!(
            "{} values but {} statuses",
            values.len(),
            statuses.len()
        )));
    }
    if n_bins < 2 {
        return Err(Error::InvalidInput("need at least two bins".into()));
    }
    let n = values.len();
    if n < n_bins {
        return Err(Error::InvalidInput(format!(
            "{n} rows cannot fill {n_bins} bins"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));

    let mut bin_centers = Vec::with_capacity(n_bins);
    let mut raw_rates = Vec::with_capacity(n_bins);
    let mut counts = Vec::with_capacity(n_bins);
    for k in 0..n_bins {
        let idx = &order[k * n / n_bins..(k + 1) * n / n_bins];
        let count = idx.len();
        let center = idx.iter().map(|&i| values[i]).sum::<f64>() / count as f64;
        let filled = idx.iter().filter(|&&i| statuses[i]).count();
        bin_centers.push(center);
        raw_rates.push(filled as f64 / count as f64);
        counts.push(count);
    }

    let all_same = statuses.iter().all(|s| *s == statuses[0]);
    let (smoothed_rates, notice) = if all_same {
        (
            raw_rates.clone(),
            Some("all statuses identical; smoothing skipped".to_string()),
        )
    } else {
        let w: Vec<f64> = counts.iter().map(|c| *c as f64).collect();
        let fit = spline::smooth(&bin_centers, &raw_rates, &w, smoothing);
        (fit.into_iter().map(|v| v.clamp(0.0, 1.0)).collect(), None)
    };

    Ok(FillRateCurve {
        feature: feature.to_string(),
        bin_centers,
        raw_rates,
        smoothed_rates,
        counts,
        notice,
    })
}
