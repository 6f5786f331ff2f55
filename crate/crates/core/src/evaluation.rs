//! Classification metrics, leakage-free time-series folds and grid search.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probabilities are clipped to `[CLIP, 1 - CLIP]` before taking logs.
pub const LOG_LOSS_CLIP: f64 = 1e-12;
pub const HISTOGRAM_BINS: usize = 20;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn false_positive_rate(&self) -> Option<f64> {
        let neg = self.fp + self.tn;
        (neg > 0).then(|| self.fp as f64 / neg as f64)
    }

    pub fn false_negative_rate(&self) -> Option<f64> {
        let pos = self.tp + self.fn_;
        (pos > 0).then(|| self.fn_ as f64 / pos as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub threshold: f64,
    pub log_loss: f64,
    pub accuracy: f64,
    /// Positive class is "done".
    pub f1: f64,
    pub confusion: Confusion,
    /// Counts of predicted probabilities in 20 equal-width bins on `[0, 1]`.
    pub histogram: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompetitionErrors {
    pub competition: u8,
    pub n: usize,
    pub errors: usize,
    pub error_rate: f64,
}

fn check_lengths(y_true: &[u8], p_pred: &[f64]) -> Result<()> {
    if y_true.is_empty() {
        return Err(Error::InvalidInput("no predictions to evaluate".into()));
    }
    if y_true.len() != p_pred.len() {
        return Err(Error::InvalidInput(format!(
            "{} labels but {} predictions",
            y_true.len(),
            p_pred.len()
        )));
    }
    if y_true.iter().any(|y| *y > 1) {
        return Err(Error::InvalidInput("labels must be 0 or 1".into()));
    }
    if p_pred.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidInput("predictions must lie in [0, 1]".into()));
    }
    Ok(())
}

/// Mean binary cross-entropy with clipped probabilities.
pub fn log_loss(y_true: &[u8], p_pred: &[f64]) -> Result<f64> {
    check_lengths(y_true, p_pred)?;
    let total: f64 = y_true
        .iter()
        .zip(p_pred)
        .map(|(&y, &p)| {
            let p = p.clamp(LOG_LOSS_CLIP, 1.0 - LOG_LOSS_CLIP);
            if y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(total / y_true.len() as f64)
}

/// Predicted class is 1 when `p > threshold`.
pub fn classification_report(y_true: &[u8], p_pred: &[f64], threshold: f64) -> Result<EvalReport> {
    let log_loss = log_loss(y_true, p_pred)?;
    let mut c = Confusion::default();
    let mut histogram = vec![0; HISTOGRAM_BINS];
    for (&y, &p) in y_true.iter().zip(p_pred) {
        let predicted = p > threshold;
        match (predicted, y == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
        let bin = ((p * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
        histogram[bin] += 1;
    }
    let n = y_true.len();
    let f1_denominator = 2 * c.tp + c.fp + c.fn_;
    let f1 = if f1_denominator == 0 {
        1.0
    } else {
        2.0 * c.tp as f64 / f1_denominator as f64
    };
    Ok(EvalReport {
        n,
        threshold,
        log_loss,
        accuracy: (c.tp + c.tn) as f64 / n as f64,
        f1,
        confusion: c,
        histogram,
    })
}

/// Misclassification counts grouped by number of competitors.
pub fn errors_by_competition(
    y_true: &[u8],
    p_pred: &[f64],
    competition: &[u8],
    threshold: f64,
) -> Result<Vec<CompetitionErrors>> {
    check_lengths(y_true, p_pred)?;
    if competition.len() != y_true.len() {
        return Err(Error::InvalidInput(
            "competition column length mismatch".into(),
        ));
    }
    let mut levels: Vec<u8> = competition.to_vec();
    levels.sort_unstable();
    levels.dedup();
    Ok(levels
        .into_iter()
        .map(|level| {
            let (mut n, mut errors) = (0, 0);
            for ((&y, &p), &c) in y_true.iter().zip(p_pred).zip(competition) {
                if c == level {
                    n += 1;
                    errors += ((p > threshold) != (y == 1)) as usize;
                }
            }
            CompetitionErrors {
                competition: level,
                n,
                errors,
                error_rate: errors as f64 / n as f64,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    #[default]
    Expanding,
    Sliding,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Range<usize>,
    pub validation: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSpec {
    pub n: usize,
    pub kind: WindowKind,
    pub folds: Vec<Fold>,
}

impl FoldSpec {
    /// Every training range ends before its validation range starts, and
    /// validation ranges never overlap.
    pub fn validate(&self) -> Result<()> {
        let mut last_val_end = 0;
        for (j, f) in self.folds.iter().enumerate() {
            if f.train.is_empty() || f.validation.is_empty() {
                return Err(Error::InvalidInput(format!("fold {} is empty", j + 1)));
            }
            if f.train.end > f.validation.start {
                return Err(Error::InvalidInput(format!(
                    "fold {} trains on rows after its validation start",
                    j + 1
                )));
            }
            if f.validation.start < last_val_end || f.validation.end > self.n {
                return Err(Error::InvalidInput(format!(
                    "fold {} validation range overlaps or overruns",
                    j + 1
                )));
            }
            last_val_end = f.validation.end;
        }
        Ok(())
    }

    /// Checks `max(train time) < min(validation time)` for every fold.
    pub fn check_times(&self, times: &[u32]) -> Result<()> {
        if times.len() != self.n {
            return Err(Error::InvalidInput(format!(
                "{} timestamps for a {}-row fold spec",
                times.len(),
                self.n
            )));
        }
        for (j, f) in self.folds.iter().enumerate() {
            check_time_order(times, &f.train, &f.validation)
                .map_err(|e| Error::InvalidInput(format!("fold {}: {e}", j + 1)))?;
        }
        Ok(())
    }
}

/// `max(times[train]) < min(times[later])`.
pub fn check_time_order(times: &[u32], train: &Range<usize>, later: &Range<usize>) -> Result<()> {
    let max_train = times[train.clone()].iter().max();
    let min_later = times[later.clone()].iter().min();
    match (max_train, min_later) {
        (Some(a), Some(b)) if a >= b => Err(Error::InvalidInput(format!(
            "training time {a} is not before held-out time {b}"
        ))),
        _ => Ok(()),
    }
}

/// `k` folds over `n` time-ordered rows in blocks of `n / (k + 1)`.
///
/// Expanding: fold `j` trains on `[0, j n/(k+1))`. Sliding: trains on the
/// single preceding block. Both validate on the next block.
pub fn time_series_folds_with(n: usize, k: usize, kind: WindowKind) -> Result<FoldSpec> {
    if k == 0 {
        return Err(Error::InvalidInput("need at least one fold".into()));
    }
    if n < 2 * k || n < k + 1 {
        return Err(Error::InvalidInput(format!(
            "{n} rows are too few for {k} folds"
        )));
    }
    let edge = |j: usize| j * n / (k + 1);
    let folds = (1..=k)
        .map(|j| Fold {
            train: match kind {
                WindowKind::Expanding => 0..edge(j),
                WindowKind::Sliding => edge(j - 1)..edge(j),
            },
            validation: edge(j)..edge(j + 1),
        })
        .collect();
    let spec = FoldSpec { n, kind, folds };
    spec.validate()?;
    Ok(spec)
}

pub fn time_series_folds(n: usize, k: usize) -> Result<FoldSpec> {
    time_series_folds_with(n, k, WindowKind::Expanding)
}

/// First `floor(train_fraction n)` rows for training, the rest held out.
pub fn chronological_split(n: usize, train_fraction: f64) -> Result<(Range<usize>, Range<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidInput(format!(
            "train fraction {train_fraction} outside (0, 1)"
        )));
    }
    let cut = (n as f64 * train_fraction).floor() as usize;
    if cut == 0 || cut == n {
        return Err(Error::InvalidInput(format!("{n} rows cannot be split")));
    }
    Ok((0..cut, cut..n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub point: usize,
    pub fold: usize,
    pub log_loss: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult<P> {
    pub best: P,
    pub best_index: usize,
    /// Mean validation log-loss per grid point; `None` if any fold failed.
    pub mean_log_loss: Vec<Option<f64>>,
    /// One row per (grid point, fold), grid-major.
    pub table: Vec<CvRow>,
}

/// Evaluates every grid point on every fold and picks the lowest mean
/// validation log-loss; ties go to the smallest `complexity`.
///
/// `evaluate` trains on `fold.train` and returns the log-loss on
/// `fold.validation`. A point with a failed fold is excluded.
pub fn grid_search_cv<P, C, E>(
    grid: &[P],
    folds: &FoldSpec,
    complexity: C,
    evaluate: E,
) -> Result<CvResult<P>>
where
    P: Clone + Sync,
    C: Fn(&P) -> f64,
    E: Fn(&P, &Fold) -> Result<f64> + Sync,
{
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty parameter grid".into()));
    }
    folds.validate()?;
    let k = folds.folds.len();
    let table: Vec<CvRow> = (0..grid.len() * k)
        .into_par_iter()
        .map(|job| {
            let (point, fold) = (job / k, job % k);
            match evaluate(&grid[point], &folds.folds[fold]) {
                Ok(v) if v.is_finite() => CvRow {
                    point,
                    fold,
                    log_loss: Some(v),
                    error: None,
                },
                Ok(v) => CvRow {
                    point,
                    fold,
                    log_loss: None,
                    error: Some(format!("non-finite log-loss {v}")),
                },
                Err(e) => CvRow {
                    point,
                    fold,
                    log_loss: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let mean_log_loss: Vec<Option<f64>> = table
        .chunks(k)
        .map(|rows| {
            rows.iter()
                .map(|r| r.log_loss)
                .sum::<Option<f64>>()
                .map(|s| s / k as f64)
        })
        .collect();

    let mut best: Option<usize> = None;
    for (i, m) in mean_log_loss.iter().enumerate() {
        let Some(m) = m else { continue };
        best = match best {
            None => Some(i),
            Some(b) => {
                let mb = mean_log_loss[b].unwrap();
                if *m < mb || (*m == mb && complexity(&grid[i]) < complexity(&grid[b])) {
                    Some(i)
                } else {
                    Some(b)
                }
            }
        };
    }
    for row in table.iter().filter(|r| r.error.is_some()) {
        log::warn!(
            "grid point {} fold {} failed: {}",
            row.point,
            row.fold + 1,
            row.error.as_deref().unwrap_or_default()
        );
    }
    let best_index = best.ok_or_else(|| Error::InvalidInput("every grid point failed".into()))?;
    Ok(CvResult {
        best: grid[best_index].clone(),
        best_index,
        mean_log_loss,
        table,
    })
}

/// `n` values log-spaced from `10^lo_exp` to `10^hi_exp` inclusive.
pub fn log_space(lo_exp: f64, hi_exp: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![10f64.powf(lo_exp)],
        _ => (0..n)
            .map(|i| 10f64.powf(lo_exp + (hi_exp - lo_exp) * i as f64 / (n - 1) as f64))
            .collect(),
    }
}
