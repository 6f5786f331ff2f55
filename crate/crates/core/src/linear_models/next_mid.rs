use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::market_sim::{RfqRecord, Side};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NextMidSample {
    pub mid: f64,
    /// 1 for bid, 0 for offer.
    pub side: f64,
    pub next_mid: f64,
}

impl From<&RfqRecord> for NextMidSample {
    fn from(r: &RfqRecord) -> Self {
        Self {
            mid: r.mid_price,
            side: r.side.code() as f64,
            next_mid: r.next_mid_price,
        }
    }
}

/// `NextMidPrice ≈ intercept + coef_mid * MidPrice + coef_side * Side`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextMidModel {
    pub intercept: f64,
    pub coef_mid: f64,
    pub coef_side: f64,
    /// Adjusted R² on the held-out validation rows, when provided.
    pub adjusted_r2: Option<f64>,
}

impl NextMidModel {
    pub fn predict(&self, mid: f64, side: Side) -> f64 {
        self.intercept + self.coef_mid * mid + self.coef_side * side.code() as f64
    }

    pub fn residuals(&self, rows: &[NextMidSample]) -> Vec<f64> {
        rows.iter()
            .map(|r| {
                r.next_mid - (self.intercept + self.coef_mid * r.mid + self.coef_side * r.side)
            })
            .collect()
    }
}

/// Least squares on `[1, mid, side]`, solved on centered columns.
pub fn ols_next_mid(train: &[NextMidSample]) -> Result<NextMidModel> {
    let n = train.len();
    if n < 3 {
        return Err(Error::InvalidInput(format!(
            "{n} rows cannot identify three coefficients"
        )));
    }
    let nf = n as f64;
    let m_bar = train.iter().map(|r| r.mid).sum::<f64>() / nf;
    let s_bar = train.iter().map(|r| r.side).sum::<f64>() / nf;
    let y_bar = train.iter().map(|r| r.next_mid).sum::<f64>() / nf;
    let (mut s11, mut s12, mut s22, mut s1y, mut s2y) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for r in train {
        let (a, b, y) = (r.mid - m_bar, r.side - s_bar, r.next_mid - y_bar);
        s11 += a * a;
        s12 += a * b;
        s22 += b * b;
        s1y += a * y;
        s2y += b * y;
    }
    if s11 == 0.0 {
        return Err(Error::Singular("MidPrice is constant".into()));
    }
    if s22 == 0.0 {
        return Err(Error::Singular("Side is constant".into()));
    }
    let det = s11 * s22 - s12 * s12;
    if det <= 1e-12 * s11 * s22 {
        return Err(Error::Singular("MidPrice and Side are collinear".into()));
    }
    let coef_mid = (s1y * s22 - s2y * s12) / det;
    let coef_side = (s2y * s11 - s1y * s12) / det;
    Ok(NextMidModel {
        intercept: y_bar - coef_mid * m_bar - coef_side * s_bar,
        coef_mid,
        coef_side,
        adjusted_r2: None,
    })
}

/// Adjusted R² of `model` on `rows` with two regressors.
pub fn adjusted_r2(model: &NextMidModel, rows: &[NextMidSample]) -> Result<f64> {
    let n = rows.len();
    if n <= 3 {
        return Err(Error::InvalidInput(
            "adjusted R² needs more than 3 rows".into(),
        ));
    }
    let y_bar = rows.iter().map(|r| r.next_mid).sum::<f64>() / n as f64;
    let sst: f64 = rows.iter().map(|r| (r.next_mid - y_bar).powi(2)).sum();
    if sst == 0.0 {
        return Err(Error::InvalidInput("validation target is constant".into()));
    }
    let ssr: f64 = model.residuals(rows).iter().map(|e| e * e).sum();
    let r2 = 1.0 - ssr / sst;
    Ok(1.0 - (1.0 - r2) * (n as f64 - 1.0) / (n as f64 - 3.0))
}

/// Fits on `train` and scores adjusted R² on `validation`.
pub fn fit_next_mid(train: &[NextMidSample], validation: &[NextMidSample]) -> Result<NextMidModel> {
    let mut model = ols_next_mid(train)?;
    model.adjusted_r2 = Some(adjusted_r2(&model, validation)?);
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QqPoint {
    pub theoretical: f64,
    pub empirical: f64,
}

/// Standardized residuals sorted against standard-normal quantiles at
/// plotting positions `(i - 0.5) / n`.
pub fn qq_data(residuals: &[f64]) -> Result<Vec<QqPoint>> {
    let n = residuals.len();
    if n < 10 {
        return Err(Error::InvalidInput(format!(
            "Q-Q data needs at least 10 residuals, got {n}"
        )));
    }
    let mean = residuals.iter().sum::<f64>() / n as f64;
    let var = residuals.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    if var == 0.0 {
        return Err(Error::InvalidInput("residuals have zero variance".into()));
    }
    let sd = var.sqrt();
    let mut z: Vec<f64> = residuals.iter().map(|r| (r - mean) / sd).collect();
    z.sort_by(f64::total_cmp);
    let normal = Normal::standard();
    Ok(z.into_iter()
        .enumerate()
        .map(|(i, empirical)| QqPoint {
            theoretical: normal.inverse_cdf((i as f64 + 0.5) / n as f64),
            empirical,
        })
        .collect())
}
