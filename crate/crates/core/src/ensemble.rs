//! Voting ensembles of fill-probability classifiers.
//!
//! Probabilities are combined by the arithmetic mean ([`soft_vote`]); class
//! labels by strict majority ([`majority_vote`]).

use serde::{Deserialize, Serialize};

use crate::bnt::BntModel;
use crate::error::{Error, Result};
use crate::features::{FeaturePipeline, FeatureRow};
use crate::linear_models::{predict_logistic, LassoLogisticModel};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteMode {
    #[default]
    Soft,
    Hard,
}

/// Mean of the member probabilities. Summed in sorted order so the result
/// does not depend on member order.
pub fn soft_vote(probabilities: &[f64]) -> Result<f64> {
    check_probabilities(probabilities)?;
    let mut sorted = probabilities.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted.iter().sum::<f64>() / sorted.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MajorityVote {
    pub class: u8,
    /// An even number of members split exactly; resolved to class 0.
    pub tie: bool,
}

/// Class 1 iff strictly more than half of the members have `p > threshold`.
pub fn majority_vote(probabilities: &[f64], threshold: f64) -> Result<MajorityVote> {
    check_probabilities(probabilities)?;
    let n = probabilities.len();
    let ones = probabilities.iter().filter(|p| **p > threshold).count();
    Ok(MajorityVote {
        class: (2 * ones > n) as u8,
        tie: 2 * ones == n,
    })
}

fn check_probabilities(probabilities: &[f64]) -> Result<()> {
    if probabilities.is_empty() {
        return Err(Error::InvalidInput("no member probabilities".into()));
    }
    if let Some(p) = probabilities.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidInput(format!(
            "probability {p} outside [0, 1]"
        )));
    }
    Ok(())
}

/// A fitted fill-probability model on standardized inputs.
#[derive(Debug, Clone, PartialEq)]
pub enum Classifier {
    Bnt(BntModel),
    Lasso(LassoLogisticModel),
}

impl Classifier {
    pub fn n_features(&self) -> usize {
        match self {
            Classifier::Bnt(m) => m.n_features,
            Classifier::Lasso(m) => m.coefficients.len(),
        }
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        match self {
            Classifier::Bnt(m) => m.predict_proba(x),
            Classifier::Lasso(m) => predict_logistic(m, x),
        }
    }
}

/// A classifier together with the feature pipeline it was trained behind.
#[derive(Debug, Clone, PartialEq)]
pub struct FillModel {
    pub name: String,
    pub pipeline: FeaturePipeline,
    pub classifier: Classifier,
}

impl FillModel {
    pub fn new(
        name: impl Into<String>,
        pipeline: FeaturePipeline,
        classifier: Classifier,
    ) -> Result<Self> {
        let width = pipeline.names().len();
        if classifier.n_features() != width {
            return Err(Error::InvalidInput(format!(
                "classifier expects {} features, pipeline produces {width}",
                classifier.n_features()
            )));
        }
        Ok(Self {
            name: name.into(),
            pipeline,
            classifier,
        })
    }

    pub fn predict_row(&self, row: &FeatureRow) -> Result<f64> {
        self.classifier.predict_proba(&self.pipeline.transform(row))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    pub members: Vec<FillModel>,
    /// How [`EnsembleModel::predict_proba`] combines members.
    pub vote: VoteMode,
    pub threshold: f64,
}

impl EnsembleModel {
    pub fn new(members: Vec<FillModel>, vote: VoteMode, threshold: f64) -> Result<Self> {
        if members.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "an ensemble needs at least 2 members, got {}",
                members.len()
            )));
        }
        let schema = &members[0].pipeline.schema;
        if let Some(m) = members.iter().find(|m| &m.pipeline.schema != schema) {
            return Err(Error::InvalidInput(format!(
                "member `{}` uses a different feature schema",
                m.name
            )));
        }
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::InvalidInput(format!(
                "threshold {threshold} outside [0, 1]"
            )));
        }
        Ok(Self {
            members,
            vote,
            threshold,
        })
    }

    pub fn member_probabilities(&self, row: &FeatureRow) -> Result<Vec<f64>> {
        self.members.iter().map(|m| m.predict_row(row)).collect()
    }

    /// Combined probability. Hard mode returns the majority class as 0 or 1.
    pub fn predict_proba(&self, row: &FeatureRow) -> Result<f64> {
        let ps = self.member_probabilities(row)?;
        match self.vote {
            VoteMode::Soft => soft_vote(&ps),
            VoteMode::Hard => Ok(majority_vote(&ps, self.threshold)?.class as f64),
        }
    }

    pub fn predict_class(&self, row: &FeatureRow) -> Result<MajorityVote> {
        majority_vote(&self.member_probabilities(row)?, self.threshold)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soft_vote_examples() {
        assert!((soft_vote(&[0.2, 0.4, 0.9]).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(soft_vote(&[0.3, 0.3, 0.3]).unwrap(), 0.3);
        assert!(soft_vote(&[]).is_err());
        assert!(soft_vote(&[0.5, 1.5]).is_err());
    }

    #[test]
    fn majority_examples() {
        assert_eq!(majority_vote(&[0.9, 0.8, 0.1], 0.5).unwrap().class, 1);
        assert_eq!(majority_vote(&[0.4, 0.4, 0.6], 0.5).unwrap().class, 0);
        assert_eq!(majority_vote(&[1.0, 1.0, 1.0], 1.0).unwrap().class, 0);
        let tie = majority_vote(&[0.9, 0.1], 0.5).unwrap();
        assert_eq!(
            tie,
            MajorityVote {
                class: 0,
                tie: true
            }
        );
    }
}
