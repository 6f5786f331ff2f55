use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bnt::BntModel;
use crate::ensemble::{Classifier, EnsembleModel, FillModel, VoteMode};
use crate::error::{Error, Result};
use crate::features::FeaturePipeline;
use crate::linear_models::{LassoLogisticModel, NextMidModel};
use crate::market_sim::RfqRecord;

use super::{atomic_write, read_to_string, render_dataset};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Bnt,
    LassoLogistic,
    NextMid,
    Ensemble,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestMember {
    pub name: String,
    /// Relative paths are resolved against the manifest's directory.
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub members: Vec<ManifestMember>,
    pub vote: VoteMode,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelPayload {
    Bnt(BntModel),
    LassoLogistic(LassoLogisticModel),
    NextMid(NextMidModel),
    Ensemble(EnsembleManifest),
}

impl ModelPayload {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelPayload::Bnt(_) => ModelKind::Bnt,
            ModelPayload::LassoLogistic(_) => ModelKind::LassoLogistic,
            ModelPayload::NextMid(_) => ModelKind::NextMid,
            ModelPayload::Ensemble(_) => ModelKind::Ensemble,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub payload: ModelPayload,
    /// Feature schema and standardization stats; absent for next-mid and
    /// ensemble files.
    pub features: Option<FeaturePipeline>,
    pub seed: u64,
    pub training_fingerprint: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModelFile {
    schema_version: u32,
    model_kind: ModelKind,
    features: Option<FeaturePipeline>,
    parameters: serde_json::Value,
    /// Informational copy of the settings the model was fitted with.
    #[serde(default)]
    hyperparameters: serde_json::Value,
    seed: u64,
    training_fingerprint: String,
}

/// SHA-256 of the records in dataset CSV form.
pub fn fingerprint_records(records: &[RfqRecord]) -> String {
    hex::encode(Sha256::digest(render_dataset(records).as_bytes()))
}

fn model_error(path: &Path, message: impl Into<String>) -> Error {
    Error::ModelFile {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

impl ModelFile {
    pub fn to_json(&self) -> Result<String> {
        let parameters = match &self.payload {
            ModelPayload::Bnt(m) => serde_json::to_value(m)?,
            ModelPayload::LassoLogistic(m) => serde_json::to_value(m)?,
            ModelPayload::NextMid(m) => serde_json::to_value(m)?,
            ModelPayload::Ensemble(m) => serde_json::to_value(m)?,
        };
        let hyperparameters = match &self.payload {
            ModelPayload::Bnt(m) => serde_json::to_value(&m.hyperparams)?,
            ModelPayload::LassoLogistic(m) => serde_json::json!({ "lambda": m.lambda }),
            ModelPayload::NextMid(_) => serde_json::json!({}),
            ModelPayload::Ensemble(m) => {
                serde_json::json!({ "vote": m.vote, "threshold": m.threshold })
            }
        };
        let raw = RawModelFile {
            schema_version: SCHEMA_VERSION,
            model_kind: self.payload.kind(),
            features: self.features.clone(),
            parameters,
            hyperparameters,
            seed: self.seed,
            training_fingerprint: self.training_fingerprint.clone(),
        };
        let mut text = serde_json::to_string_pretty(&raw)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        let raw: RawModelFile =
            serde_json::from_str(text).map_err(|e| model_error(path, e.to_string()))?;
        if raw.schema_version != SCHEMA_VERSION {
            return Err(model_error(
                path,
                format!(
                    "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                    raw.schema_version
                ),
            ));
        }
        let bad = |e: serde_json::Error| model_error(path, format!("parameters: {e}"));
        let payload = match raw.model_kind {
            ModelKind::Bnt => {
                let m: BntModel = serde_json::from_value(raw.parameters).map_err(bad)?;
                m.validate_structure()
                    .map_err(|e| model_error(path, e.to_string()))?;
                if m.leaves.iter().any(|l| !(l.alpha > 0.0 && l.beta > 0.0)) {
                    return Err(model_error(
                        path,
                        "leaf posterior parameters must be positive",
                    ));
                }
                ModelPayload::Bnt(m)
            }
            ModelKind::LassoLogistic => {
                ModelPayload::LassoLogistic(serde_json::from_value(raw.parameters).map_err(bad)?)
            }
            ModelKind::NextMid => {
                ModelPayload::NextMid(serde_json::from_value(raw.parameters).map_err(bad)?)
            }
            ModelKind::Ensemble => {
                ModelPayload::Ensemble(serde_json::from_value(raw.parameters).map_err(bad)?)
            }
        };
        if matches!(payload.kind(), ModelKind::Bnt | ModelKind::LassoLogistic)
            && raw.features.is_none()
        {
            return Err(model_error(path, "classifier file has no feature pipeline"));
        }
        Ok(Self {
            payload,
            features: raw.features,
            seed: raw.seed,
            training_fingerprint: raw.training_fingerprint,
        })
    }
}

pub fn save_model_file(path: &Path, file: &ModelFile) -> Result<()> {
    atomic_write(path, file.to_json()?.as_bytes())
}

pub fn load_model_file(path: &Path) -> Result<ModelFile> {
    ModelFile::from_json(&read_to_string(path)?, path)
}

/// Loads a BNT or Lasso-logistic file as a [`FillModel`] named `name`.
pub fn load_fill_model(path: &Path, name: &str) -> Result<FillModel> {
    let file = load_model_file(path)?;
    let classifier = match file.payload {
        ModelPayload::Bnt(m) => Classifier::Bnt(m),
        ModelPayload::LassoLogistic(m) => Classifier::Lasso(m),
        other => {
            return Err(model_error(
                path,
                format!("expected a classifier, found {:?}", other.kind()),
            ))
        }
    };
    let pipeline = file.features.expect("checked on load");
    FillModel::new(name, pipeline, classifier).map_err(|e| model_error(path, e.to_string()))
}

pub fn load_next_mid(path: &Path) -> Result<NextMidModel> {
    match load_model_file(path)?.payload {
        ModelPayload::NextMid(m) => Ok(m),
        other => Err(model_error(
            path,
            format!("expected next_mid, found {:?}", other.kind()),
        )),
    }
}

/// Loads an ensemble manifest and every member file it references.
pub fn load_ensemble(path: &Path) -> Result<EnsembleModel> {
    let manifest = match load_model_file(path)?.payload {
        ModelPayload::Ensemble(m) => m,
        other => {
            return Err(model_error(
                path,
                format!("expected ensemble, found {:?}", other.kind()),
            ))
        }
    };
    let base = path.parent().unwrap_or(Path::new("."));
    let members = manifest
        .members
        .iter()
        .map(|m| {
            let member_path = base.join(&m.path);
            if !member_path.exists() {
                return Err(model_error(
                    path,
                    format!(
                        "member `{}` file {} not found",
                        m.name,
                        member_path.display()
                    ),
                ));
            }
            load_fill_model(&member_path, &m.name)
        })
        .collect::<Result<Vec<_>>>()?;
    EnsembleModel::new(members, manifest.vote, manifest.threshold)
        .map_err(|e| model_error(path, e.to_string()))
}
