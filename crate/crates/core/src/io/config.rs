use std::path::Path;

use serde::Deserialize;

use crate::bnt::BntHyperparams;
use crate::ensemble::VoteMode;
use crate::error::{Error, Result};
use crate::evaluation::WindowKind;
use crate::features::CategoricalEncoding;
use crate::market_sim::{SimConfig, StatusMode};
use crate::pipeline::PipelineOptions;

use super::read_to_string;

/// Flat TOML configuration; every key is optional and overrides a default.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,

    pub n_records: Option<usize>,
    pub n_live: Option<usize>,
    pub n_bonds: Option<u32>,
    pub p0: Option<f64>,
    pub s0: Option<f64>,
    pub mu: Option<f64>,
    pub sigma_s: Option<f64>,
    pub sigma_b: Option<f64>,
    pub sigma_a: Option<f64>,
    pub dt: Option<f64>,
    pub quote_band: Option<f64>,
    pub status_mode: Option<StatusMode>,
    pub link_intercept: Option<f64>,
    pub link_response: Option<f64>,
    pub link_log_notional: Option<f64>,
    pub link_mom5: Option<f64>,

    pub prior_alpha: Option<f64>,
    pub prior_beta: Option<f64>,
    pub pruning_factor: Option<f64>,
    pub n_iter: Option<usize>,
    pub learning_rate_init: Option<f64>,
    pub n_gradient_descent_steps: Option<usize>,
    pub initial_relative_stiffness: Option<f64>,
    pub adam_beta1: Option<f64>,
    pub adam_beta2: Option<f64>,
    pub adam_epsilon: Option<f64>,
    pub backtracking: Option<bool>,

    pub train_fraction: Option<f64>,
    pub cv_folds: Option<usize>,
    pub cv_window: Option<WindowKind>,
    pub lasso_lambda: Option<f64>,
    pub log_base: Option<f64>,
    pub encoding: Option<CategoricalEncoding>,
    pub curve_bins: Option<usize>,
    pub curve_smoothing: Option<f64>,
    pub threshold: Option<f64>,
    pub vote: Option<VoteMode>,
}

fn set<T: Clone>(target: &mut T, value: &Option<T>) {
    if let Some(v) = value {
        *target = v.clone();
    }
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn apply_sim(&self, c: &mut SimConfig) {
        set(&mut c.seed, &self.seed);
        set(&mut c.n_records, &self.n_records);
        set(&mut c.n_live, &self.n_live);
        set(&mut c.n_bonds, &self.n_bonds);
        set(&mut c.p0, &self.p0);
        set(&mut c.s0, &self.s0);
        set(&mut c.mu, &self.mu);
        set(&mut c.sigma_s, &self.sigma_s);
        set(&mut c.sigma_b, &self.sigma_b);
        set(&mut c.sigma_a, &self.sigma_a);
        set(&mut c.dt, &self.dt);
        set(&mut c.quote_band, &self.quote_band);
        set(&mut c.status_mode, &self.status_mode);
        set(&mut c.link.intercept, &self.link_intercept);
        set(&mut c.link.response, &self.link_response);
        set(&mut c.link.log_notional, &self.link_log_notional);
        set(&mut c.link.mom5, &self.link_mom5);
    }

    pub fn apply_bnt(&self, h: &mut BntHyperparams) {
        set(&mut h.seed, &self.seed);
        set(&mut h.prior_alpha, &self.prior_alpha);
        set(&mut h.prior_beta, &self.prior_beta);
        set(&mut h.pruning_factor, &self.pruning_factor);
        set(&mut h.n_iter, &self.n_iter);
        set(&mut h.learning_rate_init, &self.learning_rate_init);
        set(
            &mut h.n_gradient_descent_steps,
            &self.n_gradient_descent_steps,
        );
        set(
            &mut h.initial_relative_stiffness,
            &self.initial_relative_stiffness,
        );
        set(&mut h.adam.beta1, &self.adam_beta1);
        set(&mut h.adam.beta2, &self.adam_beta2);
        set(&mut h.adam.epsilon, &self.adam_epsilon);
        set(&mut h.backtracking, &self.backtracking);
    }

    pub fn apply_pipeline(&self, o: &mut PipelineOptions) {
        set(&mut o.train_fraction, &self.train_fraction);
        set(&mut o.cv_folds, &self.cv_folds);
        set(&mut o.cv_window, &self.cv_window);
        if self.lasso_lambda.is_some() {
            o.lasso_lambda = self.lasso_lambda;
        }
        set(&mut o.features.log_base, &self.log_base);
        set(&mut o.features.encoding, &self.encoding);
        set(&mut o.curve_bins, &self.curve_bins);
        set(&mut o.curve_smoothing, &self.curve_smoothing);
        set(&mut o.threshold, &self.threshold);
        set(&mut o.vote, &self.vote);
    }
}

pub fn load_config(path: &Path) -> Result<ConfigFile> {
    ConfigFile::parse(&read_to_string(path)?)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}
