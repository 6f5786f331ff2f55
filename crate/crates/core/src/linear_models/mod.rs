//! Linear baselines: Lasso-penalized logistic regression for fill
//! probability, and an OLS next-mid-price predictor with Q-Q diagnostics.

mod lasso;
mod next_mid;

pub use lasso::{
    fit_lasso_logistic, fit_lasso_logistic_with, mean_log_loss, predict_logistic,
    ConvergenceReport, LassoLogisticModel, LassoOptions,
};
pub use next_mid::{
    adjusted_r2, fit_next_mid, ols_next_mid, qq_data, NextMidModel, NextMidSample, QqPoint,
};
