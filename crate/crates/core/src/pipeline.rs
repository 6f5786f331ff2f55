//! End-to-end flows shared by the command line and the tests: dataset
//! preparation and splitting, model training, evaluation, exceed curves,
//! quoting and the simulated auction.

use serde::{Deserialize, Serialize};

use crate::bnt::{self, BntHyperparams, BntModel};
use crate::ensemble::{Classifier, EnsembleModel, FillModel, VoteMode, DEFAULT_THRESHOLD};
use crate::error::{Error, Result};
use crate::evaluation::{
    check_time_order, classification_report, errors_by_competition, grid_search_cv, log_loss,
    log_space, time_series_folds_with, CompetitionErrors, CvResult, EvalReport, Fold, FoldSpec,
    WindowKind,
};
use crate::features::{compute_features, FeatureOptions, FeaturePipeline, FeatureRow};
use crate::linear_models::{fit_lasso_logistic, fit_next_mid, NextMidModel, NextMidSample};
use crate::market_sim::{competitor_stream, gen_competitor_quotes, RfqRecord, Status};
use crate::pricing::{
    auction_utility, exceed_curve, offset_grid, optimal_quote, payoff_curve, AuctionOutcome,
    CurveSet, ExceedSample, FillProbability, NextMidPredictor, PayoffPoint, QuoteDecision,
    QuoteRequest,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    /// Leading share of labelled rows used for training.
    pub train_fraction: f64,
    pub cv_folds: usize,
    pub cv_window: WindowKind,
    /// Fixed Lasso penalty; chosen by cross-validation when `None`.
    pub lasso_lambda: Option<f64>,
    pub lambda_grid: Vec<f64>,
    pub features: FeatureOptions,
    pub curve_bins: usize,
    /// Ridge penalty of the fill-rate spline, in scaled units.
    pub curve_smoothing: f64,
    pub threshold: f64,
    pub vote: VoteMode,
    /// Stiffness of the two tree members of the default ensemble.
    pub ensemble_stiffness: [f64; 2],
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            train_fraction: 0.7,
            cv_folds: 5,
            cv_window: WindowKind::Expanding,
            lasso_lambda: None,
            lambda_grid: log_space(-4.0, 0.0, 9),
            features: FeatureOptions::default(),
            curve_bins: 20,
            curve_smoothing: 1.0,
            threshold: DEFAULT_THRESHOLD,
            vote: VoteMode::Soft,
            ensemble_stiffness: [2.0, 6.0],
        }
    }
}

/// A dataset with its features and the chronological train / validation
/// split of the labelled rows.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub records: Vec<RfqRecord>,
    pub features: Vec<FeatureRow>,
    /// Non-live rows with full momentum history, oldest first.
    pub labelled: Vec<usize>,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub live: Vec<usize>,
}

impl Prepared {
    pub fn new(records: Vec<RfqRecord>, opts: &PipelineOptions) -> Result<Self> {
        if let Some(w) = records.windows(2).find(|w| w[1].time <= w[0].time) {
            return Err(Error::InvalidInput(format!(
                "records are not in strictly increasing time order at Time {}",
                w[1].time
            )));
        }
        let features = compute_features(&records, &opts.features)?;
        let labelled: Vec<usize> = (0..records.len())
            .filter(|&i| !records[i].live && features[i].history_valid)
            .collect();
        let cut = (labelled.len() as f64 * opts.train_fraction).floor() as usize;
        if cut < 2 || cut >= labelled.len() {
            return Err(Error::InvalidInput(format!(
                "{} labelled rows cannot be split at fraction {}",
                labelled.len(),
                opts.train_fraction
            )));
        }
        let train = labelled[..cut].to_vec();
        let validation = labelled[cut..].to_vec();
        let live = (0..records.len()).filter(|&i| records[i].live).collect();
        let prepared = Self {
            records,
            features,
            labelled,
            train,
            validation,
            live,
        };
        prepared.check_split()?;
        Ok(prepared)
    }

    pub fn times(&self, idx: &[usize]) -> Vec<u32> {
        idx.iter().map(|&i| self.records[i].time).collect()
    }

    /// `max(train time) < min(validation time)`.
    pub fn check_split(&self) -> Result<()> {
        let times: Vec<u32> = self
            .times(&self.train)
            .into_iter()
            .chain(self.times(&self.validation))
            .collect();
        check_time_order(
            &times,
            &(0..self.train.len()),
            &(self.train.len()..times.len()),
        )
    }

    pub fn rows(&self, idx: &[usize]) -> Vec<FeatureRow> {
        idx.iter().map(|&i| self.features[i].clone()).collect()
    }

    pub fn labels(&self, idx: &[usize]) -> Vec<u8> {
        idx.iter()
            .map(|&i| (self.records[i].status == Status::Done) as u8)
            .collect()
    }

    pub fn next_mid_samples(&self, idx: &[usize]) -> Vec<NextMidSample> {
        idx.iter()
            .map(|&i| NextMidSample::from(&self.records[i]))
            .collect()
    }

    /// Records of the training rows, for fingerprinting.
    pub fn train_records(&self) -> Vec<RfqRecord> {
        self.train
            .iter()
            .map(|&i| self.records[i].clone())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClassifierSpec {
    Bnt(BntHyperparams),
    Lasso { lambda: f64 },
}

/// Fits the feature pipeline and a classifier on the rows `idx`.
pub fn train_classifier(
    prepared: &Prepared,
    idx: &[usize],
    spec: &ClassifierSpec,
    opts: &PipelineOptions,
    name: &str,
) -> Result<FillModel> {
    let rows = prepared.rows(idx);
    let pipeline = FeaturePipeline::fit(&rows, opts.features.encoding)?;
    let xs = pipeline.transform_all(&rows);
    let ys = prepared.labels(idx);
    let classifier = match spec {
        ClassifierSpec::Bnt(hp) => Classifier::Bnt(bnt::fit(&xs, &ys, hp)?),
        ClassifierSpec::Lasso { lambda } => {
            Classifier::Lasso(fit_lasso_logistic(&xs, &ys, *lambda)?)
        }
    };
    FillModel::new(name, pipeline, classifier)
}

/// Folds over the training rows.
pub fn training_folds(prepared: &Prepared, opts: &PipelineOptions) -> Result<FoldSpec> {
    let folds = time_series_folds_with(prepared.train.len(), opts.cv_folds, opts.cv_window)?;
    folds.check_times(&prepared.times(&prepared.train))?;
    Ok(folds)
}

fn fold_log_loss(
    prepared: &Prepared,
    fold: &Fold,
    spec: &ClassifierSpec,
    opts: &PipelineOptions,
) -> Result<f64> {
    let train_idx = &prepared.train[fold.train.clone()];
    let val_idx = &prepared.train[fold.validation.clone()];
    let model = train_classifier(prepared, train_idx, spec, opts, "cv")?;
    let p: Vec<f64> = prepared
        .rows(val_idx)
        .iter()
        .map(|r| model.predict_row(r))
        .collect::<Result<_>>()?;
    log_loss(&prepared.labels(val_idx), &p)
}

/// Cross-validated Lasso penalty; larger penalties win ties.
pub fn cv_lasso(prepared: &Prepared, opts: &PipelineOptions) -> Result<CvResult<f64>> {
    let folds = training_folds(prepared, opts)?;
    grid_search_cv(
        &opts.lambda_grid,
        &folds,
        |l| -l,
        |lambda, fold| {
            fold_log_loss(
                prepared,
                fold,
                &ClassifierSpec::Lasso { lambda: *lambda },
                opts,
            )
        },
    )
}

/// Cross-validated BNT stiffness; smaller stiffness wins ties.
pub fn cv_bnt(
    prepared: &Prepared,
    opts: &PipelineOptions,
    base: &BntHyperparams,
    stiffness: &[f64],
) -> Result<CvResult<f64>> {
    let folds = training_folds(prepared, opts)?;
    grid_search_cv(
        stiffness,
        &folds,
        |s| *s,
        |s, fold| {
            let hp = BntHyperparams {
                initial_relative_stiffness: *s,
                ..base.clone()
            };
            fold_log_loss(prepared, fold, &ClassifierSpec::Bnt(hp), opts)
        },
    )
}

/// The Lasso penalty to use: the configured one or the CV choice.
pub fn lasso_lambda(
    prepared: &Prepared,
    opts: &PipelineOptions,
) -> Result<(f64, Option<CvResult<f64>>)> {
    match opts.lasso_lambda {
        Some(l) => Ok((l, None)),
        None => {
            let cv = cv_lasso(prepared, opts)?;
            Ok((cv.best, Some(cv)))
        }
    }
}

pub fn train_bnt(
    prepared: &Prepared,
    hp: &BntHyperparams,
    opts: &PipelineOptions,
    name: &str,
) -> Result<FillModel> {
    train_classifier(
        prepared,
        &prepared.train,
        &ClassifierSpec::Bnt(hp.clone()),
        opts,
        name,
    )
}

pub fn train_lasso(prepared: &Prepared, lambda: f64, opts: &PipelineOptions) -> Result<FillModel> {
    train_classifier(
        prepared,
        &prepared.train,
        &ClassifierSpec::Lasso { lambda },
        opts,
        "lr",
    )
}

/// Member names of the default ensemble.
pub const ENSEMBLE_MEMBERS: [&str; 3] = ["lr", "abr2", "abr6"];

/// Logistic regression plus BNTs at the two configured stiffnesses.
pub fn train_ensemble(
    prepared: &Prepared,
    hp: &BntHyperparams,
    lambda: f64,
    opts: &PipelineOptions,
) -> Result<EnsembleModel> {
    let mut members = vec![train_lasso(prepared, lambda, opts)?];
    for (name, stiffness) in ENSEMBLE_MEMBERS[1..].iter().zip(opts.ensemble_stiffness) {
        let hp = BntHyperparams {
            initial_relative_stiffness: stiffness,
            ..hp.clone()
        };
        members.push(train_bnt(prepared, &hp, opts, name)?);
    }
    EnsembleModel::new(members, opts.vote, opts.threshold)
}

pub fn bnt_of(model: &FillModel) -> Option<&BntModel> {
    match &model.classifier {
        Classifier::Bnt(m) => Some(m),
        Classifier::Lasso(_) => None,
    }
}

pub fn train_next_mid(prepared: &Prepared) -> Result<NextMidModel> {
    fit_next_mid(
        &prepared.next_mid_samples(&prepared.train),
        &prepared.next_mid_samples(&prepared.validation),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEvaluation {
    pub model: String,
    pub report: EvalReport,
    pub by_competition: Vec<CompetitionErrors>,
}

/// Scores probabilities `p` on the rows `idx`.
pub fn evaluate_probabilities(
    prepared: &Prepared,
    idx: &[usize],
    p: &[f64],
    name: &str,
    threshold: f64,
) -> Result<ModelEvaluation> {
    let ys = prepared.labels(idx);
    let competition: Vec<u8> = idx
        .iter()
        .map(|&i| prepared.records[i].competition)
        .collect();
    Ok(ModelEvaluation {
        model: name.to_string(),
        report: classification_report(&ys, p, threshold)?,
        by_competition: errors_by_competition(&ys, p, &competition, threshold)?,
    })
}

pub fn predict_rows<F: FillProbability + ?Sized>(
    prepared: &Prepared,
    idx: &[usize],
    model: &F,
) -> Result<Vec<f64>> {
    idx.iter()
        .map(|&i| model.fill_probability(&prepared.features[i]))
        .collect()
}

/// Soft-vote probabilities and hard-vote classes (as 0/1) on `idx`.
pub fn ensemble_predictions(
    prepared: &Prepared,
    idx: &[usize],
    model: &EnsembleModel,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut soft = Vec::with_capacity(idx.len());
    let mut hard = Vec::with_capacity(idx.len());
    let mut ties = 0;
    for &i in idx {
        let ps = model.member_probabilities(&prepared.features[i])?;
        soft.push(crate::ensemble::soft_vote(&ps)?);
        let vote = crate::ensemble::majority_vote(&ps, model.threshold)?;
        ties += vote.tie as usize;
        hard.push(vote.class as f64);
    }
    if ties > 0 {
        log::warn!("{ties} majority votes tied and were resolved to class 0");
    }
    Ok((soft, hard))
}

/// Exceed curves for every (bond, side) present in the validation rows.
pub fn build_exceed_curves<N: NextMidPredictor + ?Sized>(
    prepared: &Prepared,
    next_mid: &N,
) -> Result<CurveSet> {
    let offsets = offset_grid();
    let mut keys: Vec<(u32, u8)> = prepared
        .validation
        .iter()
        .map(|&i| (prepared.records[i].bond, prepared.records[i].side.code()))
        .collect();
    keys.sort_unstable();
    keys.dedup();
    let curves = keys
        .into_iter()
        .map(|(bond, side_code)| {
            let side = crate::market_sim::Side::from_code(side_code).expect("valid code");
            let samples: Vec<ExceedSample> = prepared
                .validation
                .iter()
                .map(|&i| &prepared.records[i])
                .filter(|r| r.bond == bond && r.side == side)
                .map(|r| ExceedSample {
                    predicted: next_mid.predict_next_mid(r.mid_price, r.side),
                    next_mid: r.next_mid_price,
                })
                .collect();
            exceed_curve(&samples, bond, side, &offsets)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CurveSet { curves })
}

pub fn quote_request(prepared: &Prepared, i: usize) -> QuoteRequest {
    let r = &prepared.records[i];
    QuoteRequest {
        time: r.time,
        bond: r.bond,
        side: r.side,
        mid: r.mid_price,
        features: prepared.features[i].clone(),
    }
}

/// Optimal quotes for every live RFQ.
pub fn quote_live<F, N>(
    prepared: &Prepared,
    fill: &F,
    next_mid: &N,
    curves: &CurveSet,
) -> Result<Vec<QuoteDecision>>
where
    F: FillProbability + Sync + ?Sized,
    N: NextMidPredictor + ?Sized,
{
    prepared
        .live
        .iter()
        .map(|&i| optimal_quote(&quote_request(prepared, i), fill, next_mid, curves))
        .collect()
}

/// Payoff-versus-offset curves for every live RFQ.
pub fn payoff_curves_live<F, N>(
    prepared: &Prepared,
    fill: &F,
    next_mid: &N,
    curves: &CurveSet,
) -> Result<Vec<(u32, Vec<PayoffPoint>)>>
where
    F: FillProbability + Sync + ?Sized,
    N: NextMidPredictor + ?Sized,
{
    prepared
        .live
        .iter()
        .map(|&i| {
            let req = quote_request(prepared, i);
            Ok((req.time, payoff_curve(&req, fill, next_mid, curves)?))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompeteResult {
    pub time: u32,
    pub bond: u32,
    pub next_mid: f64,
    pub outcome: AuctionOutcome,
}

/// Runs each decision against `competition - 1` simulated competitors.
pub fn compete(
    prepared: &Prepared,
    decisions: &[QuoteDecision],
    seed: u64,
    band: f64,
) -> Result<Vec<CompeteResult>> {
    decisions
        .iter()
        .map(|d| {
            let rfq = prepared
                .records
                .iter()
                .find(|r| r.time == d.time)
                .ok_or_else(|| Error::InvalidInput(format!("no RFQ at Time {}", d.time)))?;
            let n = rfq.competition.saturating_sub(1) as usize;
            let mut rng = competitor_stream(seed, rfq.time);
            let competitors = gen_competitor_quotes(rfq, n, band, &mut rng);
            Ok(CompeteResult {
                time: rfq.time,
                bond: rfq.bond,
                next_mid: rfq.next_mid_price,
                outcome: auction_utility(d.quote, &competitors, rfq.next_mid_price, rfq.side),
            })
        })
        .collect()
}
