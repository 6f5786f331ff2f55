//! The `rfq` command line.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bnt::{decision_boundary_grid, BntHyperparams, GridAxis};
use crate::ensemble::{EnsembleModel, FillModel};
use crate::error::{Error, Result};
use crate::features::{fill_rate_curve, ColumnKind, FEATURE_NAMES};
use crate::io::{
    self, atomic_write, fingerprint_records, load_config, load_ensemble, load_fill_model,
    load_model_file, load_next_mid, read_dataset, save_model_file, tables, write_dataset,
    ConfigFile, EnsembleManifest, ManifestMember, ModelFile, ModelKind, ModelPayload,
};
use crate::linear_models::qq_data;
use crate::market_sim::{simulate, SimConfig, StatusMode};
use crate::pipeline::{self, ModelEvaluation, PipelineOptions, Prepared, ENSEMBLE_MEMBERS};
use crate::pricing::{FillProbability, NextMidPredictor};

/// Seed used when neither the command line nor the config names one.
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Parser)]
#[command(
    name = "rfq",
    version,
    about = "Synthetic RFQ data, fill-probability models and quoting"
)]
pub struct Cli {
    /// Random seed for simulation, training and competitors.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Flat TOML file of SimConfig, BNT and pipeline keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output path; standard output when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic RFQ dataset.
    Simulate(SimulateArgs),
    /// Compute engineered features for every record.
    Featurize(DataArgs),
    /// Train a model and write its model file.
    Train(TrainArgs),
    /// Cross-validate a hyperparameter grid on the training rows.
    Cv(CvArgs),
    /// Score a model file on the held-out rows.
    Evaluate(EvaluateArgs),
    /// Empirical fill-rate curves of the features.
    Curve(CurveArgs),
    /// Decision-boundary grid of a BNT over two features.
    Boundary(BoundaryArgs),
    /// Optimal quotes for the live RFQs.
    Quote(QuoteArgs),
    /// Auction outcomes of our quotes against simulated competitors.
    Compete(QuoteArgs),
    /// Train LR, ABR2, ABR6 and the ensemble and compare them.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum StatusModeArg {
    Verbatim,
    RingDistance,
    FeatureLinked,
}

impl From<StatusModeArg> for StatusMode {
    fn from(m: StatusModeArg) -> Self {
        match m {
            StatusModeArg::Verbatim => StatusMode::Verbatim,
            StatusModeArg::RingDistance => StatusMode::RingDistance,
            StatusModeArg::FeatureLinked => StatusMode::FeatureLinked,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub n_records: Option<usize>,
    #[arg(long, value_enum)]
    pub status_mode: Option<StatusModeArg>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum ModelArg {
    Bnt,
    Lasso,
    NextMid,
    Ensemble,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub model: ModelArg,
    /// Initial relative stiffness of BNT gates.
    #[arg(long)]
    pub stiffness: Option<f64>,
    #[arg(long)]
    pub n_iter: Option<usize>,
    /// Lasso penalty; cross-validated when omitted.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Existing member files for an ensemble, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub members: Option<Vec<PathBuf>>,
    /// BNT training log CSV.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Q-Q data CSV of next-mid validation residuals.
    #[arg(long)]
    pub qq: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CvModelArg {
    Lasso,
    Bnt,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub model: CvModelArg,
    /// Grid values (lambda for lasso, stiffness for bnt), comma separated.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    #[arg(long)]
    pub n_iter: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Also write the metrics table as CSV here.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Features to bin, comma separated; all continuous features by default.
    #[arg(long, value_delimiter = ',')]
    pub features: Option<Vec<String>>,
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long)]
    pub smoothing: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BoundaryArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub feature_i: String,
    #[arg(long)]
    pub feature_j: String,
    #[arg(long, default_value_t = 41)]
    pub n: usize,
}

#[derive(Debug, Args)]
pub struct QuoteArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Fill model (classifier or ensemble) and next-mid model, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub models: Vec<PathBuf>,
    /// Write the exceed-limit curves CSV here.
    #[arg(long)]
    pub curves: Option<PathBuf>,
    /// Write payoff-versus-offset curves CSV here.
    #[arg(long)]
    pub payoff: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub n_iter: Option<usize>,
    /// Model-comparison table CSV.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

/// Effective settings after defaults, config file and command-line flags.
struct Settings {
    seed: u64,
    sim: SimConfig,
    bnt: BntHyperparams,
    pipeline: PipelineOptions,
}

impl Settings {
    fn resolve(cli: &Cli) -> Result<Self> {
        let config = match &cli.config {
            Some(p) => load_config(p)?,
            None => ConfigFile::default(),
        };
        let seed = cli.seed.or(config.seed).unwrap_or(DEFAULT_SEED);
        let mut sim = SimConfig::default();
        config.apply_sim(&mut sim);
        let mut bnt = BntHyperparams::default();
        config.apply_bnt(&mut bnt);
        let mut pipeline = PipelineOptions::default();
        config.apply_pipeline(&mut pipeline);
        sim.seed = seed;
        bnt.seed = seed;
        Ok(Self {
            seed,
            sim,
            bnt,
            pipeline,
        })
    }

    fn prepare(&self, data: &Path) -> Result<Prepared> {
        Prepared::new(read_dataset(data)?, &self.pipeline)
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => atomic_write(p, text.as_bytes()),
        None => {
            use std::io::Write;
            std::io::stdout()
                .lock()
                .write_all(text.as_bytes())
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    emit(out, &text)
}

fn write_model(out: Option<&Path>, file: &ModelFile) -> Result<()> {
    match out {
        Some(p) => save_model_file(p, file),
        None => emit(None, &file.to_json()?),
    }
}

fn classifier_file(model: &FillModel, seed: u64, fingerprint: &str) -> ModelFile {
    let payload = match &model.classifier {
        crate::ensemble::Classifier::Bnt(m) => ModelPayload::Bnt(m.clone()),
        crate::ensemble::Classifier::Lasso(m) => ModelPayload::LassoLogistic(m.clone()),
    };
    ModelFile {
        payload,
        features: Some(model.pipeline.clone()),
        seed,
        training_fingerprint: fingerprint.to_string(),
    }
}

/// A loaded fill model of either shape.
enum AnyFill {
    Single(Box<FillModel>),
    Ensemble(EnsembleModel),
}

impl FillProbability for AnyFill {
    fn fill_probability(&self, row: &crate::features::FeatureRow) -> Result<f64> {
        match self {
            AnyFill::Single(m) => m.fill_probability(row),
            AnyFill::Ensemble(m) => m.fill_probability(row),
        }
    }
}

fn load_any_fill(path: &Path) -> Result<AnyFill> {
    let file = load_model_file(path)?;
    match file.payload.kind() {
        ModelKind::Ensemble => Ok(AnyFill::Ensemble(load_ensemble(path)?)),
        _ => {
            let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
            Ok(AnyFill::Single(Box::new(load_fill_model(path, name)?)))
        }
    }
}

fn load_quote_models(paths: &[PathBuf]) -> Result<(AnyFill, crate::linear_models::NextMidModel)> {
    if paths.len() != 2 {
        return Err(Error::InvalidInput(
            "--models takes a fill model and a next-mid model".into(),
        ));
    }
    let mut fill = None;
    let mut next_mid = None;
    for p in paths {
        if load_model_file(p)?.payload.kind() == ModelKind::NextMid {
            next_mid = Some(load_next_mid(p)?);
        } else {
            fill = Some(load_any_fill(p)?);
        }
    }
    match (fill, next_mid) {
        (Some(f), Some(n)) => Ok((f, n)),
        _ => Err(Error::InvalidInput(
            "--models needs exactly one fill model and one next-mid model".into(),
        )),
    }
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
    out.with_file_name(format!("{stem}.{suffix}.json"))
}

fn run_train(s: &Settings, args: &TrainArgs, out: Option<&Path>) -> Result<()> {
    let prepared = s.prepare(&args.data)?;
    let fingerprint = fingerprint_records(&prepared.train_records());
    let mut hp = s.bnt.clone();
    if let Some(k) = args.stiffness {
        hp.initial_relative_stiffness = k;
    }
    if let Some(n) = args.n_iter {
        hp.n_iter = n;
    }
    let mut opts = s.pipeline.clone();
    if args.lambda.is_some() {
        opts.lasso_lambda = args.lambda;
    }

    match args.model {
        ModelArg::Bnt => {
            let model = pipeline::train_bnt(&prepared, &hp, &opts, "bnt")?;
            if let Some(log) = &args.log {
                let bnt = pipeline::bnt_of(&model).expect("trained a tree");
                atomic_write(log, tables::training_log_csv(&bnt.training_log)?.as_bytes())?;
            }
            write_model(out, &classifier_file(&model, s.seed, &fingerprint))
        }
        ModelArg::Lasso => {
            let (lambda, _) = pipeline::lasso_lambda(&prepared, &opts)?;
            let model = pipeline::train_lasso(&prepared, lambda, &opts)?;
            write_model(out, &classifier_file(&model, s.seed, &fingerprint))
        }
        ModelArg::NextMid => {
            let model = pipeline::train_next_mid(&prepared)?;
            log::info!("next-mid validation adjusted R² {:?}", model.adjusted_r2);
            if let Some(qq) = &args.qq {
                let residuals = model.residuals(&prepared.next_mid_samples(&prepared.validation));
                atomic_write(qq, tables::qq_csv(&qq_data(&residuals)?)?.as_bytes())?;
            }
            write_model(
                out,
                &ModelFile {
                    payload: ModelPayload::NextMid(model),
                    features: None,
                    seed: s.seed,
                    training_fingerprint: fingerprint,
                },
            )
        }
        ModelArg::Ensemble => {
            let out = out.ok_or_else(|| {
                Error::InvalidInput("ensemble training needs --out for its member files".into())
            })?;
            let members: Vec<ManifestMember> = match &args.members {
                Some(paths) => paths
                    .iter()
                    .enumerate()
                    .map(|(i, p)| {
                        let name = ENSEMBLE_MEMBERS
                            .get(i)
                            .filter(|_| paths.len() == ENSEMBLE_MEMBERS.len())
                            .map(|n| n.to_string())
                            .unwrap_or_else(|| format!("member{}", i + 1));
                        let same_dir = p
                            .parent()
                            .map(|d| d.as_os_str().is_empty() || Some(d) == out.parent())
                            .unwrap_or(true);
                        let path = if same_dir {
                            PathBuf::from(p.file_name().unwrap_or_default())
                        } else {
                            std::fs::canonicalize(p).map_err(|e| Error::io(p, e))?
                        };
                        Ok(ManifestMember { name, path })
                    })
                    .collect::<Result<_>>()?,
                None => {
                    let (lambda, _) = pipeline::lasso_lambda(&prepared, &opts)?;
                    let ensemble = pipeline::train_ensemble(&prepared, &hp, lambda, &opts)?;
                    ensemble
                        .members
                        .iter()
                        .map(|m| {
                            let path = sibling(out, &m.name);
                            save_model_file(&path, &classifier_file(m, s.seed, &fingerprint))?;
                            Ok(ManifestMember {
                                name: m.name.clone(),
                                path: PathBuf::from(path.file_name().unwrap_or_default()),
                            })
                        })
                        .collect::<Result<_>>()?
                }
            };
            let file = ModelFile {
                payload: ModelPayload::Ensemble(EnsembleManifest {
                    members,
                    vote: opts.vote,
                    threshold: opts.threshold,
                }),
                features: None,
                seed: s.seed,
                training_fingerprint: fingerprint,
            };
            save_model_file(out, &file)?;
            // fail now rather than at quote time if a member is unusable
            load_ensemble(out).map(|_| ())
        }
    }
}

fn run_cv(s: &Settings, args: &CvArgs, out: Option<&Path>) -> Result<()> {
    let prepared = s.prepare(&args.data)?;
    let (param, grid, cv) = match args.model {
        CvModelArg::Lasso => {
            let mut opts = s.pipeline.clone();
            if let Some(g) = &args.grid {
                opts.lambda_grid = g.clone();
            }
            let cv = pipeline::cv_lasso(&prepared, &opts)?;
            ("lambda", opts.lambda_grid, cv)
        }
        CvModelArg::Bnt => {
            let grid = args.grid.clone().unwrap_or_else(|| vec![2.0, 6.0]);
            let mut hp = s.bnt.clone();
            if let Some(n) = args.n_iter {
                hp.n_iter = n;
            }
            let cv = pipeline::cv_bnt(&prepared, &s.pipeline, &hp, &grid)?;
            ("stiffness", grid, cv)
        }
    };
    emit(out, &tables::cv_table_csv(param, &grid, &cv)?)
}

#[derive(Serialize)]
struct EvaluationOutput {
    rows: &'static str,
    evaluations: Vec<ModelEvaluation>,
}

fn evaluate_fill(
    prepared: &Prepared,
    fill: &AnyFill,
    name: &str,
    threshold: f64,
) -> Result<Vec<ModelEvaluation>> {
    let idx = &prepared.validation;
    match fill {
        AnyFill::Single(m) => {
            let p = pipeline::predict_rows(prepared, idx, m.as_ref())?;
            Ok(vec![pipeline::evaluate_probabilities(
                prepared, idx, &p, name, threshold,
            )?])
        }
        AnyFill::Ensemble(m) => {
            let (soft, hard) = pipeline::ensemble_predictions(prepared, idx, m)?;
            Ok(vec![
                pipeline::evaluate_probabilities(
                    prepared,
                    idx,
                    &soft,
                    &format!("{name}_soft"),
                    m.threshold,
                )?,
                pipeline::evaluate_probabilities(
                    prepared,
                    idx,
                    &hard,
                    &format!("{name}_hard"),
                    m.threshold,
                )?,
            ])
        }
    }
}

fn run_evaluate(s: &Settings, args: &EvaluateArgs, out: Option<&Path>) -> Result<()> {
    let prepared = s.prepare(&args.data)?;
    let fill = load_any_fill(&args.model)?;
    let name = args
        .model
        .file_stem()
        .and_then(|n| n.to_str())
        .unwrap_or("model");
    let evaluations = evaluate_fill(&prepared, &fill, name, s.pipeline.threshold)?;
    if let Some(t) = &args.table {
        atomic_write(t, tables::evaluation_csv(&evaluations)?.as_bytes())?;
    }
    emit_json(
        out,
        &EvaluationOutput {
            rows: "validation",
            evaluations,
        },
    )
}

/// Continuous features, in the order they are binned by default.
const CURVE_FEATURES: [&str; 6] = [
    "mom5",
    "mom10",
    "mom20",
    "spread",
    "response",
    "log_notional",
];

fn run_curve(s: &Settings, args: &CurveArgs, out: Option<&Path>) -> Result<()> {
    let prepared = s.prepare(&args.data)?;
    let names: Vec<String> = args
        .features
        .clone()
        .unwrap_or_else(|| CURVE_FEATURES.iter().map(|f| f.to_string()).collect());
    let bins = args.bins.unwrap_or(s.pipeline.curve_bins);
    let smoothing = args.smoothing.unwrap_or(s.pipeline.curve_smoothing);
    let idx = &prepared.labelled;
    let statuses: Vec<bool> = prepared.labels(idx).into_iter().map(|y| y == 1).collect();
    let curves = names
        .iter()
        .map(|name| {
            if !FEATURE_NAMES.contains(&name.as_str()) {
                return Err(Error::InvalidInput(format!("unknown feature `{name}`")));
            }
            let values: Vec<f64> = idx
                .iter()
                .map(|&i| prepared.features[i].get(name).expect("known feature"))
                .collect();
            let curve = fill_rate_curve(name, &values, &statuses, bins, smoothing)?;
            if let Some(notice) = &curve.notice {
                log::warn!("{name}: {notice}");
            }
            Ok(curve)
        })
        .collect::<Result<Vec<_>>>()?;
    emit(out, &tables::fill_rate_curves_csv(&curves)?)
}

fn run_boundary(args: &BoundaryArgs, out: Option<&Path>) -> Result<()> {
    let model = load_fill_model(&args.model, "bnt")?;
    let bnt = pipeline::bnt_of(&model)
        .ok_or_else(|| Error::InvalidInput("decision boundaries need a BNT model file".into()))?;
    let names = model.pipeline.names();
    let position = |f: &str| {
        names.iter().position(|n| n == f).ok_or_else(|| {
            Error::InvalidInput(format!(
                "feature `{f}` is not a model input ({})",
                names.join(", ")
            ))
        })
    };
    let (i, j) = (position(&args.feature_i)?, position(&args.feature_j)?);
    let columns = &model.pipeline.stats.columns;
    let baseline: Vec<f64> = columns
        .iter()
        .map(|c| match c.kind {
            ColumnKind::ZScore => 0.0,
            ColumnKind::PassThrough => c.mean,
        })
        .collect();
    let axis = |k: usize| match columns[k].kind {
        ColumnKind::ZScore => GridAxis {
            lo: -3.0,
            hi: 3.0,
            n: args.n,
        },
        ColumnKind::PassThrough => GridAxis {
            lo: columns[k].mean - 2.0 * columns[k].std,
            hi: columns[k].mean + 2.0 * columns[k].std,
            n: args.n,
        },
    };
    let grid = decision_boundary_grid(bnt, i, j, axis(i), axis(j), &baseline)?;
    let raw: Vec<(f64, f64)> = grid
        .iter()
        .map(|p| {
            let mut z = baseline.clone();
            z[i] = p.x_i;
            z[j] = p.x_j;
            let r = model.pipeline.stats.invert(&z);
            (r[i], r[j])
        })
        .collect();
    emit(
        out,
        &tables::boundary_csv((&args.feature_i, &args.feature_j), &grid, &raw)?,
    )
}

fn quotes(
    s: &Settings,
    args: &QuoteArgs,
) -> Result<(Prepared, Vec<crate::pricing::QuoteDecision>)> {
    let prepared = s.prepare(&args.data)?;
    let (fill, next_mid) = load_quote_models(&args.models)?;
    let curves = pipeline::build_exceed_curves(&prepared, &next_mid as &dyn NextMidPredictor)?;
    if let Some(p) = &args.curves {
        atomic_write(p, tables::exceed_curves_csv(&curves)?.as_bytes())?;
    }
    if let Some(p) = &args.payoff {
        let payoff = pipeline::payoff_curves_live(&prepared, &fill, &next_mid, &curves)?;
        atomic_write(p, tables::payoff_curves_csv(&payoff)?.as_bytes())?;
    }
    let decisions = pipeline::quote_live(&prepared, &fill, &next_mid, &curves)?;
    Ok((prepared, decisions))
}

#[derive(Serialize)]
struct Report {
    lambda: f64,
    lambda_cv: Option<crate::evaluation::CvResult<f64>>,
    evaluations: Vec<ModelEvaluation>,
}

fn run_report(s: &Settings, args: &ReportArgs, out: Option<&Path>) -> Result<()> {
    let prepared = s.prepare(&args.data)?;
    let mut opts = s.pipeline.clone();
    if args.lambda.is_some() {
        opts.lasso_lambda = args.lambda;
    }
    let mut hp = s.bnt.clone();
    if let Some(n) = args.n_iter {
        hp.n_iter = n;
    }
    let (lambda, lambda_cv) = pipeline::lasso_lambda(&prepared, &opts)?;
    let ensemble = pipeline::train_ensemble(&prepared, &hp, lambda, &opts)?;
    let idx = &prepared.validation;
    let mut evaluations = Vec::new();
    for m in &ensemble.members {
        let p = pipeline::predict_rows(&prepared, idx, m)?;
        evaluations.push(pipeline::evaluate_probabilities(
            &prepared,
            idx,
            &p,
            &m.name,
            opts.threshold,
        )?);
    }
    let (soft, hard) = pipeline::ensemble_predictions(&prepared, idx, &ensemble)?;
    evaluations.push(pipeline::evaluate_probabilities(
        &prepared,
        idx,
        &soft,
        "ensemble1_soft",
        opts.threshold,
    )?);
    evaluations.push(pipeline::evaluate_probabilities(
        &prepared,
        idx,
        &hard,
        "ensemble1_hard",
        opts.threshold,
    )?);
    if let Some(t) = &args.table {
        atomic_write(t, tables::evaluation_csv(&evaluations)?.as_bytes())?;
        let by_comp = t.with_extension("competition.csv");
        atomic_write(
            &by_comp,
            tables::competition_errors_csv(&evaluations)?.as_bytes(),
        )?;
    }
    emit_json(
        out,
        &Report {
            lambda,
            lambda_cv,
            evaluations,
        },
    )
}

fn dispatch(cli: &Cli) -> Result<()> {
    let s = Settings::resolve(cli)?;
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Simulate(args) => {
            let mut sim = s.sim.clone();
            if let Some(n) = args.n_records {
                sim.n_records = n;
            }
            if let Some(m) = args.status_mode {
                sim.status_mode = m.into();
            }
            let records = simulate(&sim)?.records;
            match out {
                Some(p) => write_dataset(p, &records),
                None => emit(None, &io::render_dataset(&records)),
            }
        }
        Command::Featurize(args) => {
            let prepared = s.prepare(&args.data)?;
            emit(out, &tables::features_csv(&prepared)?)
        }
        Command::Train(args) => run_train(&s, args, out),
        Command::Cv(args) => run_cv(&s, args, out),
        Command::Evaluate(args) => run_evaluate(&s, args, out),
        Command::Curve(args) => run_curve(&s, args, out),
        Command::Boundary(args) => run_boundary(args, out),
        Command::Quote(args) => {
            let (_, decisions) = quotes(&s, args)?;
            emit(out, &tables::quote_decisions_csv(&decisions)?)
        }
        Command::Compete(args) => {
            let (prepared, decisions) = quotes(&s, args)?;
            let results = pipeline::compete(&prepared, &decisions, s.seed, s.sim.quote_band)?;
            emit(out, &tables::compete_csv(&results)?)
        }
        Command::Report(args) => run_report(&s, args, out),
    }
}

/// Parses `argv` (including the program name) and runs the subcommand.
/// Returns the process exit code: 0 on success, 1 on failure, 2 on usage errors.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
