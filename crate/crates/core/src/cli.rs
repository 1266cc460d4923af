//! Reproducible runs behind the `ptwd` binary.
//!
//! Every command resolves its flags into a [`RunConfig`], and every report
//! embeds that config verbatim. Feeding a report back through `--config`
//! re-runs the same job and reproduces the report byte for byte.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{self, EvalReport};
use crate::pid_sgd::{self, Feedback, HyperParams, TrainReport, Trainer};
use crate::synthgen::{self, SynthSpec};
use crate::tensor_store::{self, DimSpec, IngestOptions, SparseTensor, SplitSpec};
use crate::twd::{Ranks, TwdFactors};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    IngestCheck,
    Split,
    Synth,
    Train,
    Evaluate,
    Ablate,
    Grid,
}

/// Fully resolved settings for one command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    pub input: Option<PathBuf>,
    pub dims: Option<[usize; 3]>,
    pub keep_last: bool,
    /// Apply `ln(x + 1)` on load. When false the input is taken to be in
    /// the log domain already.
    pub normalize: bool,
    /// Split ratios; `split.seed` is the base seed for repetition 0.
    pub split: SplitSpec,
    pub ranks: Ranks,
    pub hp: HyperParams,
    pub repetitions: usize,
    pub raw_domain_metrics: bool,
    pub etas: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub synth: Option<SynthSpec>,
    pub checkpoint: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub output: Option<PathBuf>,
    /// Not embedded in reports, so a re-run can write elsewhere.
    #[serde(skip)]
    pub report_path: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        RunConfig {
            command,
            input: None,
            dims: None,
            keep_last: false,
            normalize: true,
            split: SplitSpec::new([1, 2, 7], 0),
            ranks: Ranks::default(),
            hp: HyperParams::default(),
            repetitions: 10,
            raw_domain_metrics: false,
            etas: vec![0.1, 0.03, 0.01],
            lambdas: vec![0.0, 0.001, 0.01],
            synth: None,
            checkpoint: None,
            truth: None,
            output: None,
            report_path: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::Parameter("repetitions must be at least 1".into()));
        }
        self.split.validate()?;
        self.ranks.validate()?;
        self.hp.validate()
    }

    fn require<'a>(&self, path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
        path.as_deref()
            .ok_or_else(|| Error::Parameter(format!("{:?} needs {flag}", self.command)))
    }

    /// Seed used by repetition `rep` for both the split and training.
    pub fn rep_seed(&self, rep: usize) -> u64 {
        self.split.seed.wrapping_add(rep as u64)
    }

    /// Loads and (optionally) normalizes the input tensor.
    pub fn load_input(&self) -> Result<SparseTensor> {
        let path = self.require(&self.input, "--input")?;
        let opts = IngestOptions {
            dims: self.dims.map_or(DimSpec::Infer, DimSpec::Fixed),
            keep_last: self.keep_last,
        };
        let t = tensor_store::ingest(path, opts)?;
        if self.normalize {
            t.normalize()
        } else {
            Ok(t.assume_normalized())
        }
    }

    fn split_for(&self, data: &SparseTensor, rep: usize) -> Result<(SparseTensor, SparseTensor, SparseTensor)> {
        data.split(&SplitSpec::new(self.split.ratios, self.rep_seed(rep)))
    }

    fn hp_for(&self, rep: usize) -> HyperParams {
        HyperParams {
            seed: self.rep_seed(rep),
            ..self.hp
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionResult {
    pub repetition: usize,
    pub seed: u64,
    /// Train, validation and test sizes.
    pub split_sizes: [usize; 3],
    pub test: EvalReport,
    pub test_raw: Option<EvalReport>,
    pub training: TrainReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub rmse: f64,
    pub mae: f64,
    pub raw_rmse: Option<f64>,
    pub raw_mae: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRunReport {
    pub config: RunConfig,
    pub repetitions: Vec<RepetitionResult>,
    pub mean: MeanMetrics,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

fn test_metrics(cfg: &RunConfig, f: &TwdFactors, test: &SparseTensor) -> Result<(EvalReport, Option<EvalReport>)> {
    let log = metrics::evaluate(f, test)?;
    let raw = if cfg.raw_domain_metrics {
        Some(metrics::evaluate_raw(f, test)?)
    } else {
        None
    };
    Ok((log, raw))
}

/// normalize, split, train and evaluate once per repetition.
pub fn run_train(cfg: &RunConfig) -> Result<TrainRunReport> {
    cfg.validate()?;
    let data = cfg.load_input()?;
    let results: Vec<(RepetitionResult, TwdFactors)> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|rep| {
            let (train, valid, test) = cfg.split_for(&data, rep)?;
            let hp = cfg.hp_for(rep);
            let (factors, training) = pid_sgd::train(&train, &valid, cfg.ranks, &hp)?;
            let (test_log, test_raw) = test_metrics(cfg, &factors, &test)?;
            Ok((
                RepetitionResult {
                    repetition: rep,
                    seed: hp.seed,
                    split_sizes: [train.len(), valid.len(), test.len()],
                    test: test_log,
                    test_raw,
                    training,
                },
                factors,
            ))
        })
        .collect::<Result<_>>()?;

    if let Some(path) = &cfg.checkpoint {
        for (r, f) in &results {
            f.save(numbered_path(path, r.repetition, cfg.repetitions))?;
        }
    }

    let reps: Vec<RepetitionResult> = results.into_iter().map(|(r, _)| r).collect();
    let raw = |pick: fn(&EvalReport) -> f64| -> Option<f64> {
        let vals: Option<Vec<f64>> = reps.iter().map(|r| r.test_raw.as_ref().map(pick)).collect();
        vals.map(|v| mean(v.into_iter()))
    };
    let mean_metrics = MeanMetrics {
        rmse: mean(reps.iter().map(|r| r.test.rmse)),
        mae: mean(reps.iter().map(|r| r.test.mae)),
        raw_rmse: raw(|e| e.rmse),
        raw_mae: raw(|e| e.mae),
    };
    Ok(TrainRunReport {
        config: cfg.clone(),
        repetitions: reps,
        mean: mean_metrics,
    })
}

/// `model.twd` stays as is for a single repetition, else `model.rep3.twd`.
fn numbered_path(path: &Path, rep: usize, total: usize) -> PathBuf {
    if total == 1 {
        return path.to_path_buf();
    }
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.rep{rep}.{}", ext.to_string_lossy()),
        None => format!("{stem}.rep{rep}"),
    };
    path.with_file_name(name)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    pub cp: f64,
    pub ci: f64,
    pub cd: f64,
    /// SHA-256 of the epoch-0 checkpoint.
    pub initial_fingerprint: String,
    pub test: EvalReport,
    pub training: TrainReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRep {
    pub repetition: usize,
    pub seed: u64,
    pub pid: ArmResult,
    pub plain: ArmResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSummary {
    pub pid_mean_converged_at: f64,
    pub plain_mean_converged_at: f64,
    pub pid_mean_rmse: f64,
    pub plain_mean_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub config: RunConfig,
    pub repetitions: Vec<AblationRep>,
    pub summary: AblationSummary,
}

fn run_arm(train: &SparseTensor, valid: &SparseTensor, test: &SparseTensor, ranks: Ranks, hp: HyperParams) -> Result<ArmResult> {
    let trainer = Trainer::new(train, valid, ranks, hp, Feedback::Pid)?;
    let initial_fingerprint = trainer.factors().fingerprint();
    let (factors, training) = pid_sgd::run_to_completion(trainer)?;
    Ok(ArmResult {
        cp: hp.cp,
        ci: hp.ci,
        cd: hp.cd,
        initial_fingerprint,
        test: metrics::evaluate(&factors, test)?,
        training,
    })
}

/// Trains the configured PID law against `(1, 0, 0)` on identical data,
/// seeds and initial factors.
pub fn run_ablate(cfg: &RunConfig) -> Result<AblationReport> {
    cfg.validate()?;
    let data = cfg.load_input()?;
    let reps: Vec<AblationRep> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|rep| {
            let (train, valid, test) = cfg.split_for(&data, rep)?;
            let hp = cfg.hp_for(rep);
            let pid = run_arm(&train, &valid, &test, cfg.ranks, hp)?;
            let plain = run_arm(&train, &valid, &test, cfg.ranks, hp.without_pid())?;
            Ok(AblationRep {
                repetition: rep,
                seed: hp.seed,
                pid,
                plain,
            })
        })
        .collect::<Result<_>>()?;
    let summary = AblationSummary {
        pid_mean_converged_at: mean(reps.iter().map(|r| r.pid.training.converged_at as f64)),
        plain_mean_converged_at: mean(reps.iter().map(|r| r.plain.training.converged_at as f64)),
        pid_mean_rmse: mean(reps.iter().map(|r| r.pid.test.rmse)),
        plain_mean_rmse: mean(reps.iter().map(|r| r.plain.test.rmse)),
    };
    Ok(AblationReport {
        config: cfg.clone(),
        repetitions: reps,
        summary,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub eta: f64,
    pub lambda: f64,
    pub diverged: bool,
    /// Best validation RMSE reached; `None` when diverged.
    pub valid_rmse: Option<f64>,
    pub converged_at: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridWinner {
    pub eta: f64,
    pub lambda: f64,
    pub valid_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub config: RunConfig,
    pub cells: Vec<GridCell>,
    pub winner: GridWinner,
}

/// Grid search over `eta x lambda` on the repetition-0 split, scored by
/// validation RMSE. Ties go to the smaller lambda, then the smaller eta.
pub fn run_grid(cfg: &RunConfig) -> Result<GridReport> {
    cfg.validate()?;
    let data = cfg.load_input()?;
    let (train, valid, _) = cfg.split_for(&data, 0)?;
    grid_search(cfg, &train, &valid)
}

/// Lowest validation RMSE; ties go to the smaller lambda, then the smaller eta.
fn pick_winner(cells: &[GridCell]) -> Option<GridWinner> {
    cells
        .iter()
        .filter_map(|c| c.valid_rmse.map(|v| (c, v)))
        .min_by(|(a, va), (b, vb)| {
            va.total_cmp(vb)
                .then(a.lambda.total_cmp(&b.lambda))
                .then(a.eta.total_cmp(&b.eta))
        })
        .map(|(c, v)| GridWinner {
            eta: c.eta,
            lambda: c.lambda,
            valid_rmse: v,
        })
}

/// The grid search of [`run_grid`] over explicit train/validation sets.
pub fn grid_search(cfg: &RunConfig, train: &SparseTensor, valid: &SparseTensor) -> Result<GridReport> {
    if cfg.etas.is_empty() || cfg.lambdas.is_empty() {
        return Err(Error::Parameter("grid needs at least one eta and one lambda".into()));
    }
    if valid.is_empty() {
        return Err(Error::Parameter("grid search needs a non-empty validation set".into()));
    }
    let points: Vec<(f64, f64)> = cfg
        .etas
        .iter()
        .flat_map(|&eta| cfg.lambdas.iter().map(move |&lambda| (eta, lambda)))
        .collect();
    let cells: Vec<GridCell> = points
        .par_iter()
        .map(|&(eta, lambda)| -> Result<GridCell> {
            let hp = HyperParams {
                eta,
                lambda,
                seed: cfg.rep_seed(0),
                ..cfg.hp
            };
            match pid_sgd::train(train, valid, cfg.ranks, &hp) {
                Ok((_, rep)) => Ok(GridCell {
                    eta,
                    lambda,
                    diverged: false,
                    valid_rmse: rep.valid_rmse_history[rep.converged_at - 1],
                    converged_at: Some(rep.converged_at),
                    error: None,
                }),
                Err(e @ Error::Divergence { .. }) => Ok(GridCell {
                    eta,
                    lambda,
                    diverged: true,
                    valid_rmse: None,
                    converged_at: None,
                    error: Some(e.to_string()),
                }),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;

    let winner = pick_winner(&cells).ok_or_else(|| Error::Parameter("every grid cell diverged".into()))?;
    Ok(GridReport {
        config: cfg.clone(),
        cells,
        winner,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub config: RunConfig,
    pub dims: [usize; 3],
    pub entries: usize,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub mean: Option<f64>,
}

/// Loads the input as-is (no normalization) and summarizes it.
pub fn run_ingest_check(cfg: &RunConfig) -> Result<IngestSummary> {
    let path = cfg.require(&cfg.input, "--input")?;
    let opts = IngestOptions {
        dims: cfg.dims.map_or(DimSpec::Infer, DimSpec::Fixed),
        keep_last: cfg.keep_last,
    };
    let t = tensor_store::ingest(path, opts)?;
    let values = || t.entries().iter().map(|e| e.value);
    let nonempty = !t.is_empty();
    Ok(IngestSummary {
        config: cfg.clone(),
        dims: t.dims(),
        entries: t.len(),
        min: nonempty.then(|| values().fold(f64::INFINITY, f64::min)),
        max: nonempty.then(|| values().fold(f64::NEG_INFINITY, f64::max)),
        mean: nonempty.then(|| mean(values())),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub config: RunConfig,
    pub files: [PathBuf; 3],
    pub sizes: [usize; 3],
}

/// Writes `train.coo`, `valid.coo` and `test.coo` into the output directory.
/// Values are written as read, without normalization.
pub fn run_split(cfg: &RunConfig) -> Result<SplitSummary> {
    cfg.split.validate()?;
    let dir = cfg.require(&cfg.output, "--output")?;
    let path = cfg.require(&cfg.input, "--input")?;
    let opts = IngestOptions {
        dims: cfg.dims.map_or(DimSpec::Infer, DimSpec::Fixed),
        keep_last: cfg.keep_last,
    };
    let t = tensor_store::ingest(path, opts)?;
    let (train, valid, test) = t.split(&cfg.split)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = [dir.join("train.coo"), dir.join("valid.coo"), dir.join("test.coo")];
    for (part, file) in [&train, &valid, &test].iter().zip(&files) {
        part.write_coo(file)?;
    }
    Ok(SplitSummary {
        config: cfg.clone(),
        files,
        sizes: [train.len(), valid.len(), test.len()],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSummary {
    pub config: RunConfig,
    pub observed: usize,
    pub truth_fingerprint: String,
}

/// Writes planted observations as COO and the generating factors as a checkpoint.
pub fn run_synth(cfg: &RunConfig) -> Result<SynthSummary> {
    let spec = cfg
        .synth
        .ok_or_else(|| Error::Parameter("synth needs synthetic data settings".into()))?;
    let out = cfg.require(&cfg.output, "--output")?;
    let s = synthgen::generate(&spec)?;
    s.observed.write_coo(out)?;
    if let Some(truth) = &cfg.truth {
        s.ground_truth.save(truth)?;
    }
    Ok(SynthSummary {
        config: cfg.clone(),
        observed: s.observed.len(),
        truth_fingerprint: s.ground_truth.fingerprint(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateSummary {
    pub config: RunConfig,
    pub metrics: EvalReport,
    pub metrics_raw: Option<EvalReport>,
}

/// Scores a saved checkpoint against every entry of the input file.
pub fn run_evaluate(cfg: &RunConfig) -> Result<EvaluateSummary> {
    let ckpt = cfg.require(&cfg.checkpoint, "--checkpoint")?;
    let f = TwdFactors::load(ckpt)?;
    let test = cfg.load_input()?;
    let (m, raw) = test_metrics(cfg, &f, &test)?;
    Ok(EvaluateSummary {
        config: cfg.clone(),
        metrics: m,
        metrics_raw: raw,
    })
}

/// Pretty JSON with a trailing newline.
pub fn to_report_string<T: Serialize>(report: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

pub fn write_report<T: Serialize>(path: &Path, report: &T) -> Result<()> {
    std::fs::write(path, to_report_string(report)?).map_err(|e| Error::io(path, e))
}

/// Runs `cfg` and returns the report text.
pub fn execute(cfg: &RunConfig) -> Result<String> {
    match cfg.command {
        Command::IngestCheck => to_report_string(&run_ingest_check(cfg)?),
        Command::Split => to_report_string(&run_split(cfg)?),
        Command::Synth => to_report_string(&run_synth(cfg)?),
        Command::Train => to_report_string(&run_train(cfg)?),
        Command::Evaluate => to_report_string(&run_evaluate(cfg)?),
        Command::Ablate => to_report_string(&run_ablate(cfg)?),
        Command::Grid => to_report_string(&run_grid(cfg)?),
    }
}

/// Pulls a [`RunConfig`] out of a JSON file holding either a bare config
/// or a report with a `config` field.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let cfg = match value.get("config") {
        Some(inner) => serde_json::from_value(inner.clone())?,
        None => serde_json::from_value(value)?,
    };
    Ok(cfg)
}

// ---------------------------------------------------------------------------
// Argument parsing

#[derive(Debug, Parser)]
#[command(name = "ptwd", version, about = "PID-controlled tensor wheel decomposition for dynamic network tensors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Parse and validate a COO file, printing a summary.
    IngestCheck(CommonArgs),
    /// Split a COO file into train/valid/test files.
    Split(CommonArgs),
    /// Generate planted-model synthetic data.
    Synth(SynthArgs),
    /// Normalize, split, train and evaluate over several seeds.
    Train(CommonArgs),
    /// Score a checkpoint against a COO file.
    Evaluate(CommonArgs),
    /// Compare the configured PID law with plain SGD.
    Ablate(CommonArgs),
    /// Grid-search eta and lambda on the validation split.
    Grid(CommonArgs),
}

fn parse_triple(s: &str) -> std::result::Result<[usize; 3], String> {
    let v: Vec<usize> = s
        .split([',', 'x'])
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| format!("expected I,J,K, got {s:?}"))?;
    <[usize; 3]>::try_from(v).map_err(|_| format!("expected three values I,J,K, got {s:?}"))
}

fn parse_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("bad number {p:?}")))
        .collect()
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// COO input file.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Tensor dims as I,J,K (default: header or max index + 1).
    #[arg(long, value_parser = parse_triple)]
    pub dims: Option<[usize; 3]>,
    /// Keep the last of repeated (i, j, k) lines instead of failing.
    #[arg(long)]
    pub keep_last: bool,
    /// Input values are already in the log domain.
    #[arg(long)]
    pub no_normalize: bool,
    /// Ranks as R1,R2,R3,H1,H2,H3.
    #[arg(long, conflicts_with = "dim")]
    pub ranks: Option<Ranks>,
    /// Single latent dimension: ring ranks = DIM, core-link ranks = 2.
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, default_value_t = 0.01)]
    pub eta: f64,
    #[arg(long, default_value_t = 0.01)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    pub cp: f64,
    #[arg(long, default_value_t = 0.0)]
    pub ci: f64,
    #[arg(long, default_value_t = 0.001)]
    pub cd: f64,
    #[arg(long, default_value_t = 1000)]
    pub epochs: usize,
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
    /// Run every epoch instead of stopping on validation plateaus.
    #[arg(long)]
    pub no_early_stopping: bool,
    #[arg(long, default_value_t = 0.1)]
    pub init_scale: f64,
    /// Base seed; repetition r uses seed + r.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Train:valid:test ratios.
    #[arg(long, default_value = "1:2:7")]
    pub split: SplitSpec,
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    /// Also report metrics after mapping back through exp(v) - 1.
    #[arg(long)]
    pub raw_domain_metrics: bool,
    /// Grid values for eta, comma separated.
    #[arg(long, value_parser = parse_list, default_value = "0.1,0.03,0.01")]
    pub etas: ::std::vec::Vec<f64>,
    /// Grid values for lambda, comma separated.
    #[arg(long, value_parser = parse_list, default_value = "0,0.001,0.01")]
    pub lambdas: ::std::vec::Vec<f64>,
    /// Checkpoint to read (evaluate) or write (train).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Output directory (split).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Where to write the JSON report (default: standard output).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Re-run the config embedded in an earlier report; other flags are ignored.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, value_parser = parse_triple)]
    pub dims: [usize; 3],
    /// Planted ranks as R1,R2,R3,H1,H2,H3.
    #[arg(long, default_value = "2,2,2,2,2,2")]
    pub ranks: Ranks,
    #[arg(long, default_value_t = 0.3)]
    pub density: f64,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.7)]
    pub value_scale: f64,
    /// COO file for the observations.
    #[arg(long)]
    pub output: PathBuf,
    /// Checkpoint file for the planted factors.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

impl CommonArgs {
    fn into_config(self, command: Command) -> Result<RunConfig> {
        if let Some(path) = &self.config {
            let mut cfg = load_config(path)?;
            if cfg.command != command {
                return Err(Error::Parameter(format!(
                    "config is for {:?}, not {command:?}",
                    cfg.command
                )));
            }
            if self.report.is_some() {
                cfg.report_path = self.report;
            }
            return Ok(cfg);
        }
        let ranks = match (self.ranks, self.dim) {
            (Some(r), _) => r,
            (None, Some(d)) => Ranks::from_latent_dim(d)?,
            (None, None) => Ranks::default(),
        };
        let mut split = self.split;
        split.seed = self.seed;
        Ok(RunConfig {
            command,
            input: self.input,
            dims: self.dims,
            keep_last: self.keep_last,
            normalize: !self.no_normalize,
            split,
            ranks,
            hp: HyperParams {
                eta: self.eta,
                lambda: self.lambda,
                cp: self.cp,
                ci: self.ci,
                cd: self.cd,
                max_epochs: self.epochs,
                patience: self.patience,
                early_stopping: !self.no_early_stopping,
                seed: self.seed,
                init_scale: self.init_scale,
            },
            repetitions: self.reps,
            raw_domain_metrics: self.raw_domain_metrics,
            etas: self.etas,
            lambdas: self.lambdas,
            synth: None,
            checkpoint: self.checkpoint,
            truth: None,
            output: self.output,
            report_path: self.report,
        })
    }
}

impl CliCommand {
    pub fn into_config(self) -> Result<RunConfig> {
        match self {
            CliCommand::IngestCheck(a) => a.into_config(Command::IngestCheck),
            CliCommand::Split(a) => a.into_config(Command::Split),
            CliCommand::Train(a) => a.into_config(Command::Train),
            CliCommand::Evaluate(a) => a.into_config(Command::Evaluate),
            CliCommand::Ablate(a) => a.into_config(Command::Ablate),
            CliCommand::Grid(a) => a.into_config(Command::Grid),
            CliCommand::Synth(s) => {
                let mut cfg = RunConfig::new(Command::Synth);
                cfg.synth = Some(SynthSpec {
                    dims: s.dims,
                    ranks: s.ranks,
                    density: s.density,
                    noise_sigma: s.noise,
                    seed: s.seed,
                    value_scale: s.value_scale,
                });
                cfg.output = Some(s.output);
                cfg.truth = s.truth;
                cfg.report_path = s.report;
                Ok(cfg)
            }
        }
    }
}

/// Parses `args`, runs the command and writes the report to the report
/// path (or standard output). Errors go to standard error with exit code 1.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = cli.command.into_config().and_then(|cfg| {
        let text = execute(&cfg)?;
        match &cfg.report_path {
            Some(path) => std::fs::write(path, text).map_err(|e| Error::io(path, e)),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
