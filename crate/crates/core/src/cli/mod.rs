//! The `corrnet` command line.
//!
//! Machine-readable results go to standard output (or `--out`); summaries and
//! errors go to standard error. Exit status is 0 on success, 1 when a
//! computation fails, and 2 for usage or input problems.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::capture::{self, CaptureError, ReadStats};
use crate::classify::{self, ClassifierKind, ClassifyError, TrainedModel};
use crate::dataset::{self, ClassLabel, DatasetError, FeatureMatrix};
use crate::features::{self, format_feature_list, parse_feature_list, FeatureId, FeatureVector};
use crate::flow::{self, OpenReason};
use crate::ranking::{self, RankingError, RankingMethod};
use crate::selection::{self, AccuracyEvaluator, CvEvaluator, HoldoutEvaluator, Policy, SelectionError};

pub mod config;

pub use config::{parse_config, AccuracySource, ConfigError, MaxDepth, Overrides, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_COMPUTE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "corrnet", version, about = "TCP flow features, correlation-based ranking and feature selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract per-flow features from pcap/pcapng captures into a CSV.
    Extract(ExtractArgs),
    /// Rank features against the class label.
    Rank(RankArgs),
    /// Rank feature pairs by NMRS.
    Pairs(PairsArgs),
    /// Run NMRS-ordered feature elimination.
    Select(SelectArgs),
    /// Run the selection once per ranking method.
    Compare(CompareArgs),
    /// Print the stratified fold plan as JSON.
    Folds(FoldsArgs),
    /// Train a classifier and write it as JSON.
    Train(TrainArgs),
    /// Score a trained model, or cross-validate a feature subset.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
struct RunFlags {
    /// key = value file; flags override it.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Seed for every random stream [env: CORRNET_SEED] [default: 42]
    #[arg(long)]
    seed: Option<u64>,
    /// Cross-validation folds [default: 10]
    #[arg(long, short)]
    k: Option<usize>,
    /// tree, forest, bagging or gnb [default: tree]
    #[arg(long)]
    classifier: Option<ClassifierKind>,
    /// Ensemble size [default: 10]
    #[arg(long)]
    n_estimators: Option<usize>,
    /// Tree depth limit, or `none` [default: none]
    #[arg(long)]
    max_depth: Option<MaxDepth>,
    /// [default: 2]
    #[arg(long)]
    min_samples_split: Option<usize>,
}

impl RunFlags {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            k: self.k,
            classifier: self.classifier,
            n_estimators: self.n_estimators,
            max_depth: self.max_depth,
            min_samples_split: self.min_samples_split,
            ..Overrides::default()
        }
    }
}

#[derive(Debug, Args)]
struct ExtractArgs {
    /// Capture files.
    #[arg(required = true)]
    pcaps: Vec<PathBuf>,
    /// Class of every flow in these captures.
    #[arg(long)]
    label: ClassLabel,
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Seconds of silence that end a flow [default: 600]
    #[arg(long)]
    idle_timeout: Option<f64>,
    /// Drop flows whose handshake was not captured.
    #[arg(long)]
    require_syn: bool,
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RankArgs {
    csv: PathBuf,
    #[arg(long, default_value = "crrelevance")]
    method: RankingMethod,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PairsArgs {
    csv: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SelectionFlags {
    /// exhaustive or stop-on-decline [default: exhaustive]
    #[arg(long)]
    policy: Option<Policy>,
    /// Smallest subset the loop may reach [default: 1]
    #[arg(long)]
    min_active: Option<usize>,
    /// cv or holdout [default: cv]
    #[arg(long)]
    accuracy_source: Option<AccuracySource>,
    /// Held-out CSV; implies holdout accuracy unless --accuracy-source says otherwise.
    #[arg(long, value_name = "CSV")]
    test: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SelectArgs {
    csv: PathBuf,
    /// Feature–class ranking that picks each victim.
    #[arg(long, default_value = "crrelevance")]
    ranking: RankingMethod,
    #[command(flatten)]
    run: RunFlags,
    #[command(flatten)]
    selection: SelectionFlags,
    /// json prints the full outcome; csv prints the trace.
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    csv: PathBuf,
    #[command(flatten)]
    run: RunFlags,
    #[command(flatten)]
    selection: SelectionFlags,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FoldsArgs {
    csv: PathBuf,
    #[command(flatten)]
    run: RunFlags,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    csv: PathBuf,
    /// Features to train on, e.g. F3,F12 [default: all columns]
    #[arg(long)]
    features: Option<String>,
    #[command(flatten)]
    run: RunFlags,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    csv: PathBuf,
    /// Model from `train`; without it the features are cross-validated.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, conflicts_with = "model")]
    features: Option<String>,
    #[command(flatten)]
    run: RunFlags,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

/// A failed command: its exit status and message.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

fn compute(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_COMPUTE,
        message: message.into(),
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        usage(e.to_string())
    }
}

impl From<DatasetError> for Failure {
    fn from(e: DatasetError) -> Self {
        usage(e.to_string())
    }
}

impl From<RankingError> for Failure {
    fn from(e: RankingError) -> Self {
        match e {
            RankingError::Dataset(d) => d.into(),
            other => compute(other.to_string()),
        }
    }
}

impl From<ClassifyError> for Failure {
    fn from(e: ClassifyError) -> Self {
        match e {
            ClassifyError::Dataset(d) => d.into(),
            ClassifyError::MissingFeature(_)
            | ClassifyError::NoFeatures
            | ClassifyError::Json(_)
            | ClassifyError::InvalidModel(_)
            | ClassifyError::InvalidParams(_) => usage(e.to_string()),
            other => compute(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        usage(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;
type FileFlows = (ReadStats, Vec<flow::FlowRecord>);

/// Runs the command line `args` (including the program name).
pub fn run_with_io<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(stderr, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    let env_seed = std::env::var(config::SEED_ENV).ok();
    let mut ctx = Context {
        stdout,
        stderr,
        env_seed,
    };
    let result = match cli.command {
        Command::Extract(a) => ctx.extract(a),
        Command::Rank(a) => ctx.rank(a),
        Command::Pairs(a) => ctx.pairs(a),
        Command::Select(a) => ctx.select(a),
        Command::Compare(a) => ctx.compare(a),
        Command::Folds(a) => ctx.folds(a),
        Command::Train(a) => ctx.train(a),
        Command::Evaluate(a) => ctx.evaluate(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(ctx.stderr, "error: {}", f.message);
            f.code
        }
    }
}

/// Runs the process command line against the real standard streams.
pub fn run() -> i32 {
    let stdout = io::stdout();
    let stderr = io::stderr();
    let mut out = stdout.lock();
    let mut err = stderr.lock();
    run_with_io(std::env::args_os(), &mut out, &mut err)
}

struct Context<'a> {
    stdout: &'a mut dyn Write,
    stderr: &'a mut dyn Write,
    env_seed: Option<String>,
}

fn read_config_file(path: Option<&Path>) -> Result<Overrides, Failure> {
    match path {
        None => Ok(Overrides::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
            parse_config(&text).map_err(|e| usage(format!("{}: {e}", p.display())))
        }
    }
}

fn load_matrix(path: &Path) -> Result<FeatureMatrix, Failure> {
    dataset::load_csv(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

/// Loads a CSV that must have rows of both classes.
fn load_labelled(path: &Path) -> Result<FeatureMatrix, Failure> {
    let m = load_matrix(path)?;
    if m.is_empty() {
        return Err(usage(format!("{}: no data rows", path.display())));
    }
    m.require_both_classes()
        .map_err(|e| usage(format!("{}: {e}", path.display())))?;
    Ok(m)
}

fn features_arg(arg: Option<&str>, matrix: &FeatureMatrix) -> Result<Vec<FeatureId>, Failure> {
    match arg {
        None => Ok(matrix.feature_ids().to_vec()),
        Some(s) => {
            let list = parse_feature_list(s).map_err(|e| usage(e.to_string()))?;
            if list.is_empty() {
                return Err(usage("empty feature list"));
            }
            Ok(list)
        }
    }
}

fn json_line<T: Serialize>(w: &mut dyn Write, value: &T) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut *w, value)?;
    writeln!(w)
}

impl Context<'_> {
    fn config(&self, flags: Overrides, file: Option<&Path>) -> Result<RunConfig, Failure> {
        let file = read_config_file(file)?;
        Ok(RunConfig::resolve(flags, file, self.env_seed.as_deref())?)
    }

    /// Writes to `out` if given, standard output otherwise.
    fn emit(&mut self, out: Option<&Path>, write: impl FnOnce(&mut dyn Write) -> Result<(), Failure>) -> CmdResult {
        match out {
            Some(path) => {
                let file = File::create(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
                let mut w = BufWriter::new(file);
                write(&mut w)?;
                w.flush().map_err(|e| usage(format!("{}: {e}", path.display())))
            }
            None => {
                write(self.stdout)?;
                self.stdout.flush().map_err(Failure::from)
            }
        }
    }

    fn extract(&mut self, args: ExtractArgs) -> CmdResult {
        let flags = Overrides {
            idle_timeout: args.idle_timeout,
            ..Overrides::default()
        };
        let cfg = self.config(flags, args.config.as_deref())?;
        let timeout = cfg.idle_timeout();
        let per_file: Vec<Result<FileFlows, CaptureError>> = args
            .pcaps
            .par_iter()
            .map(|path| {
                let cap = capture::read_pcap(path)?;
                let flows = flow::assemble_flows(cap.packets, timeout);
                Ok((cap.stats, flows))
            })
            .collect();

        let mut vectors: Vec<FeatureVector> = Vec::new();
        let (mut records, mut tcp, mut skipped, mut flows_total, mut dropped) = (0u64, 0u64, 0u64, 0usize, 0usize);
        for (path, result) in args.pcaps.iter().zip(per_file) {
            let (stats, mut flows) = match result {
                Ok(v) => v,
                Err(CaptureError::Io(e)) => return Err(usage(format!("{}: {e}", path.display()))),
                Err(e) => return Err(compute(format!("{}: {e}", path.display()))),
            };
            if stats.truncated {
                let _ = writeln!(self.stderr, "warning: {}: final record truncated", path.display());
            }
            records += stats.records;
            tcp += stats.tcp;
            skipped += stats.skipped;
            flows_total += flows.len();
            if args.require_syn {
                let before = flows.len();
                flows.retain(|f| f.open_reason == OpenReason::Syn);
                dropped += before - flows.len();
            }
            vectors.extend(features::flow_vectors(&flows, args.label));
        }
        let matrix = FeatureMatrix::from_vectors(vectors);
        self.emit(args.out.as_deref(), |w| {
            dataset::write_csv(&matrix, w).map_err(|e| usage(e.to_string()))
        })?;
        let _ = writeln!(
            self.stderr,
            "extract: {} file(s), {records} records, {tcp} tcp packets, {skipped} skipped, {flows_total} flows, {} written{}",
            args.pcaps.len(),
            matrix.n_rows(),
            if args.require_syn {
                format!(" ({dropped} without handshake dropped)")
            } else {
                String::new()
            }
        );
        Ok(())
    }

    fn rank(&mut self, args: RankArgs) -> CmdResult {
        let matrix = load_labelled(&args.csv)?;
        let list = ranking::alt_ranking(&matrix, args.method)?;
        self.emit(args.out.as_deref(), |w| match args.format {
            Format::Csv => list.write_csv(w).map_err(|e| compute(e.to_string())),
            Format::Json => json_line(w, &list).map_err(Failure::from),
        })
    }

    fn pairs(&mut self, args: PairsArgs) -> CmdResult {
        let matrix = load_labelled(&args.csv)?;
        let queue = ranking::ff_ranking(&matrix)?;
        self.emit(args.out.as_deref(), |w| match args.format {
            Format::Csv => queue.write_csv(w).map_err(|e| compute(e.to_string())),
            Format::Json => json_line(w, &queue).map_err(Failure::from),
        })
    }

    fn selection_config(&self, run: &RunFlags, sel: &SelectionFlags) -> Result<RunConfig, Failure> {
        let mut flags = run.overrides();
        flags.policy = sel.policy;
        flags.min_active = sel.min_active;
        flags.test = sel.test.clone();
        flags.accuracy_source = sel
            .accuracy_source
            .or(sel.test.as_ref().map(|_| AccuracySource::Holdout));
        self.config(flags, run.config.as_deref())
    }

    fn select(&mut self, args: SelectArgs) -> CmdResult {
        let cfg = self.selection_config(&args.run, &args.selection)?;
        let matrix = load_labelled(&args.csv)?;
        let test = load_test(&cfg)?;
        let evaluator = make_evaluator(&cfg, &matrix, test.as_ref())?;
        let fc = ranking::alt_ranking(&matrix, args.ranking)?;
        let ff = ranking::ff_ranking(&matrix)?;
        let result = selection::select_features(
            matrix.feature_ids(),
            &fc,
            &ff,
            evaluator.as_ref(),
            &cfg.selection_options(),
        );
        let (outcome, failure) = match result {
            Ok(o) => (o, None),
            Err(SelectionError::Evaluator { partial, source }) => {
                (*partial, Some(compute(format!("selection stopped: {source}"))))
            }
            Err(e) => return Err(compute(e.to_string())),
        };
        self.emit(args.out.as_deref(), |w| match args.format {
            Format::Csv => outcome.write_trace_csv(w).map_err(|e| compute(e.to_string())),
            Format::Json => json_line(w, &outcome).map_err(Failure::from),
        })?;
        if let Some(f) = failure {
            return Err(f);
        }
        let _ = writeln!(
            self.stderr,
            "select: {} ({}), best {} at accuracy {} after {} step(s)",
            args.ranking,
            outcome.evaluator,
            format_feature_list(&outcome.best_subset),
            outcome.d_max,
            outcome.trace.len()
        );
        Ok(())
    }

    fn compare(&mut self, args: CompareArgs) -> CmdResult {
        let cfg = self.selection_config(&args.run, &args.selection)?;
        let matrix = load_labelled(&args.csv)?;
        let test = load_test(&cfg)?;
        let evaluator = make_evaluator(&cfg, &matrix, test.as_ref())?;
        let ff = ranking::ff_ranking(&matrix)?;
        let mut rows = Vec::new();
        for method in RankingMethod::ALL {
            let row = ranking::alt_ranking(&matrix, method)
                .map_err(|e| e.to_string())
                .and_then(|fc| {
                    selection::select_features(
                        matrix.feature_ids(),
                        &fc,
                        &ff,
                        evaluator.as_ref(),
                        &cfg.selection_options(),
                    )
                    .map_err(|e| e.to_string())
                });
            if let Err(e) = &row {
                let _ = writeln!(self.stderr, "compare: {method} failed: {e}");
            }
            rows.push(CompareRow::new(method, row));
        }
        let failed = rows.iter().filter(|r| r.error.is_some()).count();
        self.emit(args.out.as_deref(), |w| match args.format {
            Format::Json => json_line(w, &rows).map_err(Failure::from),
            Format::Csv => write_compare_csv(w, &rows).map_err(|e| compute(e.to_string())),
        })?;
        if failed > 0 {
            return Err(compute(format!("{failed} of {} methods failed", rows.len())));
        }
        Ok(())
    }

    fn folds(&mut self, args: FoldsArgs) -> CmdResult {
        let cfg = self.config(args.run.overrides(), args.run.config.as_deref())?;
        let matrix = load_matrix(&args.csv)?;
        let plan = dataset::stratified_kfold(&matrix, cfg.k, cfg.seed)?;
        self.emit(args.out.as_deref(), |w| {
            serde_json::to_writer(&mut *w, &plan).map_err(|e| compute(e.to_string()))?;
            writeln!(w).map_err(Failure::from)
        })
    }

    fn train(&mut self, args: TrainArgs) -> CmdResult {
        let cfg = self.config(args.run.overrides(), args.run.config.as_deref())?;
        let matrix = load_matrix(&args.csv)?;
        let features = features_arg(args.features.as_deref(), &matrix)?;
        let model = classify::train(&matrix, &features, &cfg.classifier, cfg.seed)?;
        self.emit(args.out.as_deref(), |w| json_line(w, &model).map_err(Failure::from))
    }

    fn evaluate(&mut self, args: EvaluateArgs) -> CmdResult {
        let cfg = self.config(args.run.overrides(), args.run.config.as_deref())?;
        let matrix = load_matrix(&args.csv)?;
        if matrix.is_empty() {
            return Err(usage(format!("{}: no data rows", args.csv.display())));
        }
        if let Some(path) = &args.model {
            let file = File::open(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            let model = TrainedModel::from_json(io::BufReader::new(file))
                .map_err(|e| usage(format!("{}: {e}", path.display())))?;
            let predicted = model.predict_rows(&matrix)?;
            let confusion = classify::Confusion::from_predictions(&predicted, matrix.labels());
            let report = ModelReport {
                classifier: model.kind(),
                features: model.features().to_vec(),
                rows: matrix.n_rows(),
                accuracy: confusion.accuracy(),
                precision: confusion.precision(),
                recall: confusion.recall(),
                confusion,
            };
            return self.emit(args.out.as_deref(), |w| json_line(w, &report).map_err(Failure::from));
        }
        matrix.require_both_classes()?;
        let features = features_arg(args.features.as_deref(), &matrix)?;
        let report = classify::cross_validate(&matrix, &features, &cfg.classifier, cfg.k, cfg.seed)?;
        self.emit(args.out.as_deref(), |w| json_line(w, &report).map_err(Failure::from))
    }
}

fn load_test(cfg: &RunConfig) -> Result<Option<FeatureMatrix>, Failure> {
    match (cfg.accuracy_source, &cfg.test) {
        (AccuracySource::Holdout, Some(path)) => load_matrix(path).and_then(|m| {
            if m.is_empty() {
                Err(usage(format!("{}: no data rows", path.display())))
            } else {
                Ok(Some(m))
            }
        }),
        _ => Ok(None),
    }
}

fn make_evaluator<'a>(
    cfg: &RunConfig,
    matrix: &'a FeatureMatrix,
    test: Option<&'a FeatureMatrix>,
) -> Result<Box<dyn AccuracyEvaluator + 'a>, Failure> {
    match test {
        Some(test) => {
            if test.feature_ids() != matrix.feature_ids() {
                return Err(usage("training and test CSVs have different feature columns"));
            }
            Ok(Box::new(HoldoutEvaluator {
                train: matrix,
                test,
                spec: cfg.classifier,
                seed: cfg.seed,
            }))
        }
        None => Ok(Box::new(CvEvaluator::new(matrix, cfg.classifier, cfg.k, cfg.seed)?)),
    }
}

#[derive(Debug, Serialize)]
struct ModelReport {
    classifier: ClassifierKind,
    features: Vec<FeatureId>,
    rows: usize,
    accuracy: f64,
    precision: f64,
    recall: f64,
    confusion: classify::Confusion,
}

#[derive(Debug, Serialize)]
struct CompareRow {
    method: RankingMethod,
    features: Vec<FeatureId>,
    accuracy: Option<f64>,
    baseline_accuracy: Option<f64>,
    steps: usize,
    error: Option<String>,
}

impl CompareRow {
    fn new(method: RankingMethod, result: Result<selection::SelectionOutcome, String>) -> Self {
        match result {
            Ok(o) => CompareRow {
                method,
                features: o.best_subset,
                accuracy: Some(o.d_max),
                baseline_accuracy: Some(o.baseline_accuracy),
                steps: o.trace.len(),
                error: None,
            },
            Err(e) => CompareRow {
                method,
                features: Vec::new(),
                accuracy: None,
                baseline_accuracy: None,
                steps: 0,
                error: Some(e),
            },
        }
    }
}

fn write_compare_csv(w: &mut dyn Write, rows: &[CompareRow]) -> Result<(), csv::Error> {
    let mut out = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    out.write_record(["method", "features", "accuracy", "baseline_accuracy", "steps", "error"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        out.write_record([
            r.method.to_string(),
            format_feature_list(&r.features),
            opt(r.accuracy),
            opt(r.baseline_accuracy),
            r.steps.to_string(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

