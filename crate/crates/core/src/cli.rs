//! Command-line front end: `generate`, `train`, `eval`, `transfer-demo`,
//! `center-study` and `replay`.
//!
//! Every run writes into its `--out` directory and finishes by atomically
//! writing `manifest.json` there. Progress and results go to stdout as one
//! JSON object per line; human-readable logs go to stderr (`FTL_LOG`).

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::codec::write_atomic;
use crate::config::ExperimentConfig;
use crate::dataset::{generate, ImbalancedDataset};
use crate::error::FtlError;
use crate::evaluation::{center_error_study, evaluate, nearest_center, CenterErrorTable, EvalReport, FeatureSpace};
use crate::network::{checkpoint, NetworkParams};
use crate::numerics::SeededRng;
use crate::trainer::{self, TrainMode, TrainReport};
use crate::transfer::{transfer_feature, update_stats};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DATASET_FILE: &str = "dataset.ftld";
pub const CHECKPOINT_FILE: &str = "checkpoint.ftlc";
pub const TRAIN_REPORT_FILE: &str = "train_report.json";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const EVAL_REPORT_FILE: &str = "eval_report.json";
pub const CLASSES_CSV: &str = "classes.csv";
pub const CENTER_ERROR_FILE: &str = "center_error.json";
pub const CENTER_ERROR_CSV: &str = "center_error.csv";
pub const TRANSFER_CSV: &str = "transfer.csv";

pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const DATA: i32 = 3;
    pub const DIVERGED: i32 = 4;
    pub const IO: i32 = 5;
}

#[derive(Parser, Debug)]
#[command(name = "ftl", version, about = "Feature transfer learning for under-represented classes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic imbalanced dataset.
    Generate(GenerateArgs),
    /// Train a model (alternating transfer schedule or plain baseline).
    Train(TrainArgs),
    /// Evaluate a checkpoint on the dataset's held-out probes.
    Eval(EvalArgs),
    /// Export source, target and transferred rich features as CSV.
    TransferDemo(TransferDemoArgs),
    /// Compare center estimators on subsets of the regular classes.
    CenterStudy(CenterStudyArgs),
    /// Re-run the invocation recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// Output directory; created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_regular: Option<usize>,
    #[arg(long)]
    n_ur: Option<usize>,
    #[arg(long)]
    samples_per_regular: Option<usize>,
    #[arg(long)]
    samples_per_ur: Option<usize>,
    #[arg(long)]
    input_dim: Option<usize>,
    #[arg(long)]
    class_sep: Option<f64>,
    #[arg(long)]
    shared_cov_rank: Option<usize>,
    #[arg(long)]
    factor_scale: Option<f64>,
    #[arg(long)]
    nuisance_strength: Option<f64>,
    #[arg(long)]
    noise_std: Option<f64>,
    #[arg(long)]
    ur_threshold: Option<usize>,
    #[arg(long)]
    holdout_per_class: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Ftl,
    Baseline,
}

impl From<ModeArg> for TrainMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Ftl => TrainMode::Ftl,
            ModeArg::Baseline => TrainMode::Baseline,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SpaceArg {
    Rich,
    Discriminative,
}

impl From<SpaceArg> for FeatureSpace {
    fn from(s: SpaceArg) -> Self {
        match s {
            SpaceArg::Rich => FeatureSpace::Rich,
            SpaceArg::Discriminative => FeatureSpace::Discriminative,
        }
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_enum, default_value = "ftl")]
    mode: ModeArg,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Feature space for identification; defaults to the config's choice.
    #[arg(long, value_enum)]
    space: Option<SpaceArg>,
    /// Also run the center-estimation study on the encoder's features.
    #[arg(long)]
    center_study: bool,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args, Debug)]
struct TransferDemoArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Number of (regular sample, UR class) pairs to export.
    #[arg(long, default_value_t = 100)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct CenterStudyArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    dataset: PathBuf,
    /// Encode with this checkpoint; raw inputs are used otherwise.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct ReplayArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Fail unless every replayed artifact is byte-identical to the original.
    #[arg(long)]
    verify: bool,
}

/// Fully resolved description of a run; enough to replay it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Invocation {
    Generate,
    Train { mode: TrainMode },
    Eval { space: FeatureSpace, center_study: bool, jobs: usize },
    TransferDemo { count: usize, seed: u64 },
    CenterStudy { jobs: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub invocation: Invocation,
    pub config: ExperimentConfig,
    pub seed: u64,
    /// Input files, as absolute paths.
    pub inputs: BTreeMap<String, PathBuf>,
    /// Output files, relative to the manifest's directory.
    pub artifacts: BTreeMap<String, PathBuf>,
    /// Wall-clock seconds per phase; the only nondeterministic field.
    pub timings: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self, FtlError> {
        let text = fs::read_to_string(path).map_err(|e| FtlError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| FtlError::CorruptRecord(format!("manifest {}: {e}", path.display())))
    }
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(FtlError),
    Diverged(FtlError),
    Io(FtlError),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Data(_) => exit::DATA,
            CliError::Diverged(_) => exit::DIVERGED,
            CliError::Io(_) => exit::IO,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Data(_) => "data",
            CliError::Diverged(_) => "diverged",
            CliError::Io(_) => "io",
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) => m.clone(),
            CliError::Data(e) | CliError::Diverged(e) | CliError::Io(e) => e.to_string(),
        }
    }

    /// Failures reading inputs are data errors, whatever their cause.
    fn input(e: FtlError) -> Self {
        match e {
            FtlError::Io { .. } => CliError::Data(e),
            other => other.into(),
        }
    }
}

impl From<FtlError> for CliError {
    fn from(e: FtlError) -> Self {
        match e {
            FtlError::ConfigInvalid(m) => CliError::Usage(m),
            FtlError::Diverged { .. } => CliError::Diverged(e),
            FtlError::Io { .. } => CliError::Io(e),
            other => CliError::Data(other),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn emit(v: &Value) {
    println!("{v}");
}

/// Parses `argv` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return exit::OK;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or_default().trim_start_matches("error: ");
            return fail(&CliError::Usage(first.to_string()));
        }
    };
    match dispatch(cli.command) {
        Ok(()) => exit::OK,
        Err(e) => fail(&e),
    }
}

fn fail(e: &CliError) -> i32 {
    log::error!("{}", e.message());
    emit(&json!({
        "event": "error",
        "code": e.code(),
        "kind": e.kind(),
        "message": e.message(),
    }));
    e.code()
}

fn dispatch(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Generate(a) => {
            let mut cfg = load_config(&a.common)?;
            let d = &mut cfg.dataset;
            macro_rules! apply {
                ($($f:ident),*) => { $(if let Some(v) = a.$f { d.$f = v; })* };
            }
            apply!(
                seed,
                n_regular,
                n_ur,
                samples_per_regular,
                samples_per_ur,
                input_dim,
                class_sep,
                shared_cov_rank,
                factor_scale,
                nuisance_strength,
                noise_std,
                ur_threshold,
                holdout_per_class
            );
            cfg.validate()?;
            execute(&Invocation::Generate, &cfg, &BTreeMap::new(), &a.common.out)
        }
        Command::Train(a) => {
            let mut cfg = load_config(&a.common)?;
            if let Some(s) = a.seed {
                cfg.trainer.seed = s;
            }
            let inputs = inputs([("dataset", a.dataset)])?;
            execute(&Invocation::Train { mode: a.mode.into() }, &cfg, &inputs, &a.common.out)
        }
        Command::Eval(a) => {
            let cfg = load_config(&a.common)?;
            let space = a.space.map(Into::into).unwrap_or(cfg.evaluation.space);
            let inputs = inputs([("dataset", a.dataset), ("checkpoint", a.checkpoint)])?;
            let inv = Invocation::Eval {
                space,
                center_study: a.center_study,
                jobs: a.jobs.max(1),
            };
            execute(&inv, &cfg, &inputs, &a.common.out)
        }
        Command::TransferDemo(a) => {
            let cfg = load_config(&a.common)?;
            let inputs = inputs([("dataset", a.dataset), ("checkpoint", a.checkpoint)])?;
            let inv = Invocation::TransferDemo {
                count: a.count,
                seed: a.seed,
            };
            execute(&inv, &cfg, &inputs, &a.common.out)
        }
        Command::CenterStudy(a) => {
            let mut cfg = load_config(&a.common)?;
            if let Some(s) = a.seed {
                cfg.evaluation.seed = s;
            }
            let mut named = vec![("dataset", a.dataset)];
            if let Some(c) = a.checkpoint {
                named.push(("checkpoint", c));
            }
            let inputs = inputs(named)?;
            execute(&Invocation::CenterStudy { jobs: a.jobs.max(1) }, &cfg, &inputs, &a.common.out)
        }
        Command::Replay(a) => {
            let manifest = RunManifest::load(&a.manifest).map_err(CliError::input)?;
            if manifest.version != env!("CARGO_PKG_VERSION") {
                log::warn!(
                    "manifest written by version {}, replaying with {}",
                    manifest.version,
                    env!("CARGO_PKG_VERSION")
                );
            }
            manifest.config.validate()?;
            execute(&manifest.invocation, &manifest.config, &manifest.inputs, &a.out)?;
            if a.verify {
                let origin = a.manifest.parent().unwrap_or(Path::new("."));
                verify_replay(&manifest, origin, &a.out)?;
            }
            Ok(())
        }
    }
}

fn load_config(c: &Common) -> CliResult<ExperimentConfig> {
    match &c.config {
        Some(p) => ExperimentConfig::load(p).map_err(CliError::input),
        None => Ok(ExperimentConfig::default()),
    }
}

fn inputs<'a>(named: impl IntoIterator<Item = (&'a str, PathBuf)>) -> CliResult<BTreeMap<String, PathBuf>> {
    named
        .into_iter()
        .map(|(k, p)| {
            let abs = fs::canonicalize(&p).map_err(|e| CliError::Data(FtlError::io(&p, e)))?;
            Ok((k.to_string(), abs))
        })
        .collect()
}

fn input<'a>(inputs: &'a BTreeMap<String, PathBuf>, name: &str) -> CliResult<&'a Path> {
    inputs
        .get(name)
        .map(PathBuf::as_path)
        .ok_or_else(|| CliError::Usage(format!("missing input `{name}`")))
}

fn load_dataset(inputs: &BTreeMap<String, PathBuf>) -> CliResult<ImbalancedDataset> {
    ImbalancedDataset::load(input(inputs, "dataset")?).map_err(CliError::input)
}

fn load_checkpoint(inputs: &BTreeMap<String, PathBuf>, ds: &ImbalancedDataset) -> CliResult<NetworkParams> {
    let path = input(inputs, "checkpoint")?;
    let params = checkpoint::load(path).map_err(CliError::input)?;
    if params.input_dim() != ds.input_dim || params.n_classes() != ds.n_classes {
        return Err(CliError::Data(FtlError::CorruptRecord(format!(
            "checkpoint {} expects {} inputs and {} classes; dataset has {} and {}",
            path.display(),
            params.input_dim(),
            params.n_classes(),
            ds.input_dim,
            ds.n_classes
        ))));
    }
    Ok(params)
}

/// Collects artifacts and timings, then writes the manifest last.
struct Run<'a> {
    out: &'a Path,
    artifacts: BTreeMap<String, PathBuf>,
    timings: BTreeMap<String, f64>,
}

impl<'a> Run<'a> {
    fn new(out: &'a Path) -> CliResult<Self> {
        fs::create_dir_all(out).map_err(|e| FtlError::io(out, e))?;
        Ok(Run {
            out,
            artifacts: BTreeMap::new(),
            timings: BTreeMap::new(),
        })
    }

    fn path(&self, file: &str) -> PathBuf {
        self.out.join(file)
    }

    fn write(&mut self, name: &str, file: &str, bytes: &[u8]) -> CliResult<()> {
        write_atomic(&self.path(file), bytes)?;
        self.record(name, file);
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, file: &str, value: &T) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value).expect("report serializes");
        text.push('\n');
        self.write(name, file, text.as_bytes())
    }

    fn record(&mut self, name: &str, file: &str) {
        self.artifacts.insert(name.to_string(), PathBuf::from(file));
        emit(&json!({"event": "artifact", "name": name, "path": self.path(file)}));
    }

    fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let v = f();
        self.timings.insert(phase.to_string(), t.elapsed().as_secs_f64());
        v
    }
}

fn execute(
    inv: &Invocation,
    cfg: &ExperimentConfig,
    inputs: &BTreeMap<String, PathBuf>,
    out: &Path,
) -> CliResult<()> {
    let mut run = Run::new(out)?;
    let seed = match inv {
        Invocation::Generate => {
            let ds = run.time("generate", || generate(&cfg.dataset))?;
            let path = run.path(DATASET_FILE);
            run.time("save", || ds.save(&path))?;
            run.record("dataset", DATASET_FILE);
            emit(&json!({
                "event": "dataset",
                "samples": ds.samples.len(),
                "holdout": ds.holdout.len(),
                "n_classes": ds.n_classes,
                "n_regular": ds.regular_ids.len(),
                "n_ur": ds.ur_ids.len(),
            }));
            cfg.dataset.seed
        }
        Invocation::Train { mode } => {
            let ds = load_dataset(inputs)?;
            let tcfg = cfg.train_config();
            info!("training ({mode:?}) on {} samples", ds.samples.len());
            let (params, report) = run.time("train", || trainer::run(&ds, &tcfg, *mode))?;
            write_train_outputs(&mut run, &params, &report)?;
            tcfg.seed
        }
        Invocation::Eval {
            space,
            center_study,
            jobs,
        } => {
            let ds = load_dataset(inputs)?;
            let params = load_checkpoint(inputs, &ds)?;
            let mut report = run.time("evaluate", || evaluate(&params, &ds, *space))?;
            if *center_study {
                let study = cfg.center_study_config(*jobs);
                let table = run.time("center_study", || center_error_study(&ds, |x| params.encode(x), &study))?;
                report.center_error_table = Some(table);
            }
            write_eval_outputs(&mut run, &report)?;
            cfg.evaluation.seed
        }
        Invocation::TransferDemo { count, seed } => {
            let ds = load_dataset(inputs)?;
            let params = load_checkpoint(inputs, &ds)?;
            let csv = run.time("transfer", || transfer_demo(&ds, &params, cfg, *count, *seed))?;
            run.write("transfer", TRANSFER_CSV, csv.as_bytes())?;
            *seed
        }
        Invocation::CenterStudy { jobs } => {
            let ds = load_dataset(inputs)?;
            let study = cfg.center_study_config(*jobs);
            let table = if inputs.contains_key("checkpoint") {
                let params = load_checkpoint(inputs, &ds)?;
                run.time("center_study", || center_error_study(&ds, |x| params.encode(x), &study))?
            } else {
                run.time("center_study", || center_error_study(&ds, |x| Ok(x.to_vec()), &study))?
            };
            for c in &table.cells {
                emit(&json!({
                    "event": "center_error",
                    "method": c.method,
                    "subset_size": c.subset_size,
                    "mean_error": c.mean_error,
                }));
            }
            run.write_json("center_error", CENTER_ERROR_FILE, &table)?;
            run.write("center_error_csv", CENTER_ERROR_CSV, center_error_csv(&table).as_bytes())?;
            cfg.evaluation.seed
        }
    };
    let manifest = RunManifest {
        tool: "ftl".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        invocation: inv.clone(),
        config: cfg.clone(),
        seed,
        inputs: inputs.clone(),
        artifacts: run.artifacts.clone(),
        timings: run.timings.clone(),
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    let path = run.path(MANIFEST_FILE);
    write_atomic(&path, text.as_bytes())?;
    emit(&json!({"event": "manifest", "path": path}));
    Ok(())
}

/// The persisted training report omits the per-step loss trace, which goes
/// to its own JSON-lines file.
#[derive(Serialize)]
struct TrainSummary<'a> {
    steps: usize,
    pretrain_drop: Option<f64>,
    pretrain_drop_ok: Option<bool>,
    hard_list_fallbacks: usize,
    snapshots: &'a [trainer::Snapshot],
    final_loss: Option<&'a crate::network::LossBreakdown>,
}

fn write_train_outputs(run: &mut Run<'_>, params: &NetworkParams, report: &TrainReport) -> CliResult<()> {
    for s in &report.snapshots {
        let mut v = serde_json::to_value(s).expect("snapshot serializes");
        v["event"] = json!("snapshot");
        emit(&v);
    }
    let mut events = String::new();
    for e in &report.events {
        events.push_str(&serde_json::to_string(e).expect("event serializes"));
        events.push('\n');
    }
    run.write("events", EVENTS_FILE, events.as_bytes())?;
    run.write("checkpoint", CHECKPOINT_FILE, &checkpoint::encode(params))?;
    let summary = TrainSummary {
        steps: report.steps,
        pretrain_drop: report.pretrain_drop,
        pretrain_drop_ok: report.pretrain_drop_ok,
        hard_list_fallbacks: report.hard_list_fallbacks,
        snapshots: &report.snapshots,
        final_loss: report.events.last().map(|e| &e.loss),
    };
    run.write_json("train_report", TRAIN_REPORT_FILE, &summary)?;
    emit(&json!({
        "event": "train_summary",
        "steps": report.steps,
        "pretrain_drop": report.pretrain_drop,
        "final_total_loss": report.events.last().map(|e| e.loss.total),
    }));
    Ok(())
}

fn write_eval_outputs(run: &mut Run<'_>, report: &EvalReport) -> CliResult<()> {
    run.write_json("eval_report", EVAL_REPORT_FILE, report)?;
    let mut csv = String::from("class_id,regular,count,weight_norm,radius_min,radius_mean,radius_max\n");
    for c in &report.classes {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            c.class_id, c.regular, c.count, c.weight_norm, c.radius.min, c.radius.mean, c.radius.max
        );
    }
    run.write("classes_csv", CLASSES_CSV, csv.as_bytes())?;
    if let Some(t) = &report.center_error_table {
        run.write("center_error_csv", CENTER_ERROR_CSV, center_error_csv(t).as_bytes())?;
    }
    emit(&json!({
        "event": "eval",
        "space": report.space,
        "rank1_regular": report.rank1_regular,
        "rank1_ur": report.rank1_ur,
        "rank1_overall": report.rank1_overall,
        "weight_norm_cv": report.weight_norm_stats.cv,
        "regular_weight_norm_mean": report.regular_weight_norm_mean,
        "ur_weight_norm_mean": report.ur_weight_norm_mean,
    }));
    Ok(())
}

fn center_error_csv(t: &CenterErrorTable) -> String {
    let mut csv = String::from("method,subset_size,mean_error\n");
    for c in &t.cells {
        let method = serde_json::to_value(c.method).expect("method serializes");
        let _ = writeln!(csv, "{},{},{}", method.as_str().unwrap_or_default(), c.subset_size, c.mean_error);
    }
    csv
}

/// Source, target-center and transferred rich features for `count` random
/// pairs of a regular training sample and a UR class, one row per vector.
fn transfer_demo(
    ds: &ImbalancedDataset,
    params: &NetworkParams,
    cfg: &ExperimentConfig,
    count: usize,
    seed: u64,
) -> Result<String, FtlError> {
    if ds.ur_ids.is_empty() {
        return Err(FtlError::InsufficientData("transfer demo needs UR classes".into()));
    }
    let stats = update_stats(ds, |x| params.encode(x), &cfg.transfer)?;
    let centers = stats.centers();
    let regular: Vec<usize> = (0..ds.samples.len())
        .filter(|&i| ds.is_regular(ds.samples[i].label))
        .collect();
    let ur: Vec<usize> = ds.ur_ids.iter().copied().collect();
    let mut rng = SeededRng::new(seed);
    let dim = params.rich_dim();
    let mut csv = String::from("pair,role,sample_id,class_id");
    for j in 0..dim {
        let _ = write!(csv, ",g{j}");
    }
    csv.push('\n');
    let mut hits = 0usize;
    for pair in 0..count {
        let sid = regular[rng.index(regular.len())];
        let src = ds.samples[sid].label;
        let tgt = ur[rng.index(ur.len())];
        let g = params.encode(&ds.samples[sid].x)?;
        let moved = transfer_feature(&g, &centers[src], &centers[tgt], &stats.basis)?;
        if nearest_center(&centers, &moved) == tgt {
            hits += 1;
        }
        for (role, id, class, v) in [
            ("source", Some(sid), src, &g),
            ("target_center", None, tgt, &centers[tgt]),
            ("transferred", None, tgt, &moved),
        ] {
            let id = id.map(|i| i.to_string()).unwrap_or_default();
            let _ = write!(csv, "{pair},{role},{id},{class}");
            for x in v.iter() {
                let _ = write!(csv, ",{x}");
            }
            csv.push('\n');
        }
    }
    emit(&json!({
        "event": "transfer",
        "pairs": count,
        "basis_rank": stats.basis.rank(),
        "basis_energy": stats.basis.energy,
        "nearest_to_target": if count > 0 { Some(hits as f64 / count as f64) } else { None },
    }));
    Ok(csv)
}

fn verify_replay(manifest: &RunManifest, origin: &Path, out: &Path) -> CliResult<()> {
    let mut mismatched = Vec::new();
    for (name, rel) in &manifest.artifacts {
        let a = origin.join(rel);
        let b = out.join(rel);
        let same = match (fs::read(&a), fs::read(&b)) {
            (Ok(x), Ok(y)) => x == y,
            _ => false,
        };
        if !same {
            mismatched.push(name.clone());
        }
    }
    emit(&json!({
        "event": "replay_verified",
        "identical": mismatched.is_empty(),
        "mismatched": mismatched,
    }));
    if mismatched.is_empty() {
        Ok(())
    } else {
        Err(CliError::Data(FtlError::CorruptRecord(format!(
            "replay differs from the original in: {}",
            mismatched.join(", ")
        ))))
    }
}
