//! The `emoaug` command line: augment, extract, train, eval, infer.

pub mod config;

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use walkdir::WalkDir;

use crate::audio_io::save_wav;
use crate::datastore::{
    CalmPolicy, DataError, EmotionLabel, ManifestEntry, load_manifest, parse_ravdess_filename_with, read_cache,
    write_cache,
};
use crate::nn::CheckpointError;
use crate::pipeline::{self, Featurizer, PipelineError, Width};
use crate::training::{EvalReport, TrainError, evaluate};
use config::{ConvActivation, PipelineConfig};

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_AUDIO: u8 = 3;
pub const EXIT_OVERWRITE: u8 = 4;
pub const EXIT_DIVERGED: u8 = 5;
pub const EXIT_CHECKPOINT: u8 = 6;

#[derive(Debug, Parser)]
#[command(name = "emoaug", version, about = "Speech emotion recognition with augmentation and a Conv1D-LSTM network")]
pub struct Cli {
    /// JSON pipeline configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for per-file work; 1 forces sequential execution.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the ten augmented variants of every manifest clip as WAV files.
    Augment(AugmentArgs),
    /// Featurize clips (optionally augmenting in memory) into a feature cache.
    Extract(ExtractArgs),
    /// Train the network on a feature cache and write a checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a feature cache.
    Eval(EvalArgs),
    /// Classify one WAV file.
    Infer(InferArgs),
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// CSV manifest with header `path,label,clip_id`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Augmentation seed; falls back to EMOAUG_SEED, then the config.
    #[arg(long, env = "EMOAUG_SEED")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CalmArg {
    Merge,
    Drop,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long, conflicts_with = "in_dir")]
    pub manifest: Option<PathBuf>,
    /// Directory searched recursively for RAVDESS-named WAV files.
    #[arg(long)]
    pub in_dir: Option<PathBuf>,
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Generate the ten variants per clip before featurizing (default).
    #[arg(long, overrides_with = "no_augment")]
    pub augment: bool,
    /// Featurize the original clips only.
    #[arg(long, overrides_with = "augment")]
    pub no_augment: bool,
    #[arg(long, env = "EMOAUG_SEED")]
    pub seed: Option<u64>,
    /// Replace an existing cache file.
    #[arg(long)]
    pub force: bool,
    /// Handling of RAVDESS "calm" clips found with --in-dir.
    #[arg(long, value_enum, default_value = "merge")]
    pub calm: CalmArg,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint_out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub activation: Option<ConvActivation>,
    /// Network width.
    #[arg(long, value_enum)]
    pub width: Option<WidthArg>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Seed for the split, initialization and shuffling; falls back to
    /// EMOAUG_SEED, then the config.
    #[arg(long, env = "EMOAUG_SEED")]
    pub seed: Option<u64>,
    /// History CSV path; defaults to `<checkpoint>.history.csv`.
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WidthArg {
    Full,
    Reduced,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub report_dir: Option<PathBuf>,
    /// Score every variant instead of the original clips only.
    #[arg(long)]
    pub all_variants: bool,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub wav: PathBuf,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

/// A failure carrying its process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn new(code: u8, message: impl fmt::Display) -> Self {
        Self {
            code,
            message: message.to_string(),
        }
    }

    fn usage(message: impl fmt::Display) -> Self {
        Self::new(EXIT_USAGE, message)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Audio { .. } => Self::new(EXIT_AUDIO, e),
            _ => Self::usage(e),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io(_) => Self::new(1, e),
            _ => Self::usage(e),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        Self::new(EXIT_CHECKPOINT, e)
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Diverged { .. } => Self::new(EXIT_DIVERGED, e),
            TrainError::EmptyDataset | TrainError::BadConfig(_) => Self::usage(e),
            TrainError::Model(_) => Self::new(1, e),
        }
    }
}

/// Parses `args` and runs the command; usage errors exit 2.
pub fn main_from<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path).map_err(CliError::usage)?,
        None => PipelineConfig::default(),
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::usage("--threads must be at least 1"));
        }
        // a second initialization in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Augment(a) => cmd_augment(&cfg, a),
        Command::Extract(a) => cmd_extract(&cfg, a),
        Command::Train(a) => cmd_train(&cfg, a),
        Command::Eval(a) => cmd_eval(&cfg, a),
        Command::Infer(a) => cmd_infer(&cfg, a),
    }
}

fn required(flag: Option<PathBuf>, configured: &Option<PathBuf>, name: &str) -> Result<PathBuf, CliError> {
    flag.or_else(|| configured.clone())
        .ok_or_else(|| CliError::usage(format!("--{name} is required (or set it under `paths` in the config)")))
}

fn featurizer(cfg: &PipelineConfig) -> Result<Featurizer, CliError> {
    Ok(Featurizer::new(cfg.window(), cfg.augment_config(), cfg.feature_config())?)
}

fn cmd_augment(cfg: &PipelineConfig, args: AugmentArgs) -> Result<(), CliError> {
    let manifest = required(args.manifest, &cfg.paths.manifest, "manifest")?;
    let entries = load_manifest(&manifest)?;
    let seed = args.seed.unwrap_or(cfg.augment.seed);
    let fz = featurizer(cfg)?;
    fs::create_dir_all(&args.out_dir).map_err(|e| CliError::new(1, format!("{}: {e}", args.out_dir.display())))?;
    for entry in &entries {
        let clip = fz.load(&entry.path)?;
        let stem = entry.path.file_stem().unwrap_or_default().to_string_lossy();
        let variants = fz.variants(&clip, true, pipeline::clip_seed(seed, &entry.path));
        for (k, v) in variants.iter().enumerate() {
            let out = args.out_dir.join(format!("{stem}__v{k}.wav"));
            save_wav(v, &out).map_err(|e| CliError::new(EXIT_AUDIO, format!("{}: {e}", out.display())))?;
        }
        println!("{} -> {} variants", entry.path.display(), variants.len());
    }
    println!("wrote {} files", entries.len() * crate::augment::VARIANT_COUNT);
    Ok(())
}

fn scan_dir(dir: &Path, calm: CalmPolicy) -> Result<Vec<ManifestEntry>, CliError> {
    let mut entries = Vec::new();
    for item in WalkDir::new(dir).sort_by_file_name() {
        let item = item.map_err(|e| CliError::usage(format!("{}: {e}", dir.display())))?;
        let path = item.path();
        let is_wav = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav"));
        if !item.file_type().is_file() || !is_wav {
            continue;
        }
        let name = path.file_name().unwrap_or_default().to_string_lossy();
        if let Some(label) = parse_ravdess_filename_with(&name, calm)? {
            entries.push(ManifestEntry {
                path: path.to_path_buf(),
                label,
                clip_id: path.file_stem().unwrap_or_default().to_string_lossy().into_owned(),
            });
        }
    }
    if entries.is_empty() {
        return Err(CliError::usage(format!("no RAVDESS WAV files under {}", dir.display())));
    }
    Ok(entries)
}

fn cmd_extract(cfg: &PipelineConfig, args: ExtractArgs) -> Result<(), CliError> {
    let cache = required(args.cache, &cfg.paths.cache, "cache")?;
    if cache.exists() && !args.force {
        return Err(CliError::new(
            EXIT_OVERWRITE,
            format!("{} exists; pass --force to overwrite", cache.display()),
        ));
    }
    let entries = match (&args.in_dir, args.manifest.or_else(|| cfg.paths.manifest.clone())) {
        (Some(dir), _) => {
            let calm = match args.calm {
                CalmArg::Merge => CalmPolicy::MergeIntoNeutral,
                CalmArg::Drop => CalmPolicy::Drop,
            };
            scan_dir(dir, calm)?
        }
        (None, Some(manifest)) => load_manifest(&manifest)?,
        (None, None) => return Err(CliError::usage("one of --manifest or --in-dir is required")),
    };
    let augment = !args.no_augment;
    let seed = args.seed.unwrap_or(cfg.augment.seed);
    let fz = featurizer(cfg)?;
    let records = fz.featurize(&entries, augment, seed, |e, n| {
        println!("{}: {n} records", e.path.display());
    })?;
    write_cache(&cache, &records)?;
    println!("wrote {} records to {}", records.len(), cache.display());
    Ok(())
}

fn cmd_train(cfg: &PipelineConfig, args: TrainArgs) -> Result<(), CliError> {
    let cache = required(args.cache, &cfg.paths.cache, "cache")?;
    let out = required(args.checkpoint_out, &cfg.paths.checkpoint, "checkpoint-out")?;
    let mut model = cfg.model_options();
    if let Some(a) = args.activation {
        model.activation = a.into();
    }
    if let Some(w) = args.width {
        model.width = match w {
            WidthArg::Full => Width::Full,
            WidthArg::Reduced => Width::Reduced,
        };
    }
    let mut train_cfg = cfg.train.clone();
    if let Some(n) = args.max_epochs {
        train_cfg.max_epochs = n;
    }
    if let Some(s) = args.seed {
        train_cfg.seed = s;
    }
    train_cfg.validate()?;

    let records = read_cache(&cache)?;
    if records.is_empty() {
        return Err(CliError::usage(format!("{} holds no records", cache.display())));
    }
    let prepared = pipeline::prepare(&records, (0.8, 0.1, 0.1), train_cfg.seed)?;
    println!(
        "train {} rows, val {} rows, test {} rows",
        prepared.train.len(),
        prepared.val.len(),
        prepared.test.len()
    );
    let trained = pipeline::train_model(&prepared, &model, &train_cfg, |r, _| {
        println!(
            "epoch {:>3}  loss {:.4}  acc {:.4}  val_loss {:.4}  val_acc {:.4}  lr {:.3e}",
            r.epoch, r.train_loss, r.train_acc, r.val_loss, r.val_acc, r.lr
        );
    })?;
    trained.checkpoint.save(&out)?;
    let history_path = args.history.unwrap_or_else(|| {
        let mut p = out.clone().into_os_string();
        p.push(".history.csv");
        PathBuf::from(p)
    });
    trained
        .outcome
        .history
        .save_csv(&history_path)
        .map_err(|e| CliError::new(1, format!("{}: {e}", history_path.display())))?;
    if let Some(best) = trained.outcome.history.best() {
        println!("best val_acc {:.4} at epoch {}", best.val_acc, best.epoch);
    }
    if !prepared.test.is_empty() {
        let report = evaluate(&trained.spec, &trained.outcome.params, &prepared.test)?;
        println!("test {}", report.summary_line());
    }
    println!("checkpoint written to {}", out.display());
    Ok(())
}

fn cmd_eval(cfg: &PipelineConfig, args: EvalArgs) -> Result<(), CliError> {
    let cache = required(args.cache, &cfg.paths.cache, "cache")?;
    let ck_path = required(args.checkpoint, &cfg.paths.checkpoint, "checkpoint")?;
    let report_dir = required(args.report_dir, &cfg.paths.reports, "report-dir")?;
    let ck = crate::nn::Checkpoint::load(&ck_path)?;
    let (spec, params, standardizer) = pipeline::restore(&ck)?;
    let records = read_cache(&cache)?;
    let data = pipeline::dataset_from_records(&records, &standardizer, |r| args.all_variants || r.variant == 0);
    let report: EvalReport = evaluate(&spec, &params, &data)?;

    fs::create_dir_all(&report_dir).map_err(|e| CliError::new(1, format!("{}: {e}", report_dir.display())))?;
    let io_err = |p: &Path, e: std::io::Error| CliError::new(1, format!("{}: {e}", p.display()));
    let confusion = report_dir.join("confusion.csv");
    let file = fs::File::create(&confusion).map_err(|e| io_err(&confusion, e))?;
    report
        .write_confusion_csv(file, &EmotionLabel::names())
        .map_err(|e| io_err(&confusion, e))?;
    let summary = report_dir.join("summary.txt");
    fs::write(&summary, format!("{}\n", report.summary_line())).map_err(|e| io_err(&summary, e))?;
    println!("{} samples", data.len());
    println!("{}", report.summary_line());
    Ok(())
}

fn cmd_infer(cfg: &PipelineConfig, args: InferArgs) -> Result<(), CliError> {
    let ck_path = required(args.checkpoint, &cfg.paths.checkpoint, "checkpoint")?;
    let ck = crate::nn::Checkpoint::load(&ck_path)?;
    let (spec, params, standardizer) = pipeline::restore(&ck)?;
    let fz = featurizer(cfg)?;
    let clip = fz.load(&args.wav)?;
    let probs = pipeline::classify(&fz, &clip, &spec, &params, &standardizer)?;
    for (label, p) in &probs {
        println!("{label:<9} {p:.6}");
    }
    let (best, _) = probs
        .iter()
        .copied()
        .fold((EmotionLabel::Neutral, f32::NEG_INFINITY), |acc, (l, p)| if p > acc.1 { (l, p) } else { acc });
    println!("prediction: {best}");
    Ok(())
}
