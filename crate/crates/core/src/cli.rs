//! Command-line front end. Each subcommand is also callable as a function.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::autodiff::checkpoint;
use crate::config::RunConfig;
use crate::data::{cache, DatasetSplit};
use crate::discriminator::Discriminator;
use crate::error::{Error, Result};
use crate::eval::{evaluate_scenes, EvalReport};
use crate::generator::{generate, Generator, OutputHead};
use crate::trainer::{adversarial_train, pretrain, LogRecord, LogWriter};

/// File names inside a training run directory.
pub const TRAIN_LOG: &str = "train.log";
pub const PRETRAIN_CKPT: &str = "pretrain.ckpt";
pub const MODEL_CKPT: &str = "model.ckpt";
pub const CONFIG_DUMP: &str = "config.txt";

/// Critic initialization seed relative to the generator seed.
const CRITIC_SEED_OFFSET: u64 = 0x5EED;

#[derive(Debug, Parser)]
#[command(name = "dtgan", version, about = "Trajectory prediction with random-weight graph attention GANs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract windows and print train/val/test counts.
    Preprocess(PreprocessArgs),
    /// Pre-train the generator, then train it adversarially.
    Train(TrainArgs),
    /// Report ADE, FDE, AMD and AMV of a checkpoint.
    Evaluate(EvaluateArgs),
    /// Write observed, true and sampled trajectories of one window as CSV.
    Export(ExportArgs),
}

/// Options shared by every subcommand that reads data.
#[derive(Debug, Args, Default, Clone)]
pub struct DataArgs {
    /// Run configuration file (`key = value` lines).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset root holding one directory per scene.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args, Default, Clone)]
pub struct PreprocessArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Held-out scene (or `synthetic`).
    #[arg(long)]
    pub scene: Option<String>,
    /// Window length; the prediction length becomes `slen - obs_len`.
    #[arg(long)]
    pub slen: Option<usize>,
    #[arg(long)]
    pub min_ped: Option<usize>,
    #[arg(long)]
    pub skip: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the extracted windows to this cache file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Default, Clone)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub scene: Option<String>,
    /// Loss variant: dtgan, dtgan-m, dtgan-g or dtgan-u.
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run directory for the log, checkpoints and config dump.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args, Default, Clone)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Scenes to evaluate, comma separated or repeated.
    #[arg(long = "scene", value_delimiter = ',', required = true)]
    pub scenes: Vec<String>,
    #[arg(long)]
    pub k_adefde: Option<usize>,
    #[arg(long)]
    pub k_amdamv: Option<usize>,
    /// Edge-weight seeds, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    /// Also write the report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Default, Clone)]
pub struct ExportArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub scene: String,
    /// Index of the test window to export.
    #[arg(long, default_value_t = 0)]
    pub batch_index: usize,
    /// Number of sampled futures.
    #[arg(long = "samples", default_value_t = 20)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn base_config(data: &DataArgs) -> Result<RunConfig> {
    let mut cfg = match &data.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(dir) = &data.data_dir {
        cfg.data_dir = Some(dir.clone());
    }
    Ok(cfg)
}

fn finish_config(mut cfg: RunConfig, data: &DataArgs) -> Result<RunConfig> {
    cfg.apply_overrides(&data.overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Extracts the windows of one split and returns them with the config used.
pub fn preprocess(args: &PreprocessArgs) -> Result<(DatasetSplit, RunConfig)> {
    let mut cfg = base_config(&args.data)?;
    if let Some(scene) = &args.scene {
        cfg.set("scene", scene)?;
    }
    if let Some(slen) = args.slen {
        let obs = cfg.extract.obs_len;
        if slen <= obs {
            return Err(Error::InvalidArgument(format!(
                "--slen {slen} must exceed obs_len {obs}"
            )));
        }
        cfg.set("pred_len", &(slen - obs).to_string())?;
    }
    if let Some(v) = args.min_ped {
        cfg.extract.min_ped = v;
    }
    if let Some(v) = args.skip {
        cfg.extract.skip = v;
    }
    if let Some(v) = args.seed {
        cfg.set("seed", &v.to_string())?;
    }
    let cfg = finish_config(cfg, &args.data)?;
    let split = cfg.load_split(cfg.scene()?)?;
    if let Some(out) = &args.out {
        if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        cache::save(&split, cfg.train.seed, out)?;
    }
    Ok((split, cfg))
}

/// What a training run produced.
#[derive(Debug)]
pub struct TrainOutcome {
    pub generator: Generator,
    pub critic: Discriminator,
    pub out_dir: PathBuf,
}

/// Resolves the configuration of `train` without running it.
pub fn train_config(args: &TrainArgs) -> Result<RunConfig> {
    let mut cfg = base_config(&args.data)?;
    if let Some(scene) = &args.scene {
        cfg.set("scene", scene)?;
    }
    if let Some(v) = &args.variant {
        cfg.set("variant", v)?;
    }
    if let Some(v) = args.seed {
        cfg.set("seed", &v.to_string())?;
    }
    if let Some(dir) = &args.out_dir {
        cfg.out_dir = dir.clone();
    }
    finish_config(cfg, &args.data)
}

/// Trains a generator and critic from `cfg`, writing the run directory.
pub fn train_with(cfg: &RunConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let split = cfg.load_split(cfg.scene()?)?;
    let dir = &cfg.out_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_file(&dir.join(CONFIG_DUMP), cfg.to_text().as_bytes())?;

    let log_path = dir.join(TRAIN_LOG);
    let mut log_file = fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    writeln!(log_file, "{}", LogRecord::HEADER).map_err(|e| Error::io(&log_path, e))?;
    let mut writer = LogWriter(log_file);

    let seed = cfg.train.seed;
    let mut gen = Generator::new(cfg.generator.clone(), seed)?;
    pretrain(&mut gen, &split.train, &split.val, &cfg.train, &mut writer)?;
    checkpoint::save(&gen.params, &dir.join(PRETRAIN_CKPT))?;

    let mut critic = Discriminator::new(cfg.discriminator.clone(), seed.wrapping_add(CRITIC_SEED_OFFSET))?;
    adversarial_train(&mut gen, &mut critic, &split.train, &cfg.train, &mut writer)?;
    let mut merged = gen.params.clone();
    merged.merge(critic.params.clone())?;
    checkpoint::save(&merged, &dir.join(MODEL_CKPT))?;

    Ok(TrainOutcome {
        generator: gen,
        critic,
        out_dir: dir.clone(),
    })
}

pub fn train(args: &TrainArgs) -> Result<TrainOutcome> {
    train_with(&train_config(args)?)
}

/// Evaluates a checkpoint on the test windows of each requested scene.
pub fn evaluate(args: &EvaluateArgs) -> Result<EvalReport> {
    let mut cfg = base_config(&args.data)?;
    if let Some(k) = args.k_adefde {
        cfg.metrics.k_adefde = k;
    }
    if let Some(k) = args.k_amdamv {
        cfg.metrics.k_amdamv = k;
    }
    if !args.seeds.is_empty() {
        cfg.metrics.seeds = args.seeds.clone();
    }
    let cfg = finish_config(cfg, &args.data)?;
    let gen = Generator::from_params(checkpoint::load(&args.checkpoint)?)?;
    let scenes = args
        .scenes
        .iter()
        .map(|s| Ok((s.clone(), cfg.load_split(s)?.test)))
        .collect::<Result<Vec<_>>>()?;
    let report = evaluate_scenes(&gen, &scenes, &cfg.metrics)?;
    if let Some(out) = &args.out {
        write_file(out, report.render().as_bytes())?;
    }
    Ok(report)
}

/// Header of the export CSV.
pub const EXPORT_HEADER: [&str; 12] = [
    "scene", "ped_id", "sample_id", "frame", "kind", "x", "y", "mu_x", "mu_y", "sigma_x", "sigma_y", "rho",
];

/// Writes one test window of `scene` with `samples` predicted futures.
///
/// Rows are `obs` and `truth` positions per pedestrian, then `pred`
/// positions per sample. For the Gaussian head the predicted displacement
/// distribution of each `pred` frame fills the last five columns; they are
/// empty otherwise. Returns the number of data rows.
pub fn export(args: &ExportArgs) -> Result<usize> {
    let cfg = finish_config(base_config(&args.data)?, &args.data)?;
    let gen = Generator::from_params(checkpoint::load(&args.checkpoint)?)?;
    let split = cfg.load_split(&args.scene)?;
    let window = split.test.get(args.batch_index).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "--batch-index {} out of range: scene `{}` has {} test windows",
            args.batch_index,
            args.scene,
            split.test.len()
        ))
    })?;
    let preds = generate(&gen, window, args.seed, args.samples)?;
    let gaussian = gen.config.head == OutputHead::Gaussian;

    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::InvalidArgument(format!("csv: {e}"));
    w.write_record(EXPORT_HEADER).map_err(csv_err)?;
    let n = window.num_peds();
    let mut rows = 0;
    let blank = || vec![String::new(); 5];
    let mut emit = |ped: usize, sample: String, t: usize, kind: &str, xy: [f64; 2], extra: Vec<String>| -> Result<()> {
        let mut rec = vec![
            args.scene.clone(),
            window.ped_ids[ped].to_string(),
            sample,
            window.frames[t].to_string(),
            kind.to_string(),
            xy[0].to_string(),
            xy[1].to_string(),
        ];
        rec.extend(extra);
        rows += 1;
        w.write_record(&rec).map_err(csv_err)
    };
    for i in 0..n {
        for t in 0..window.obs_len {
            emit(i, String::new(), t, "obs", window.abs_at(t, i), blank())?;
        }
        for t in 0..window.pred_len {
            emit(i, String::new(), window.obs_len + t, "truth", window.abs_at(window.obs_len + t, i), blank())?;
        }
    }
    for k in 0..preds.k {
        for i in 0..n {
            for t in 0..preds.pred_len {
                let extra = if gaussian {
                    let g = &preds.distributions[k];
                    let c = t * n + i;
                    vec![
                        g.mu[2 * c].to_string(),
                        g.mu[2 * c + 1].to_string(),
                        g.sigma[2 * c].to_string(),
                        g.sigma[2 * c + 1].to_string(),
                        g.rho[c].to_string(),
                    ]
                } else {
                    blank()
                };
                emit(i, k.to_string(), window.obs_len + t, "pred", preds.sample(k, t, i), extra)?;
            }
        }
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
    write_file(&args.out, &bytes)?;
    Ok(rows)
}

/// Runs a parsed command, printing its result to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let io = |e| Error::io("stdout", e);
    match cli.command {
        Command::Preprocess(args) => {
            let (split, _) = preprocess(&args)?;
            let (train, val, test) = split.counts();
            writeln!(out, "scene {} train {train} val {val} test {test}", split.name).map_err(io)?;
        }
        Command::Train(args) => {
            let outcome = train(&args)?;
            writeln!(out, "wrote {}", outcome.out_dir.join(MODEL_CKPT).display()).map_err(io)?;
        }
        Command::Evaluate(args) => {
            let report = evaluate(&args)?;
            write!(out, "{}", report.render()).map_err(io)?;
        }
        Command::Export(args) => {
            let rows = export(&args)?;
            writeln!(out, "wrote {rows} rows to {}", args.out.display()).map_err(io)?;
        }
    }
    Ok(())
}

/// Process exit code for a failed run: 2 for usage and input errors, 1 for
/// failures during computation.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_usage() {
        2
    } else {
        1
    }
}
