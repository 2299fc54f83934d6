//! Command-line front end: `gen`, `contaminate`, `train`, `eval`, `report`,
//! plus `grid` and `sweep` for whole experiment runs.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{contaminate_training_set, replay_manifest, ContaminationManifest};
use crate::config::{config_keys, RunConfig};
use crate::dataset::{
    gen_synthetic_with, prepare, write_wide_csv, PreparedDataset, SyntheticSpec, WindowPair,
};
use crate::error::{Error, Result};
use crate::eval::{
    derive_seed, evaluate_models, lambda_sweep, run_scenario_grid, sweep_csv, ScenarioReport,
};
use crate::model::{load_checkpoint, save_checkpoint};
use crate::train::{train_model_logged, TrainLog};

pub const CHECKPOINT_FILE: &str = "checkpoint.cotsfa";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const GEN_MANIFEST_FILE: &str = "manifest.json";
pub const CONTAMINATION_FILE: &str = "contamination.json";
pub const TRAIN_WINDOWS_FILE: &str = "train_windows.csv";

fn config_help() -> String {
    let mut out = String::from("Config keys (set in the --config file or with --set key=value):\n");
    for (k, v) in config_keys() {
        let _ = writeln!(out, "  {k} = {v}");
    }
    out
}

#[derive(Debug, Parser)]
#[command(
    name = "cotsfa",
    version,
    about = "Contrastive time-series forecasting with anomaly-aware alignment"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. `--set train.lr0=0.01`. Applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        RunConfig::load(self.config.as_deref(), &self.overrides)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic dataset as wide CSVs plus a manifest.
    #[command(after_help = config_help())]
    Gen {
        #[command(flatten)]
        common: Common,
        /// Regenerate from a previous gen manifest instead of the config.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Corrupt a fraction of the training windows and write a replayable manifest.
    #[command(after_help = config_help())]
    Contaminate {
        #[command(flatten)]
        common: Common,
        /// CSV file or directory; overrides `dataset.path`.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Replay an existing contamination manifest.
        #[arg(long)]
        replay: Option<PathBuf>,
    },
    /// Train one model and write its checkpoint and log.
    #[command(after_help = config_help())]
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Contamination manifest to apply to the training windows.
        #[arg(long)]
        contamination: Option<PathBuf>,
    },
    /// Evaluate checkpoints under the configured test conditions.
    #[command(after_help = config_help())]
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        /// `NAME=PATH` or `PATH`; the first checkpoint is the baseline.
        #[arg(long = "checkpoint", required = true)]
        checkpoints: Vec<String>,
    },
    /// Re-aggregate existing report CSVs.
    #[command(after_help = config_help())]
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long = "input", required = true)]
        inputs: Vec<PathBuf>,
        /// Baseline variant; defaults to the first variant seen.
        #[arg(long)]
        baseline: Option<String>,
    },
    /// Train and evaluate the full scenario grid.
    #[command(after_help = config_help())]
    Grid {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Train one model per λ and seed and tabulate anomalous-condition errors.
    #[command(after_help = config_help())]
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

/// Parse `args` and run; returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: &Command) -> Result<()> {
    match command {
        Command::Gen { common, manifest } => {
            cmd_gen(&common.load()?, manifest.as_deref(), &common.out)
        }
        Command::Contaminate {
            common,
            data,
            replay,
        } => cmd_contaminate(
            &common.load()?,
            data.as_deref(),
            replay.as_deref(),
            &common.out,
        ),
        Command::Train {
            common,
            data,
            contamination,
        } => cmd_train(
            &common.load()?,
            data.as_deref(),
            contamination.as_deref(),
            &common.out,
        )
        .map(|_| ()),
        Command::Eval {
            common,
            data,
            checkpoints,
        } => cmd_eval(&common.load()?, data.as_deref(), checkpoints, &common.out).map(|_| ()),
        Command::Report {
            common,
            inputs,
            baseline,
        } => {
            common.load()?;
            cmd_report(inputs, baseline.as_deref(), &common.out).map(|_| ())
        }
        Command::Grid { common, data } => {
            cmd_grid(&common.load()?, data.as_deref(), &common.out).map(|_| ())
        }
        Command::Sweep { common, data } => cmd_sweep(&common.load()?, data.as_deref(), &common.out),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Generator manifest written next to the CSVs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenManifest {
    pub seed: u64,
    pub generator: SyntheticSpec,
    pub files: Vec<String>,
}

pub fn cmd_gen(cfg: &RunConfig, manifest: Option<&Path>, out: &Path) -> Result<()> {
    let spec = match manifest {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str::<GenManifest>(&text)?.generator
        }
        None => cfg.dataset.synthetic.clone(),
    };
    spec.validate()?;
    create_dir(out)?;
    let mut files = Vec::new();
    for (frame, _) in gen_synthetic_with(&spec)? {
        let name = format!("{}.csv", frame.series_id);
        write_wide_csv(&frame, &out.join(&name))?;
        files.push(name);
    }
    let doc = GenManifest {
        seed: spec.seed,
        generator: spec,
        files,
    };
    write_file(
        &out.join(GEN_MANIFEST_FILE),
        serde_json::to_string_pretty(&doc)? + "\n",
    )
}

/// Load and window the dataset; the flag is true for generated data.
pub fn load_prepared(cfg: &RunConfig, data: Option<&Path>) -> Result<(PreparedDataset, bool)> {
    let synthetic = data.is_none() && cfg.dataset.path.is_none();
    let frames = cfg.load_frames(data)?;
    Ok((prepare(&frames, &cfg.dataset.split)?, synthetic))
}

fn windows_csv(pairs: &[WindowPair]) -> String {
    let mut out = String::from("series_id,start,part,step,channel,value\n");
    for p in pairs {
        for (part, t) in [("x", &p.x), ("y", &p.y)] {
            let c = t.shape()[1];
            for (k, v) in t.data().iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{part},{},{},{v}",
                    p.origin.series_id,
                    p.origin.start,
                    k / c,
                    k % c
                );
            }
        }
    }
    out
}

fn copy_inputs(cfg: &RunConfig, data: Option<&Path>, dest: &Path) -> Result<()> {
    create_dir(dest)?;
    match data.or(cfg.dataset.path.as_deref()) {
        Some(src) if src.is_dir() => {
            let mut files: Vec<PathBuf> = fs::read_dir(src)
                .map_err(|e| Error::io(src, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e == "csv"))
                .collect();
            files.sort();
            for f in files {
                let name = f.file_name().expect("listed file has a name");
                fs::copy(&f, dest.join(name)).map_err(|e| Error::io(&f, e))?;
            }
        }
        Some(src) => {
            let name = src
                .file_name()
                .ok_or_else(|| Error::Validation(format!("{} is not a file", src.display())))?;
            fs::copy(src, dest.join(name)).map_err(|e| Error::io(src, e))?;
        }
        None => {
            for (frame, _) in gen_synthetic_with(&cfg.dataset.synthetic)? {
                write_wide_csv(&frame, &dest.join(format!("{}.csv", frame.series_id)))?;
            }
        }
    }
    Ok(())
}

/// Writes `data/` (the inputs, unchanged), the manifest, and the corrupted
/// training windows in normalized units.
pub fn cmd_contaminate(
    cfg: &RunConfig,
    data: Option<&Path>,
    replay: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let (ds, _) = load_prepared(cfg, data)?;
    let (pairs, manifest) = match replay {
        Some(p) => {
            let manifest = read_contamination(p)?;
            (replay_manifest(&ds.splits.train, &manifest)?, manifest)
        }
        None => {
            let c = cfg.augment.contamination.as_ref().ok_or_else(|| {
                Error::Validation(
                    "contaminate needs [augment.contamination] with regime and fraction".into(),
                )
            })?;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                cfg.train.seed,
                &format!("contaminate:{}", c.label()),
            ));
            contaminate_training_set(&ds.splits.train, c, &cfg.augment.config(), &mut rng)?
        }
    };
    create_dir(out)?;
    copy_inputs(cfg, data, &out.join("data"))?;
    write_file(
        &out.join(CONTAMINATION_FILE),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    write_file(&out.join(TRAIN_WINDOWS_FILE), windows_csv(&pairs))
}

fn read_contamination(path: &Path) -> Result<ContaminationManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: ContaminationManifest = serde_json::from_str(&text)?;
    manifest.config.validate()?;
    Ok(manifest)
}

/// Train with `train.*` settings. The log is written even when training aborts.
pub fn cmd_train(
    cfg: &RunConfig,
    data: Option<&Path>,
    contamination: Option<&Path>,
    out: &Path,
) -> Result<TrainLog> {
    let (ds, _) = load_prepared(cfg, data)?;
    let train = match contamination {
        Some(p) => replay_manifest(&ds.splits.train, &read_contamination(p)?)?,
        None => ds.splits.train.clone(),
    };
    let spec = &ds.spec;
    let model = cfg
        .model
        .config(spec.window, spec.horizon, ds.channels(), cfg.train.seed);
    let val = if cfg.train.early_stopping {
        &ds.splits.val[..]
    } else {
        &[]
    };
    create_dir(out)?;
    let mut log = TrainLog::default();
    let outcome = train_model_logged(
        &train,
        val,
        &model,
        &cfg.train,
        &cfg.augment.config(),
        &mut log,
    );
    log.write_csv(&out.join(TRAIN_LOG_FILE))?;
    save_checkpoint(&outcome?, &out.join(CHECKPOINT_FILE))?;
    Ok(log)
}

fn parse_checkpoint_arg(arg: &str) -> (String, PathBuf) {
    match arg.split_once('=') {
        Some((name, path)) if !name.is_empty() => (name.to_string(), PathBuf::from(path)),
        _ => {
            let p = PathBuf::from(arg);
            let name = p
                .parent()
                .and_then(|d| d.file_name())
                .or_else(|| p.file_stem())
                .map_or_else(|| arg.to_string(), |s| s.to_string_lossy().into_owned());
            (name, p)
        }
    }
}

pub fn cmd_eval(
    cfg: &RunConfig,
    data: Option<&Path>,
    checkpoints: &[String],
    out: &Path,
) -> Result<ScenarioReport> {
    let mut models = Vec::new();
    for arg in checkpoints {
        let (name, path) = parse_checkpoint_arg(arg);
        if models.iter().any(|(n, _)| *n == name) {
            return Err(Error::Validation(format!(
                "duplicate checkpoint name `{name}`"
            )));
        }
        let params = load_checkpoint(&path).map_err(|e| match e {
            Error::Io { .. } => e,
            other => Error::Checkpoint(format!("{}: {other}", path.display())),
        })?;
        models.push((name, params));
    }
    let (ds, synthetic) = load_prepared(cfg, data)?;
    for (name, p) in &models {
        let c = &p.config;
        if (c.input_len, c.horizon, c.channels) != (ds.spec.window, ds.spec.horizon, ds.channels())
        {
            return Err(Error::Validation(format!(
                "checkpoint {name} expects L={}, H={}, C={} but the dataset has L={}, H={}, C={}",
                c.input_len,
                c.horizon,
                c.channels,
                ds.spec.window,
                ds.spec.horizon,
                ds.channels()
            )));
        }
    }
    let report = evaluate_models(
        &ds,
        &models,
        &cfg.eval.conditions,
        &cfg.eval.seeds,
        &cfg.augment.config(),
        cfg.metric_space(synthetic),
    )?;
    report.write_all(out, "report")?;
    Ok(report)
}

pub fn cmd_report(
    inputs: &[PathBuf],
    baseline: Option<&str>,
    out: &Path,
) -> Result<ScenarioReport> {
    let mut cells = Vec::new();
    for p in inputs {
        let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        cells.extend(ScenarioReport::cells_from_csv(&text).map_err(|e| match e {
            Error::Parse { line, msg } => Error::Parse {
                line,
                msg: format!("{}: {msg}", p.display()),
            },
            other => other,
        })?);
    }
    let baseline = match baseline {
        Some(b) => b.to_string(),
        None => cells
            .first()
            .map(|c| c.variant.clone())
            .ok_or_else(|| Error::Data("report inputs contain no rows".into()))?,
    };
    let report = ScenarioReport::from_cells(cells, &baseline, 0);
    report.write_all(out, "report")?;
    Ok(report)
}

pub fn cmd_grid(cfg: &RunConfig, data: Option<&Path>, out: &Path) -> Result<ScenarioReport> {
    let (ds, synthetic) = load_prepared(cfg, data)?;
    let report = run_scenario_grid(
        &ds,
        &cfg.scenarios(),
        &cfg.eval.variants,
        &cfg.grid_settings(synthetic),
    )?;
    report.write_all(out, "grid")?;
    Ok(report)
}

pub fn cmd_sweep(cfg: &RunConfig, data: Option<&Path>, out: &Path) -> Result<()> {
    let (ds, synthetic) = load_prepared(cfg, data)?;
    let rows = lambda_sweep(
        &ds,
        &cfg.eval.sweep_lambdas,
        &cfg.eval.sweep_conditions,
        &cfg.eval.seeds,
        &cfg.grid_settings(synthetic),
    )?;
    create_dir(out)?;
    write_file(&out.join("sweep.csv"), sweep_csv(&rows))
}
