//! Command-line front end: `generate`, `train`, `eval` and `ablate`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{Components, ScenarioConfig};
use crate::error::{Error, Result};
use crate::pipeline::{
    build_samples, evaluate, generate_dataset, load_dataset, save_loss_csv, train_model, write_eval_outputs, EvalOutcome,
    Model, Selection, ALL_GROUP, STATIC_GROUP,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;

pub const FRAME_AXIS: [usize; 5] = [1, 2, 3, 4, 5];
pub const INTERVAL_AXIS: [usize; 3] = [1, 2, 3];
pub const NOISE_AXIS: [f64; 5] = [0.0, 0.5, 1.0, 1.25, 2.5];
/// Frames used along the interval axis.
pub const INTERVAL_AXIS_FRAMES: usize = 4;

#[derive(Debug, Parser)]
#[command(name = "tempbev", version, about = "Temporal bird's-eye-view mapping on synthetic scenes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render scenes, labels and masks into a dataset directory.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Fit a model on a generated dataset.
    Train {
        dataset: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Score a trained model on a generated dataset.
    Eval {
        dataset: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Sweep one axis and tabulate IoU per setting.
    Ablate {
        #[arg(long, value_enum)]
        axis: Axis,
        /// Comma-separated values replacing the default grid of the axis.
        #[arg(long)]
        values: Option<String>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    Frames,
    Interval,
    Noise,
    Components,
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub interval: Option<usize>,
    #[arg(long = "noise-std")]
    pub noise_std: Option<f64>,
    #[arg(long)]
    pub components: Option<String>,
    #[arg(long)]
    pub mask: Option<String>,
}

impl Common {
    /// `--seed` goes to whichever stage the command runs.
    fn apply(&self, cfg: &mut ScenarioConfig, seed: impl FnOnce(&mut ScenarioConfig, u64)) -> Result<()> {
        if let Some(s) = self.seed {
            seed(cfg, s);
        }
        if let Some(n) = self.frames {
            cfg.sequence.frames = n;
        }
        if let Some(n) = self.interval {
            cfg.sequence.interval = n;
        }
        if let Some(s) = self.noise_std {
            cfg.eval.noise_std = s;
        }
        if let Some(c) = &self.components {
            cfg.components = Components::parse(c)?;
        }
        if let Some(m) = &self.mask {
            cfg.eval.mask = m.parse()?;
        }
        cfg.validate()
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } | Error::Format { .. } => EXIT_IO,
        Error::Divergence { .. } => EXIT_DIVERGENCE,
        _ => EXIT_USAGE,
    }
}

/// Parses `args` (program name first) and runs the command; returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn base_config(path: Option<&Path>) -> Result<ScenarioConfig> {
    match path {
        Some(p) => ScenarioConfig::load(p),
        None => Ok(ScenarioConfig::default()),
    }
}

/// Dataset scenario with the training-side sections taken from `--config`.
fn dataset_config(stored: ScenarioConfig, path: Option<&Path>) -> Result<ScenarioConfig> {
    let mut cfg = stored;
    if let Some(p) = path {
        let over = ScenarioConfig::load(p)?;
        cfg.train = over.train;
        cfg.components = over.components;
        cfg.eval = over.eval;
        cfg.features = over.features;
    }
    Ok(cfg)
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Generate { common } => {
            let mut cfg = base_config(common.config.as_deref())?;
            common.apply(&mut cfg, |c, s| c.seed = s)?;
            let manifest = generate_dataset(&cfg, &common.out)?;
            println!("wrote {} files to {}", manifest.files.len() + 1, common.out.display());
            Ok(())
        }
        Command::Train { dataset, common } => {
            let (stored, samples) = load_dataset(&dataset)?;
            let mut cfg = dataset_config(stored, common.config.as_deref())?;
            common.apply(&mut cfg, |c, s| c.train.seed = s)?;
            let outcome = train_model(&cfg, &samples)?;
            std::fs::create_dir_all(&common.out).map_err(|e| Error::io(&common.out, e))?;
            outcome.model.save(&common.out.join("model.json"))?;
            save_loss_csv(&common.out.join("loss.csv"), &outcome.history)?;
            let first = outcome.history.first().map(|r| r.total).unwrap_or(f64::NAN);
            let last = outcome.history.last().map(|r| r.total).unwrap_or(f64::NAN);
            println!("loss {first:.5} -> {last:.5} over {} epochs", cfg.train.epochs);
            Ok(())
        }
        Command::Eval { dataset, model, common } => {
            let (stored, samples) = load_dataset(&dataset)?;
            let mut cfg = dataset_config(stored, common.config.as_deref())?;
            common.apply(&mut cfg, |c, s| c.eval.noise_seed = s)?;
            let model = Model::load(&model)?;
            let sel = Selection::evaluation(&cfg, model.components);
            let outcome = evaluate(&model, &cfg, &samples, &sel, cfg.eval.mask)?;
            write_eval_outputs(&outcome, &samples, &cfg, &common.out)?;
            for (name, v) in &outcome.pooled.per_class {
                println!("{name:>12} {v:.4}");
            }
            for (name, v) in &outcome.pooled.group_means {
                println!("{name:>12} {v:.4}");
            }
            Ok(())
        }
        Command::Ablate { axis, values, common } => {
            let mut cfg = base_config(common.config.as_deref())?;
            common.apply(&mut cfg, |c, s| c.seed = s)?;
            let rows = ablate(&cfg, axis, values.as_deref())?;
            std::fs::create_dir_all(&common.out).map_err(|e| Error::io(&common.out, e))?;
            let path = common.out.join("ablation.csv");
            let f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            write_ablation_csv(f, &rows).map_err(|e| match e {
                Error::Format { message, .. } => Error::format(path.display().to_string(), message),
                other => other,
            })?;
            for r in &rows {
                println!("{:>10} {:>14} 4-Mean {:.4} 7-Mean {:.4}", r.axis, r.value, r.static_mean, r.all_mean);
            }
            Ok(())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub axis: String,
    pub value: String,
    /// Per-class IoU averaged over evaluation scenes.
    pub per_class: Vec<(String, f64)>,
    pub static_mean: f64,
    pub all_mean: f64,
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse().map_err(|_| Error::InvalidParameter(format!("bad {what} value {p:?}"))))
        .collect()
}

fn row(axis: Axis, value: String, outcome: &EvalOutcome) -> AblationRow {
    let n = outcome.samples.len().max(1) as f64;
    let per_class = outcome
        .pooled
        .per_class
        .iter()
        .enumerate()
        .map(|(k, (name, _))| {
            let sum: f64 = outcome.samples.iter().map(|s| s.report.per_class[k].1).sum();
            (name.clone(), sum / n)
        })
        .collect();
    AblationRow {
        axis: format!("{axis:?}").to_lowercase(),
        value,
        per_class,
        static_mean: outcome.seed_mean(STATIC_GROUP),
        all_mean: outcome.seed_mean(ALL_GROUP),
    }
}

/// Trains on `scene_count` scenes from `config.seed` and evaluates on as
/// many scenes from the evaluation seed. One model serves the frame,
/// interval and noise axes; each component row gets its own model.
pub fn ablate(config: &ScenarioConfig, axis: Axis, values: Option<&str>) -> Result<Vec<AblationRow>> {
    config.validate()?;
    let eval_seed = config.eval.eval_seed.unwrap_or(config.seed.wrapping_add(1));
    let train_set = build_samples(config, config.seed)?;
    let eval_set = build_samples(config, eval_seed)?;
    let mode = config.eval.mask;
    let mut rows = Vec::new();
    if axis == Axis::Components {
        let grid: Vec<Components> = match values {
            Some(v) => v.split(';').map(Components::parse).collect::<Result<_>>()?,
            None => Components::ROWS.to_vec(),
        };
        for comps in grid {
            let mut cfg = config.clone();
            cfg.components = comps;
            let model = train_model(&cfg, &train_set)?.model;
            let sel = Selection::evaluation(&cfg, comps);
            let out = evaluate(&model, &cfg, &eval_set, &sel, mode)?;
            rows.push(row(axis, comps.label(), &out));
            for s in &eval_set {
                s.clear_frames();
            }
        }
        return Ok(rows);
    }
    let model = train_model(config, &train_set)?.model;
    drop(train_set);
    let base = Selection::evaluation(config, model.components);
    let sels: Vec<(String, Selection)> = match axis {
        Axis::Frames => {
            let grid = values.map(|v| parse_list(v, "frames")).transpose()?.unwrap_or(FRAME_AXIS.to_vec());
            grid.into_iter()
                .map(|n| {
                    if n == 0 {
                        return Err(Error::InvalidParameter("frames must be at least 1".into()));
                    }
                    Ok((n.to_string(), Selection { frames: n, interval: 1, reference_index: n - 1, ..base }))
                })
                .collect::<Result<_>>()?
        }
        Axis::Interval => {
            let grid = values.map(|v| parse_list(v, "interval")).transpose()?.unwrap_or(INTERVAL_AXIS.to_vec());
            let n = INTERVAL_AXIS_FRAMES;
            grid.into_iter()
                .map(|k| {
                    if k == 0 {
                        return Err(Error::InvalidParameter("interval must be at least 1".into()));
                    }
                    Ok((k.to_string(), Selection { frames: n, interval: k, reference_index: n - 1, ..base }))
                })
                .collect::<Result<_>>()?
        }
        Axis::Noise => {
            let grid = values.map(|v| parse_list(v, "noise")).transpose()?.unwrap_or(NOISE_AXIS.to_vec());
            grid.into_iter()
                .map(|s: f64| {
                    if !(s.is_finite() && s >= 0.0) {
                        return Err(Error::InvalidParameter(format!("noise std must be finite and non-negative, got {s}")));
                    }
                    Ok((s.to_string(), Selection { noise_std: s, ..base }))
                })
                .collect::<Result<_>>()?
        }
        Axis::Components => unreachable!(),
    };
    for (label, sel) in sels {
        let sel = if model.components.temporal {
            sel
        } else {
            Selection { frames: 1, reference_index: 0, ..sel }
        };
        let out = evaluate(&model, config, &eval_set, &sel, mode)?;
        rows.push(row(axis, label, &out));
    }
    Ok(rows)
}

pub fn write_ablation_csv<W: std::io::Write>(out: W, rows: &[AblationRow]) -> Result<()> {
    let fail = |e: csv::Error| Error::format("ablation table", e);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["axis".to_string(), "value".to_string()];
    if let Some(r) = rows.first() {
        header.extend(r.per_class.iter().map(|(n, _)| n.clone()));
    }
    header.push(STATIC_GROUP.into());
    header.push(ALL_GROUP.into());
    w.write_record(&header).map_err(fail)?;
    for r in rows {
        let mut rec = vec![r.axis.clone(), r.value.clone()];
        rec.extend(r.per_class.iter().map(|(_, v)| format!("{v:.6}")));
        rec.push(format!("{:.6}", r.static_mean));
        rec.push(format!("{:.6}", r.all_mean));
        w.write_record(&rec).map_err(fail)?;
    }
    w.flush().map_err(|e| Error::format("ablation table", e))
}
