//! The `tvfbe` command-line front end.
//!
//! ```text
//! tvfbe run    --config <file> --out <dir> [--P k --C k --Ts s --seed n --solver qn-ls|qn|grad --alpha a]
//! tvfbe sweep  --config <file> --axis P=0,1,3,5,10 --out <dir> [overrides]
//! tvfbe bounds --m f --L f --gamma f --C0 f --C1 f --C2 f --C3 f --P k --C k --tau f --Ts f [--out dir]
//! ```
//!
//! Config files are JSON objects with the keys of [`ConfigFile`]. Exit codes
//! are [`EXIT_OK`], [`EXIT_RUNTIME`] and [`EXIT_INVALID`].

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{format_value, second_order_bounds, BoundsInputs, BoundsReport};
use crate::benchmark::{
    prepare, run_prepared, ExperimentConfig, ExperimentError, ExperimentReport, SignalSpec, Summary,
};
use crate::error::Error;
use crate::prediction_correction::{PcConfig, TrajectoryRecord};
use crate::solvers::Method;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_INVALID: i32 = 2;

pub const TRAJECTORY_HEADER: [&str; 9] = [
    "k",
    "t",
    "E_r",
    "err_norm",
    "resid_pred",
    "resid_corr",
    "matvec_pred",
    "matvec_corr",
    "matvec_oracle",
];

#[derive(Debug, Parser)]
#[command(
    name = "tvfbe",
    version,
    about = "Prediction-correction tracking on the forward-backward envelope"
)]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one tracking experiment.
    Run(RunArgs),
    /// Run one experiment per value of a parameter axis.
    Sweep(SweepArgs),
    /// Evaluate the convergence constants and sampling-period bounds.
    Bounds(BoundsArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Prediction steps P.
    #[arg(long = "P")]
    pub prediction_steps: Option<usize>,
    /// Correction steps C.
    #[arg(long = "C")]
    pub correction_steps: Option<usize>,
    /// Sampling period T_s.
    #[arg(long = "Ts")]
    pub sampling_period: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Inner solver for both phases.
    #[arg(long)]
    pub solver: Option<Method>,
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// `NAME=v1,v2,...` with NAME one of P, C, Ts, seed, solver, alpha.
    #[arg(long)]
    pub axis: String,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[arg(long)]
    pub m: f64,
    #[arg(long = "L")]
    pub lipschitz: f64,
    #[arg(long)]
    pub gamma: f64,
    #[arg(long = "C0")]
    pub c0: f64,
    #[arg(long = "C1")]
    pub c1: f64,
    #[arg(long = "C2")]
    pub c2: f64,
    #[arg(long = "C3")]
    pub c3: f64,
    #[arg(long = "P")]
    pub prediction_steps: u32,
    #[arg(long = "C")]
    pub correction_steps: u32,
    #[arg(long)]
    pub tau: f64,
    #[arg(long = "Ts")]
    pub sampling_period: f64,
    /// Directory for `bounds.json`; defaults to the working directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// On-disk experiment configuration. Every key listed in
/// [`ConfigFile::REQUIRED`] must be present; the rest fall back to the
/// defaults of [`ExperimentConfig`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub rows: Option<usize>,
    pub cols: Option<usize>,
    pub alpha: Option<f64>,
    pub noise_variance: Option<f64>,
    pub active: Option<usize>,
    pub omega: Option<f64>,
    pub amplitude_min: Option<f64>,
    pub amplitude_max: Option<f64>,
    pub seed: Option<u64>,
    pub sampling_period: Option<f64>,
    pub prediction_steps: Option<usize>,
    pub correction_steps: Option<usize>,
    pub gamma_factor: Option<f64>,
    pub steps: Option<usize>,
    pub predictor: Option<Method>,
    pub corrector: Option<Method>,
    pub inner_tolerance: Option<f64>,
    pub oracle_tolerance: Option<f64>,
    pub oracle_iter_cap: Option<usize>,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("missing required fields: {}", .0.join(", "))]
    Missing(Vec<&'static str>),
    #[error("invalid config: {0}")]
    Invalid(#[from] Error),
    #[error("invalid sweep axis: {0}")]
    Axis(String),
}

impl ConfigFile {
    pub const REQUIRED: [&'static str; 12] = [
        "rows",
        "cols",
        "alpha",
        "noise_variance",
        "active",
        "omega",
        "seed",
        "sampling_period",
        "prediction_steps",
        "correction_steps",
        "gamma_factor",
        "steps",
    ];

    /// Parses JSON text; blank text is an empty object.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        if text.trim().is_empty() {
            return Ok(Self::default());
        }
        Ok(serde_json::from_str(text)?)
    }

    pub fn missing(&self) -> Vec<&'static str> {
        let present = [
            self.rows.is_some(),
            self.cols.is_some(),
            self.alpha.is_some(),
            self.noise_variance.is_some(),
            self.active.is_some(),
            self.omega.is_some(),
            self.seed.is_some(),
            self.sampling_period.is_some(),
            self.prediction_steps.is_some(),
            self.correction_steps.is_some(),
            self.gamma_factor.is_some(),
            self.steps.is_some(),
        ];
        Self::REQUIRED
            .iter()
            .zip(present)
            .filter(|(_, p)| !p)
            .map(|(name, _)| *name)
            .collect()
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.prediction_steps {
            self.prediction_steps = Some(v);
        }
        if let Some(v) = o.correction_steps {
            self.correction_steps = Some(v);
        }
        if let Some(v) = o.sampling_period {
            self.sampling_period = Some(v);
        }
        if let Some(v) = o.seed {
            self.seed = Some(v);
        }
        if let Some(v) = o.solver {
            self.predictor = Some(v);
            self.corrector = Some(v);
        }
        if let Some(v) = o.alpha {
            self.alpha = Some(v);
        }
    }

    /// Checks presence of every required key, then every value constraint.
    pub fn resolve(&self) -> Result<ExperimentConfig, ConfigError> {
        let missing = self.missing();
        if !missing.is_empty() {
            return Err(ConfigError::Missing(missing));
        }
        let signal_defaults = SignalSpec::default();
        let pc_defaults = PcConfig::default();
        let cfg = ExperimentConfig {
            rows: self.rows.unwrap_or_default(),
            cols: self.cols.unwrap_or_default(),
            alpha: self.alpha.unwrap_or_default(),
            noise_variance: self.noise_variance.unwrap_or_default(),
            signal: SignalSpec {
                active: self.active.unwrap_or_default(),
                omega: self.omega.unwrap_or_default(),
                amplitude_min: self.amplitude_min.unwrap_or(signal_defaults.amplitude_min),
                amplitude_max: self.amplitude_max.unwrap_or(signal_defaults.amplitude_max),
                seed: self.seed.unwrap_or_default(),
            },
            pc: PcConfig {
                sampling_period: self.sampling_period.unwrap_or_default(),
                prediction_steps: self.prediction_steps.unwrap_or_default(),
                correction_steps: self.correction_steps.unwrap_or_default(),
                gamma_factor: self.gamma_factor.unwrap_or_default(),
                predictor: self.predictor.unwrap_or(pc_defaults.predictor),
                corrector: self.corrector.unwrap_or(pc_defaults.corrector),
                steps: self.steps.unwrap_or_default(),
                inner_tolerance: self.inner_tolerance.unwrap_or(pc_defaults.inner_tolerance),
                oracle_tolerance: self
                    .oracle_tolerance
                    .unwrap_or(pc_defaults.oracle_tolerance),
                oracle_iter_cap: self.oracle_iter_cap.unwrap_or(pc_defaults.oracle_iter_cap),
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl From<&ExperimentConfig> for ConfigFile {
    fn from(cfg: &ExperimentConfig) -> Self {
        Self {
            rows: Some(cfg.rows),
            cols: Some(cfg.cols),
            alpha: Some(cfg.alpha),
            noise_variance: Some(cfg.noise_variance),
            active: Some(cfg.signal.active),
            omega: Some(cfg.signal.omega),
            amplitude_min: Some(cfg.signal.amplitude_min),
            amplitude_max: Some(cfg.signal.amplitude_max),
            seed: Some(cfg.signal.seed),
            sampling_period: Some(cfg.pc.sampling_period),
            prediction_steps: Some(cfg.pc.prediction_steps),
            correction_steps: Some(cfg.pc.correction_steps),
            gamma_factor: Some(cfg.pc.gamma_factor),
            steps: Some(cfg.pc.steps),
            predictor: Some(cfg.pc.predictor),
            corrector: Some(cfg.pc.corrector),
            inner_tolerance: Some(cfg.pc.inner_tolerance),
            oracle_tolerance: Some(cfg.pc.oracle_tolerance),
            oracle_iter_cap: Some(cfg.pc.oracle_iter_cap),
        }
    }
}

fn read_config_file(path: &Path) -> Result<ConfigFile, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ConfigFile::parse(&text)
}

/// Reads and validates an experiment configuration.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    read_config_file(path)?.resolve()
}

/// One swept parameter and its values, in command-line order.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepAxis {
    pub name: String,
    pub values: Vec<String>,
}

impl SweepAxis {
    pub fn parse(spec: &str) -> Result<Self, ConfigError> {
        let (name, list) = spec
            .split_once('=')
            .ok_or_else(|| ConfigError::Axis(format!("expected NAME=v1,v2,..., got `{spec}`")))?;
        let name = name.trim().to_string();
        let values: Vec<String> = list
            .split(',')
            .map(|v| v.trim().to_string())
            .filter(|v| !v.is_empty())
            .collect();
        if values.is_empty() {
            return Err(ConfigError::Axis(format!("empty value list for `{name}`")));
        }
        let axis = Self { name, values };
        for v in &axis.values {
            axis.overrides(v)?;
        }
        Ok(axis)
    }

    /// Override flags selecting the cell with value `v`.
    pub fn overrides(&self, v: &str) -> Result<Overrides, ConfigError> {
        fn value<T: std::str::FromStr>(name: &str, v: &str) -> Result<T, ConfigError>
        where
            T::Err: std::fmt::Display,
        {
            v.parse::<T>()
                .map_err(|e| ConfigError::Axis(format!("bad value `{v}` for {name}: {e}")))
        }
        let mut o = Overrides::default();
        match self.name.as_str() {
            "P" => o.prediction_steps = Some(value(&self.name, v)?),
            "C" => o.correction_steps = Some(value(&self.name, v)?),
            "Ts" => o.sampling_period = Some(value(&self.name, v)?),
            "seed" => o.seed = Some(value(&self.name, v)?),
            "solver" => o.solver = Some(value(&self.name, v)?),
            "alpha" => o.alpha = Some(value(&self.name, v)?),
            other => {
                return Err(ConfigError::Axis(format!(
                    "unknown axis `{other}` (expected P, C, Ts, seed, solver or alpha)"
                )))
            }
        }
        Ok(o)
    }
}

/// Parses `args` (program name first) and executes the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                EXIT_INVALID
            } else {
                EXIT_OK
            };
        }
    };
    init_logging(cli.verbose);
    match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Bounds(a) => cmd_bounds(a),
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .try_init();
}

fn invalid(err: impl std::fmt::Display) -> i32 {
    eprintln!("error: {err}");
    EXIT_INVALID
}

fn runtime(err: impl std::fmt::Display) -> i32 {
    eprintln!("error: {err}");
    EXIT_RUNTIME
}

fn load(path: &Path, overrides: &Overrides) -> Result<ConfigFile, ConfigError> {
    let mut file = read_config_file(path)?;
    file.apply(overrides);
    Ok(file)
}

pub fn cmd_run(args: &RunArgs) -> i32 {
    let cfg = match load(&args.config, &args.overrides).and_then(|f| f.resolve()) {
        Ok(cfg) => cfg,
        Err(e) => return invalid(e),
    };
    let problem = match prepare(&cfg) {
        Ok((_, problem)) => problem,
        Err(e) => return invalid(e),
    };
    if let Err(e) = write_config(&args.out, &cfg) {
        return runtime(e);
    }
    log::info!("running {} steps", cfg.pc.steps);
    let (report, failure) = match run_prepared(&cfg, &problem) {
        Ok(report) => (report, None),
        Err(ExperimentError::Aborted { source, partial }) => (*partial, Some(source.to_string())),
        Err(e) => return runtime(e),
    };
    let written =
        write_trajectory(&args.out.join("trajectory.csv"), &report.records).and_then(|_| {
            write_summary(
                &args.out.join("summary.txt"),
                &report.summary,
                failure.as_deref(),
            )
        });
    if let Err(e) = written {
        return runtime(e);
    }
    match failure {
        Some(msg) => runtime(msg),
        None => EXIT_OK,
    }
}

struct Cell {
    value: String,
    cfg: ExperimentConfig,
}

pub fn cmd_sweep(args: &SweepArgs) -> i32 {
    let axis = match SweepAxis::parse(&args.axis) {
        Ok(axis) => axis,
        Err(e) => return invalid(e),
    };
    let base = match load(&args.config, &args.overrides) {
        Ok(base) => base,
        Err(e) => return invalid(e),
    };
    let mut cells = Vec::with_capacity(axis.values.len());
    for value in &axis.values {
        let built = axis.overrides(value).and_then(|o| {
            let mut file = base.clone();
            file.apply(&o);
            let cfg = file.resolve()?;
            prepare(&cfg)?;
            Ok(cfg)
        });
        match built {
            Ok(cfg) => cells.push(Cell {
                value: value.clone(),
                cfg,
            }),
            Err(e) => return invalid(format!("{}={value}: {e}", axis.name)),
        }
    }
    let echo = match base.resolve() {
        Ok(cfg) => cfg,
        Err(_) => cells[0].cfg.clone(),
    };
    if let Err(e) = write_config(&args.out, &echo) {
        return runtime(e);
    }
    let outcomes: Vec<Result<Summary, String>> = cells
        .par_iter()
        .map(|cell| run_cell(&args.out, &axis.name, cell))
        .collect();
    let mut failed = false;
    let mut rows = vec![vec![
        "axis".to_string(),
        "value".into(),
        "steps".into(),
        "mean_E_r".into(),
        "max_E_r".into(),
        "matvec_pred".into(),
        "matvec_corr".into(),
        "total_matvecs".into(),
        "status".into(),
    ]];
    for (cell, outcome) in cells.iter().zip(&outcomes) {
        let (summary, status) = match outcome {
            Ok(s) => (Some(s), "ok".to_string()),
            Err(msg) => {
                failed = true;
                log::warn!("{}={}: {msg}", axis.name, cell.value);
                (None, msg.clone())
            }
        };
        let num = |f: fn(&Summary) -> String| summary.map(f).unwrap_or_default();
        rows.push(vec![
            axis.name.clone(),
            cell.value.clone(),
            num(|s| s.steps.to_string()),
            num(|s| format_float(s.mean_error)),
            num(|s| format_float(s.max_error)),
            num(|s| s.matvec_prediction.to_string()),
            num(|s| s.matvec_correction.to_string()),
            num(|s| s.total_matvecs().to_string()),
            status,
        ]);
    }
    if let Err(e) = write_csv(&args.out.join("sweep_summary.csv"), &rows) {
        return runtime(e);
    }
    if failed {
        EXIT_RUNTIME
    } else {
        EXIT_OK
    }
}

/// File name of the trajectory written for one sweep cell.
pub fn cell_file_name(axis: &str, value: &str) -> String {
    let safe: String = value
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("trajectory_{axis}_{safe}.csv")
}

fn run_cell(out: &Path, axis: &str, cell: &Cell) -> Result<Summary, String> {
    let (report, failure): (ExperimentReport, Option<String>) = match prepare(&cell.cfg)
        .map_err(ExperimentError::from)
        .and_then(|(_, problem)| run_prepared(&cell.cfg, &problem))
    {
        Ok(report) => (report, None),
        Err(ExperimentError::Aborted { source, partial }) => (*partial, Some(source.to_string())),
        Err(e) => return Err(e.to_string()),
    };
    write_trajectory(
        &out.join(cell_file_name(axis, &cell.value)),
        &report.records,
    )
    .map_err(|e| e.to_string())?;
    match failure {
        Some(msg) => Err(msg),
        None => Ok(report.summary),
    }
}

pub fn cmd_bounds(args: &BoundsArgs) -> i32 {
    let inputs = BoundsInputs {
        m: args.m,
        lipschitz: args.lipschitz,
        gamma: args.gamma,
        c0: args.c0,
        c1: args.c1,
        c2: args.c2,
        c3: args.c3,
        prediction_steps: args.prediction_steps,
        correction_steps: args.correction_steps,
        tau: args.tau,
        sampling_period: args.sampling_period,
    };
    let report = match second_order_bounds(&inputs) {
        Ok(r) => r,
        Err(e) => return invalid(e),
    };
    print!("{}", format_bounds(&report));
    let dir = args.out.clone().unwrap_or_else(|| PathBuf::from("."));
    let written = fs::create_dir_all(&dir).and_then(|_| {
        let json = serde_json::to_string_pretty(&report).map_err(io::Error::other)?;
        fs::write(dir.join("bounds.json"), json + "\n")
    });
    match written {
        Ok(()) => EXIT_OK,
        Err(e) => runtime(e),
    }
}

/// Aligned `key value` lines.
pub fn format_bounds(r: &BoundsReport) -> String {
    let f = format_value;
    let rows: Vec<(&str, String)> = vec![
        ("zeta", f(r.zeta)),
        ("kappa", f(r.kappa)),
        ("tau", f(r.tau)),
        ("first_order.a0", f(r.first_order.a0)),
        ("first_order.a1", f(r.first_order.a1)),
        ("first_order.A0", f(r.first_order.big_a0)),
        ("first_order.A1", f(r.first_order.big_a1)),
        ("linear_bound_holds", r.linear_bound_holds.to_string()),
        (
            "asymptotic_bound_linear",
            r.asymptotic_bound_linear.map_or_else(|| "none".into(), f),
        ),
        ("second_order.a0", f(r.second_order.a0)),
        ("second_order.a1", f(r.second_order.a1)),
        ("second_order.a2", f(r.second_order.a2)),
        ("second_order.A0", f(r.second_order.big_a0)),
        ("second_order.A1", f(r.second_order.big_a1)),
        ("second_order.A2", f(r.second_order.big_a2)),
        ("Ts_bar", f(r.ts_bar)),
        ("R_bar", f(r.r_bar)),
        ("R_bar_recursion", f(r.r_bar_recursion)),
        ("R_bar_consistent", r.r_bar_consistent.to_string()),
    ];
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    rows.iter()
        .map(|(k, v)| format!("{k:<width$}  {v}\n"))
        .collect()
}

fn write_config(dir: &Path, cfg: &ExperimentConfig) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let json = serde_json::to_string_pretty(&ConfigFile::from(cfg)).map_err(io::Error::other)?;
    fs::write(dir.join("config.json"), json + "\n")
}

/// Shortest round-trip representation.
fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:e}")
    } else {
        format_value(v)
    }
}

fn write_csv(path: &Path, rows: &[Vec<String>]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()
}

pub fn write_trajectory(path: &Path, records: &[TrajectoryRecord]) -> io::Result<()> {
    let opt = |v: Option<f64>| v.map(format_float).unwrap_or_default();
    let mut rows = vec![TRAJECTORY_HEADER
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()];
    rows.extend(records.iter().map(|r| {
        vec![
            r.k.to_string(),
            format!("{}", r.t),
            opt(r.normalized_error),
            opt(r.error_norm),
            format_float(r.residual_prediction),
            format_float(r.residual_correction),
            r.matvec_prediction.to_string(),
            r.matvec_correction.to_string(),
            r.matvec_oracle.to_string(),
        ]
    }));
    write_csv(path, &rows)
}

pub fn write_summary(path: &Path, s: &Summary, failure: Option<&str>) -> io::Result<()> {
    let rows = [
        ("steps", s.steps.to_string()),
        ("window_start", s.window_start.to_string()),
        ("mean_E_r", format_float(s.mean_error)),
        ("max_E_r", format_float(s.max_error)),
        ("matvec_pred", s.matvec_prediction.to_string()),
        ("matvec_corr", s.matvec_correction.to_string()),
        ("matvec_oracle", s.matvec_oracle.to_string()),
        (
            "matvec_pred_per_step",
            format_float(s.mean_matvec_prediction),
        ),
        (
            "matvec_corr_per_step",
            format_float(s.mean_matvec_correction),
        ),
        (
            "status",
            failure.map_or_else(|| "ok".to_string(), |m| format!("aborted: {m}")),
        ),
    ];
    let mut f = fs::File::create(path)?;
    for (k, v) in rows {
        writeln!(f, "{k:<22}{v}")?;
    }
    Ok(())
}
