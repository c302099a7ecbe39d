//! `qjc` command-line driver: builds a [`RunConfig`] from flags and/or a JSON
//! file, dispatches to the simulation engines and writes CSV/JSON results
//! with a reproducibility sidecar.
//!
//! Exit codes: `0` success, `1` simulation failure, `2` configuration error.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use qjc_core::experiments::{contour_sweep, preset_table, run_experiment, ComparisonReport, Ratio};
use qjc_core::mcwf::ProtocolKind;
use thiserror::Error;

pub use config::{load_config, Command, Format, Job, Rates, RunConfig};
pub use output::{dump_result, render, sidecar_path, RunMetadata, RunResult};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("serialization failed: {0}")]
    Serialize(String),

    #[error(transparent)]
    Runtime(qjc_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "qjc", version, about = "Qubit + mesoscopic cavity field: quantum-jump, master-equation and analytic signals")]
struct Cli {
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true, env = "QJC_THREADS")]
    threads: Option<usize>,

    /// JSON run configuration (or a `.meta.json` sidecar); flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Option<Sub>,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Free evolution: trajectories, analytic envelope, optional oracle.
    Free(RunArgs),
    /// Echo: σ^z π-pulse at --tpi, induced revival at 2·tpi.
    Echo(RunArgs),
    /// Analytic contrast grid C(t, n̄).
    Contour(RunArgs),
    /// Free evolution with the master-equation oracle and z-scores.
    Compare(RunArgs),
    /// Print the parameter presets.
    Presets(RunArgs),
}

#[derive(Debug, Clone, Default, Args)]
struct RunArgs {
    #[arg(long)]
    preset: Option<String>,
    /// Explicit g/κ (number or `inf`), instead of --preset.
    #[arg(long, value_parser = parse_ratio)]
    g_over_kappa: Option<Ratio>,
    #[arg(long, value_parser = parse_ratio)]
    g_over_gamma1: Option<Ratio>,
    #[arg(long, value_parser = parse_ratio)]
    g_over_gamma_phi: Option<Ratio>,
    #[arg(long)]
    nbar: Option<f64>,
    #[arg(long)]
    ntraj: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// End time in units of t_R.
    #[arg(long)]
    tend: Option<f64>,
    /// Echo pulse time in units of t_R.
    #[arg(long)]
    tpi: Option<f64>,
    /// Output file; stdout (and no sidecar) when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    #[arg(long)]
    with_oracle: bool,
    #[arg(long)]
    nmax: Option<usize>,
    #[arg(long, value_enum)]
    protocol: Option<ProtocolArg>,
    #[arg(long)]
    nbar_min: Option<f64>,
    #[arg(long)]
    nbar_max: Option<f64>,
    #[arg(long)]
    nbar_step: Option<f64>,
    /// Output sampling interval in units of t_R.
    #[arg(long)]
    sample_dt: Option<f64>,
    /// Integration step in units of t_R.
    #[arg(long)]
    dt: Option<f64>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum ProtocolArg {
    Free,
    Echo,
}

fn parse_ratio(s: &str) -> Result<Ratio, String> {
    if s.eq_ignore_ascii_case("inf") {
        return Ok(Ratio::INFINITE);
    }
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    Ratio::new(v).map_err(|e| e.to_string())
}

impl RunArgs {
    fn into_config(self, command: Command) -> Result<RunConfig, CliError> {
        let rates = match (self.g_over_kappa, self.g_over_gamma1, self.g_over_gamma_phi) {
            (None, None, None) => None,
            (Some(k), Some(g1), Some(gp)) => Some(Rates { g_over_kappa: k, g_over_gamma1: g1, g_over_gamma_phi: gp }),
            _ => {
                return Err(CliError::Config {
                    field: "rates".into(),
                    message: "--g-over-kappa, --g-over-gamma1 and --g-over-gamma-phi must be given together".into(),
                })
            }
        };
        Ok(RunConfig {
            command,
            preset: self.preset,
            rates,
            nbar: self.nbar,
            n_traj: self.ntraj,
            seed: self.seed,
            t_end: self.tend,
            t_pi: self.tpi,
            output: self.out,
            format: self.format.map(|f| match f {
                FormatArg::Csv => Format::Csv,
                FormatArg::Json => Format::Json,
            }),
            with_oracle: self.with_oracle.then_some(true),
            n_max: self.nmax,
            protocol: self.protocol.map(|p| match p {
                ProtocolArg::Free => ProtocolKind::Free,
                ProtocolArg::Echo => ProtocolKind::Echo,
            }),
            nbar_min: self.nbar_min,
            nbar_max: self.nbar_max,
            nbar_step: self.nbar_step,
            sample_dt: self.sample_dt,
            dt: self.dt,
            g: None,
            initial_qubit: None,
        })
    }
}

fn runtime(e: qjc_core::Error) -> CliError {
    config::config_field_error(e)
}

/// Executes a resolved job on the current rayon pool.
pub fn execute(job: &Job) -> Result<RunResult, CliError> {
    match job {
        Job::Presets => Ok(RunResult::Presets(preset_table())),
        Job::Contour { preset, nbars, times_over_tr, protocol } => {
            contour_sweep(preset, nbars, times_over_tr, *protocol).map(RunResult::Contour).map_err(runtime)
        }
        Job::Simulate { experiment, .. } => run_experiment(experiment).map(|r| RunResult::Comparison(Box::new(r))).map_err(runtime),
    }
}

fn summary(command: Command, r: &ComparisonReport) -> String {
    let mut s = format!(
        "{}: preset {} n̄={} n_max={} {} trajectories ({} jumps), revival contrast {:.4} (analytic {:.4})",
        command.name(),
        r.config.preset.name,
        r.config.nbar,
        r.n_max,
        r.config.n_traj,
        r.monte_carlo.total_jumps(),
        r.metrics.revival_contrast_mc,
        r.metrics.revival_contrast_analytic,
    );
    if let Some(frac) = r.metrics.oracle_agreement {
        s.push_str(&format!(", {:.2}% of points within 5σ of the master equation", 100.0 * frac));
    }
    s
}

fn build_config(cli: Cli) -> Result<RunConfig, CliError> {
    let base = cli.config.as_deref().map(load_config).transpose()?;
    let flags = match cli.command {
        Some(sub) => {
            let (command, args) = match sub {
                Sub::Free(a) => (Command::Free, a),
                Sub::Echo(a) => (Command::Echo, a),
                Sub::Contour(a) => (Command::Contour, a),
                Sub::Compare(a) => (Command::Compare, a),
                Sub::Presets(a) => (Command::Presets, a),
            };
            Some(args.into_config(command)?)
        }
        None => None,
    };
    match (base, flags) {
        (Some(b), Some(f)) => Ok(b.overlay(f)),
        (Some(b), None) => Ok(b),
        (None, Some(f)) => Ok(f),
        (None, None) => Err(CliError::Config { field: "command".into(), message: "no subcommand given (free, echo, contour, compare, presets)".into() }),
    }
}

fn run_inner(cli: Cli) -> Result<(), CliError> {
    let threads = cli.threads;
    let raw = build_config(cli)?;
    let (resolved, job) = raw.resolve()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads.filter(|&n| n > 0) {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Config { field: "threads".into(), message: e.to_string() })?;
    let result = pool.install(|| execute(&job))?;

    // Without an output file or explicit format, presets print as a table.
    if matches!(job, Job::Presets) && resolved.output.is_none() && raw.format.is_none() {
        print!("{}", output::presets_table(&preset_table()));
        return Ok(());
    }
    dump_result(&result, &resolved, resolved.output.as_deref())?;
    if let RunResult::Comparison(r) = &result {
        let Job::Simulate { command, .. } = &job else { unreachable!() };
        eprintln!("{}", summary(*command, r));
    }
    if let Some(path) = &resolved.output {
        eprintln!("wrote {} and {}", path.display(), sidecar_path(path).display());
    }
    Ok(())
}

/// Parses `argv` (including the program name), runs and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run_inner(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Runtime(qjc_core::Error::Trajectory { seed, traj_index, .. }) = &e {
                eprintln!("replay: rerun with --seed {seed}; trajectory {traj_index} is stream {traj_index} of that seed");
            }
            e.exit_code()
        }
    }
}
