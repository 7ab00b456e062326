//! Command-line front end: `run`, `validate`, `scenarios`.
//!
//! Exit codes: 0 success, 1 a check or audit failed, 2 the command could not
//! run (bad flags, unreadable scenario, I/O, numerical blow-up).

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::engine::{self, EngineError, MetricsLog, ModelKind, RunOutput, Thresholds, Trajectory};
use crate::scenario::{self, Loaded, Overrides, ScenarioError, BUILTINS};

pub const LOG_ENV: &str = "GVF_LOG";

#[derive(Debug, Parser)]
#[command(name = "gvf", version, about = "Distributed guiding-vector-field multi-robot simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a scenario and write trajectory.csv, metrics.csv, summary.json.
    Run(RunArgs),
    /// Audit graph connectivity and curve derivative bounds.
    Validate(ScenarioArgs),
    /// List the builtin scenarios.
    Scenarios,
}

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    /// Builtin scenario name or path to a TOML file.
    #[arg(long)]
    pub scenario: String,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Step size in seconds.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Simulated time in seconds.
    #[arg(long)]
    pub duration: Option<f64>,
}

impl ScenarioArgs {
    fn overrides(&self) -> Overrides {
        Overrides { seed: self.seed, dt: self.dt, duration: self.duration }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Exit non-zero unless the run meets the convergence thresholds.
    #[arg(long)]
    pub check: bool,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("cannot write summary: {0}")]
    Json(#[from] serde_json::Error),
}

/// Parse arguments, run the command, return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn"))
        .format_timestamp(None)
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args, &mut out),
        Command::Validate(args) => cmd_validate(args, &mut out),
        Command::Scenarios => cmd_scenarios(&mut out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            2
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.into(), source }
}

pub fn cmd_scenarios(out: &mut impl Write) -> Result<i32, CliError> {
    for b in BUILTINS {
        writeln!(out, "{:<16} {}", b.name, b.summary).map_err(io_err(Path::new("stdout")))?;
    }
    Ok(0)
}

pub fn cmd_run(args: &RunArgs, out: &mut impl Write) -> Result<i32, CliError> {
    let loaded = scenario::load(&args.scenario.scenario, &args.scenario.overrides())?;
    let s = &loaded.scenario;
    log::info!("running `{}`: {} robots, {} steps", s.name, s.robot_count(), s.steps());
    let output = engine::run(s)?;
    write_outputs(&args.out, &loaded, &output)?;

    let sum = &output.summary;
    let stdout = Path::new("stdout");
    writeln!(out, "scenario             {}", sum.scenario).map_err(io_err(stdout))?;
    writeln!(out, "final_max_phi_norm   {:.6e}", sum.final_max_phi_norm).map_err(io_err(stdout))?;
    writeln!(out, "final_max_coord_err  {:.6e}", sum.final_max_coord_err).map_err(io_err(stdout))?;
    match sum.mean_speed_err {
        Some(v) => writeln!(out, "mean_speed_err       {v:.6e}"),
        None => writeln!(out, "mean_speed_err       n/a (single record)"),
    }
    .map_err(io_err(stdout))?;
    if !args.check {
        return Ok(0);
    }
    let lines = Thresholds::default().check(sum, &s.speeds);
    for l in &lines {
        let verdict = if l.pass { "PASS" } else { "FAIL" };
        writeln!(out, "{verdict} {:<20} {:.3e} < {:.3e}", l.name, l.value, l.limit).map_err(io_err(stdout))?;
    }
    Ok(if lines.iter().all(|l| l.pass) { 0 } else { 1 })
}

pub fn cmd_validate(args: &ScenarioArgs, out: &mut impl Write) -> Result<i32, CliError> {
    let loaded = scenario::load(&args.scenario, &args.overrides())?;
    let report = scenario::audit(&loaded);
    let stdout = Path::new("stdout");
    let verdict = |ok: bool| if ok { "PASS" } else { "FAIL" };
    writeln!(
        out,
        "{} connectivity: {} component(s) over {} robots",
        verdict(report.connected),
        report.components,
        loaded.scenario.robot_count()
    )
    .map_err(io_err(stdout))?;
    for c in &report.curves {
        writeln!(
            out,
            "{} bounded: {} on [{}, {}]: max|d/dw| = {:.4e}, max|d2/dw2| = {:.4e} (bound {})",
            verdict(c.pass),
            c.label,
            c.range.0,
            c.range.1,
            c.bounds.first,
            c.bounds.second,
            report.bound
        )
        .map_err(io_err(stdout))?;
    }
    Ok(if report.pass() { 0 } else { 1 })
}

/// Rewrite `trajectory.csv`, `metrics.csv` and `summary.json` in `dir`.
pub fn write_outputs(dir: &Path, loaded: &Loaded, output: &RunOutput) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join("trajectory.csv");
    let file = File::create(&path).map_err(io_err(&path))?;
    write_trajectory(BufWriter::new(file), &output.trajectory)
        .map_err(|source| CliError::Csv { path: path.clone(), source })?;
    let path = dir.join("metrics.csv");
    let file = File::create(&path).map_err(io_err(&path))?;
    write_metrics(BufWriter::new(file), &output.metrics)
        .map_err(|source| CliError::Csv { path: path.clone(), source })?;
    let path = dir.join("summary.json");
    let mut file = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
    serde_json::to_writer_pretty(&mut file, &output.summary)?;
    writeln!(file).and_then(|_| file.flush()).map_err(io_err(&path))?;
    log::info!("wrote logs for `{}` to {}", loaded.scenario.name, dir.display());
    Ok(())
}

fn num(v: f64) -> String {
    format!("{v}")
}

/// `step,t,robot,x1..xn,theta,w1,w2`; `theta` is empty for integrators.
pub fn write_trajectory<W: Write>(writer: W, traj: &Trajectory) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    let n = traj.n;
    let mut header: Vec<String> = vec!["step".into(), "t".into(), "robot".into()];
    header.extend((1..=n).map(|j| format!("x{j}")));
    header.extend(["theta", "w1", "w2"].map(String::from));
    w.write_record(&header)?;
    for (r, states) in traj.states.iter().enumerate() {
        for (i, s) in states.iter().enumerate() {
            let mut row = vec![traj.steps[r].to_string(), num(traj.times[r]), (i + 1).to_string()];
            row.extend(s[..n].iter().map(|&v| num(v)));
            row.push(match traj.model {
                ModelKind::Unicycle => num(s[n + 2]),
                ModelKind::Integrator => String::new(),
            });
            row.push(num(s[n]));
            row.push(num(s[n + 1]));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `step,t,kind,index,value`, 1-based robot or edge index. Edge `k` is the
/// `k`-th edge of the topology.
pub fn write_metrics<W: Write>(writer: W, log: &MetricsLog) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["step", "t", "kind", "index", "value"])?;
    for r in 0..log.len() {
        let (step, t) = (log.steps[r].to_string(), num(log.times[r]));
        let mut kind = |name: &str, values: &[f64]| -> Result<(), csv::Error> {
            for (k, &v) in values.iter().enumerate() {
                w.write_record([step.as_str(), t.as_str(), name, &(k + 1).to_string(), &num(v)])?;
            }
            Ok(())
        };
        kind("phi_norm", &log.phi_norm[r])?;
        kind("coord_err_w1", &log.coord_err_w1[r])?;
        kind("coord_err_w2", &log.coord_err_w2[r])?;
        if !log.w1dot.is_empty() {
            kind("w1dot", &log.w1dot[r])?;
            kind("w2dot", &log.w2dot[r])?;
        }
    }
    w.flush()?;
    Ok(())
}
