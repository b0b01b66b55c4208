//! `meterqos` command-line driver.

mod northbound;

use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use log::warn;

use meterqos::metrics::{export_csv, write_csv};
use meterqos::reproduce::{bundled, Bundled};
use meterqos::scenario::{load_scenario, ScenarioError, ScenarioSpec};
use meterqos::sim::{trace_epoch, RunOutput, Simulation, TickOutcome, TraceError};

use crate::northbound::NorthboundMode;

#[derive(Debug, Parser)]
#[command(
    name = "meterqos",
    version,
    about = "Priority-driven meter provisioning on a simulated multi-tenant link"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a scenario file (or bundled scenario name) and emit per-step CSV.
    Run {
        scenario: String,
        /// Write CSV here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Accept policy commands on `stdin` or `socket:<port>` while running.
        #[arg(long, value_parser = NorthboundMode::parse)]
        northbound: Option<NorthboundMode>,
        /// Wall-clock seconds per simulated second when a northbound is open; 0 runs unpaced.
        #[arg(long, default_value_t = 1.0)]
        time_scale: f64,
    },
    /// Print the rule-engine decision taken at an epoch boundary.
    Trace {
        scenario: String,
        #[arg(long)]
        epoch: u64,
    },
    /// Run a bundled reference scenario and compare against its expected steady state.
    Reproduce {
        figure: Figure,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Figure {
    Fig3,
    Fig4a,
    Fig4b,
}

impl Figure {
    fn bundled(self) -> &'static Bundled {
        let name = match self {
            Figure::Fig3 => "fig3",
            Figure::Fig4a => "fig4a",
            Figure::Fig4b => "fig4b",
        };
        bundled(name).expect("figure scenarios are bundled")
    }
}

/// Failure classes mapped onto exit codes.
enum Failure {
    /// Validation or comparison failure: exit 1.
    Check(anyhow::Error),
    /// Usage error: exit 2.
    Usage(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Check(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Check(e.into())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(e)) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(Failure::Check(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// A reader such as `head` closing standard output early.
fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain()
        .filter_map(|c| c.downcast_ref::<io::Error>())
        .any(|io| io.kind() == io::ErrorKind::BrokenPipe)
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run {
            scenario,
            out,
            northbound,
            time_scale,
        } => {
            if !(time_scale.is_finite() && time_scale >= 0.0) {
                return Err(Failure::Usage(anyhow::anyhow!("--time-scale must be >= 0")));
            }
            if matches!(northbound, Some(NorthboundMode::Stdin)) && out.is_none() {
                return Err(Failure::Usage(anyhow::anyhow!(
                    "--northbound stdin replies on standard output; pass --out for the CSV"
                )));
            }
            let spec = resolve_scenario(&scenario)?;
            run(&spec, out.as_deref(), northbound, time_scale)
        }
        Command::Trace { scenario, epoch } => {
            let spec = resolve_scenario(&scenario)?;
            trace(&spec, epoch)
        }
        Command::Reproduce { figure, out } => reproduce(figure.bundled(), out.as_deref()),
    }
}

/// A path on disk, or else the name of a bundled scenario.
fn resolve_scenario(arg: &str) -> Result<ScenarioSpec, Failure> {
    let path = Path::new(arg);
    if path.is_file() {
        return load_scenario(path).map_err(|e| match e {
            ScenarioError::Io { .. } => Failure::Usage(e.into()),
            other => Failure::Check(other.into()),
        });
    }
    if let Some(b) = bundled(arg) {
        return Ok(b.scenario().context("bundled scenario is invalid")?);
    }
    Err(Failure::Usage(anyhow::anyhow!(
        "no scenario file or bundled scenario named '{arg}'"
    )))
}

fn report_ticks(out: &RunOutput) {
    for tick in &out.ticks {
        if let TickOutcome::Failed(reason) = &tick.outcome {
            warn!(
                "epoch {} at t={}: {reason}; previous tables kept",
                tick.epoch, tick.time_s
            );
        }
    }
}

fn emit_csv(out: &RunOutput, path: Option<&Path>) -> Result<(), Failure> {
    match path {
        Some(path) => {
            let summary = export_csv(&out.records, path).with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {} rows to {}", summary.rows_written, path.display());
        }
        None => {
            let stdout = io::stdout();
            write_csv(&out.records, stdout.lock())?;
        }
    }
    Ok(())
}

fn run(
    spec: &ScenarioSpec,
    out_path: Option<&Path>,
    northbound: Option<NorthboundMode>,
    time_scale: f64,
) -> Result<(), Failure> {
    let mut sim = Simulation::new(spec).context("building controller")?;
    let output = match northbound {
        None => sim.run(),
        Some(mode) => {
            let inbox = northbound::serve(mode)?;
            let pace = Duration::from_secs_f64(spec.step_s * time_scale);
            let mut output = RunOutput::default();
            loop {
                sim.controller_mut().drain_northbound(&inbox);
                let Some(step) = sim.step() else { break };
                output.ticks.extend(step.tick);
                output.records.extend(step.records);
                if !pace.is_zero() {
                    std::thread::sleep(pace);
                }
            }
            output
        }
    };
    report_ticks(&output);
    emit_csv(&output, out_path)
}

fn trace(spec: &ScenarioSpec, epoch: u64) -> Result<(), Failure> {
    let (observation, rules, decision) = trace_epoch(spec, epoch).map_err(|e| match e {
        TraceError::EpochOutOfRange { .. } => Failure::Usage(e.into()),
        other => Failure::Check(other.into()),
    })?;
    let mut stdout = io::stdout().lock();
    writeln!(stdout, "scenario={}", spec.name)?;
    writeln!(stdout, "time_s={}", epoch as f64 * spec.period_s)?;
    write!(stdout, "{decision}")?;
    for (flow, class) in observation.iter() {
        let action = rules
            .action(flow)
            .map(|a| a.to_string())
            .unwrap_or_else(|| "default".to_string());
        writeln!(stdout, "flow {flow} class={class} action={action}")?;
    }
    Ok(())
}

fn reproduce(b: &Bundled, out_path: Option<&Path>) -> Result<(), Failure> {
    let spec = b.scenario().context("bundled scenario is invalid")?;
    let expected = b
        .expectation()
        .expect("figure scenarios ship expectations")
        .context("bundled expectation is invalid")?;
    let output = Simulation::new(&spec).context("building controller")?.run();
    report_ticks(&output);
    if out_path.is_some() {
        emit_csv(&output, out_path)?;
    }
    let comparison = expected.compare(&output);
    println!("{comparison}");
    if comparison.passed() {
        Ok(())
    } else {
        Err(Failure::Check(anyhow::anyhow!(
            "{} does not match its expected steady state:\n  {}",
            b.name,
            comparison.failures().join("\n  ")
        )))
    }
}
