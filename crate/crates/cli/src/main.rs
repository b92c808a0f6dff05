use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ehpc_core::config::{ExperimentConfig, SolveKind};
use ehpc_core::experiments;
use ehpc_core::Error;
use serde::Serialize;

/// Power control for energy-harvesting transmitters with a lookahead window.
#[derive(Parser, Debug)]
#[command(name = "ehpc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Optimal quiet-period sequence for one horizon (lower, upper or limit).
    Solve(Opts),
    /// Optimal throughput against the lookahead window, with bounds and the offline limit.
    Fig1(Opts),
    /// Optimal sequences for several windows.
    Fig2(Opts),
    /// Bound sequences against the optimum across horizons.
    Fig3(Opts),
    /// Low-arrival action curves for several windows.
    Fig4(Opts),
    /// Multiplicative factors against the mean charging ratio.
    Fig5(Opts),
    /// Monte Carlo evaluation of a configured policy.
    Simulate(Opts),
    /// Relative value iteration compared with the analytic throughput interval.
    BellmanCheck(Opts),
}

#[derive(Args, Debug)]
struct Opts {
    /// JSON experiment configuration; built-in defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    capacity: Option<f64>,
    #[arg(long)]
    prob: Option<f64>,
    #[arg(long)]
    gain: Option<f64>,
    #[arg(long)]
    window: Option<usize>,
    /// Horizon N of the bound programs.
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long, value_parser = parse_kind)]
    kind: Option<SolveKind>,
    /// Slots per simulated run.
    #[arg(long)]
    slots: Option<usize>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn parse_kind(s: &str) -> Result<SolveKind, String> {
    match s {
        "lower" => Ok(SolveKind::Lower),
        "upper" => Ok(SolveKind::Upper),
        "limit" => Ok(SolveKind::Limit),
        _ => Err(format!("expected lower, upper or limit, got {s}")),
    }
}

impl Opts {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_path(path)?,
            None => ExperimentConfig::default(),
        };
        let p = &mut cfg.params;
        if let Some(v) = self.capacity {
            p.battery_capacity = v;
        }
        if let Some(v) = self.prob {
            p.arrival_prob = v;
        }
        if let Some(v) = self.gain {
            p.channel_gain = v;
        }
        if let Some(v) = self.window {
            p.window = v;
        }
        if let Some(v) = &self.out {
            cfg.output.dir = v.clone();
        }
        if let Some(v) = self.horizon {
            cfg.solver.horizon = v;
        }
        if let Some(v) = self.kind {
            cfg.solver.kind = v;
        }
        if let Some(v) = self.slots {
            cfg.sim.horizon = v;
        }
        if let Some(v) = self.runs {
            cfg.sim.runs = v;
        }
        if let Some(v) = self.seed {
            cfg.sim.seed = v;
            cfg.sweep.factor_seed = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Exit status for a failed command.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::InvalidParams(_) | Error::Domain(_) | Error::OutOfRange { .. } => 2,
        Error::Solver { .. } | Error::NonConvergence { .. } => 3,
        Error::Causality { .. } => 4,
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => 1,
    }
}

fn print<T: Serialize>(summary: &T, files: &[PathBuf]) -> Result<(), Error> {
    for f in files {
        eprintln!("wrote {}", f.display());
    }
    println!("{}", serde_json::to_string_pretty(summary)?);
    Ok(())
}

fn run(command: Command) -> Result<u8, Error> {
    match command {
        Command::Solve(o) => {
            let s = experiments::cmd_solve(&o.load()?)?;
            print(&s, &s.files)?
        }
        Command::Fig1(o) => {
            let s = experiments::cmd_fig1(&o.load()?)?;
            print(&s, &s.files)?
        }
        Command::Fig2(o) => {
            let s = experiments::cmd_fig2(&o.load()?)?;
            print(&s, &s.files)?
        }
        Command::Fig3(o) => {
            let s = experiments::cmd_fig3(&o.load()?)?;
            print(&s, &s.files)?
        }
        Command::Fig4(o) => {
            let s = experiments::cmd_fig4(&o.load()?)?;
            print(&s, &s.files)?
        }
        Command::Fig5(o) => {
            let s = experiments::cmd_fig5(&o.load()?)?;
            print(&s, &s.files)?
        }
        Command::Simulate(o) => {
            let s = experiments::cmd_simulate(&o.load()?)?;
            print(&s, &s.files)?
        }
        Command::BellmanCheck(o) => {
            let report = experiments::cmd_bellman_check(&o.load()?)?;
            print(&report, &report.files)?;
            if !report.passed() {
                return Ok(4);
            }
        }
    }
    Ok(0)
}

fn init_threads() -> Result<(), Error> {
    let Ok(raw) = std::env::var("EHPC_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("EHPC_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match init_threads().and_then(|_| run(cli.command)) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
