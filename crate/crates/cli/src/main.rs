//! `parametrix`: batch runner for the energy-estimate experiments.
//!
//! Exit status: 0 when every assertion holds, 2 on an assertion failure,
//! 1 on usage, configuration or runtime errors.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::{RunDir, RunResult};
use crate::config::{parse_n_list, Config};

#[derive(Parser, Debug)]
#[command(name = "parametrix", version, about = "Parametrix energy-estimate experiments on the periodic torus")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration with [grid], [solver] and [experiment] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Run directory (default `runs/<command>`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Replaces `experiment.seed` and the seeds of random initial data and forcing.
    #[arg(long, global = true)]
    seed_override: Option<u64>,

    #[arg(long, global = true)]
    epsilon: Option<f64>,

    /// Comma-separated slice counts, e.g. `2,4,8,16,32`.
    #[arg(long, global = true, value_parser = parse_n_list)]
    n_list: Option<Vec<usize>>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Integrate the equations and store the trajectory.
    Solve,
    /// Check the L2 energy inequality.
    EnergyCheck,
    /// Remainder functionals over a list of slice counts, with slope fits.
    RemainderScaling,
    /// Frozen-point Duhamel reconstruction on one slice.
    DuhamelReconstruct,
    /// Ratios ‖Pφ‖_p / ‖φ‖_p over seeded samples.
    LpProbe,
    /// 3D vorticity L1 bound, Biot–Savart and enstrophy identities.
    VorticityCheck,
    /// Flow-map measure preservation, Jacobian and kernel moments.
    FlowTest,
    /// Operator property battery.
    OpSuite,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::EnergyCheck => "energy-check",
            Command::RemainderScaling => "remainder-scaling",
            Command::DuhamelReconstruct => "duhamel-reconstruct",
            Command::LpProbe => "lp-probe",
            Command::VorticityCheck => "vorticity-check",
            Command::FlowTest => "flow-test",
            Command::OpSuite => "op-suite",
        }
    }
}

fn run(cli: &Cli) -> RunResult<bool> {
    let path = cli
        .config
        .as_ref()
        .ok_or(config::ConfigError::Missing("--config"))?;
    let mut cfg = Config::load(path)?;
    if let Some(seed) = cli.seed_override {
        cfg.override_seed(seed);
    }
    if let Some(eps) = cli.epsilon {
        cfg.experiment.epsilon = Some(eps);
    }
    if let Some(list) = &cli.n_list {
        cfg.experiment.n_list = Some(list.clone());
    }
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(cli.command.name()));
    let mut dir = RunDir::create(&out)?;
    dir.text("config.toml", &cfg.to_toml())?;
    let passed = match cli.command {
        Command::Solve => commands::solve(&cfg, &mut dir)?,
        Command::EnergyCheck => commands::energy_check(&cfg, &mut dir)?,
        Command::RemainderScaling => commands::remainder_scaling(&cfg, &mut dir)?,
        Command::DuhamelReconstruct => commands::duhamel_reconstruct(&cfg, &mut dir)?,
        Command::LpProbe => commands::lp_probe(&cfg, &mut dir)?,
        Command::VorticityCheck => commands::vorticity_check(&cfg, &mut dir)?,
        Command::FlowTest => commands::flow_test(&cfg, &mut dir)?,
        Command::OpSuite => commands::op_suite(&cfg, &mut dir)?,
    };
    dir.finish(cli.command.name(), passed)?;
    Ok(passed)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    match run(&cli) {
        Ok(true) => {
            println!("{}: all checks passed", cli.command.name());
            ExitCode::SUCCESS
        }
        Ok(false) => {
            eprintln!("{}: assertion failure (see report.json)", cli.command.name());
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
