//! `streamperc`: scene generation, latency-aware simulation and evaluation,
//! forecaster training and gradient checks from one config file.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use streamperc::data::SpeedFactor;
use streamperc::experiment::AgentKind;

use crate::commands::NumericalFailure;
use crate::config::{Overrides, RunConfig, CONFIG_HELP};

#[derive(Debug, Parser)]
#[command(name = "streamperc", version, about = "Streaming perception on synthetic moving-object streams")]
#[command(after_help = CONFIG_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run config; see the key list below.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory (config key `out`).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Global seed (config key `seed`).
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Constant detector latency in ms; replaces [latency] and compare.latencies_ms.
    #[arg(long, value_name = "X")]
    latency_ms: Option<f64>,
    /// Speed factor (config key `speed`).
    #[arg(long, value_name = "0|1|2", value_parser = parse_speed)]
    speed: Option<SpeedFactor>,
    /// Agent: oracle, delayed-oracle, kalman or linear-forecaster (config key `agent`).
    #[arg(long, value_name = "NAME", value_parser = parse_agent)]
    agent: Option<AgentKind>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate scenes and write them as a COCO-style dataset (dataset.json).
    #[command(after_help = CONFIG_HELP)]
    Generate(Common),
    /// Run the agent under the latency model; writes trace.json and predictions.json.
    #[command(after_help = CONFIG_HELP)]
    Simulate(Common),
    /// Streaming AP of the agent; writes results.json and results.csv.
    #[command(after_help = CONFIG_HELP)]
    EvalSap(Common),
    /// Offline AP of the agent or of a prediction dump; writes results.json and results.csv.
    #[command(after_help = CONFIG_HELP)]
    EvalOffline(Common),
    /// List (previous, current, target) triplets at the speed factor; writes triplets.csv.
    #[command(after_help = CONFIG_HELP)]
    Triplets(Common),
    /// Per-object matching IoU, trend factor and normalized weight; writes tal_weights.csv.
    #[command(after_help = CONFIG_HELP)]
    TalWeights(Common),
    /// Train the linear forecaster; writes model.json and train_log.csv.
    #[command(after_help = CONFIG_HELP)]
    TrainForecaster(Common),
    /// Compare analytic and finite-difference gradients; writes gradcheck.json.
    #[command(after_help = CONFIG_HELP)]
    Gradcheck {
        #[command(flatten)]
        common: Common,
        /// Exit with code 3 if any relative error reaches the tolerance.
        #[arg(long)]
        assert: bool,
        /// Adds a constant to every analytic gradient component.
        #[arg(long, hide = true, default_value_t = 0.0, value_name = "BIAS")]
        inject_grad_error: f64,
    },
    /// sAP for every (agent, latency, speed) cell; writes compare.csv and compare.json.
    #[command(after_help = CONFIG_HELP)]
    Compare(Common),
}

fn parse_speed(s: &str) -> Result<SpeedFactor, String> {
    let v: u32 = s.parse().map_err(|_| format!("expected 0, 1 or 2, got {s:?}"))?;
    SpeedFactor::try_from(v).map_err(|e| e.to_string())
}

fn parse_agent(s: &str) -> Result<AgentKind, String> {
    s.parse().map_err(|e: streamperc::experiment::ExperimentError| e.to_string())
}

fn load(c: &Common) -> anyhow::Result<RunConfig> {
    let o = Overrides {
        out: c.out.clone(),
        seed: c.seed,
        latency_ms: c.latency_ms,
        speed: c.speed,
        agent: c.agent,
    };
    RunConfig::load(c.config.as_deref(), &o)
}

fn run(cmd: &Command) -> anyhow::Result<String> {
    match cmd {
        Command::Generate(c) => commands::generate(&load(c)?),
        Command::Simulate(c) => commands::simulate(&load(c)?),
        Command::EvalSap(c) => commands::eval_sap(&load(c)?),
        Command::EvalOffline(c) => commands::eval_offline(&load(c)?),
        Command::Triplets(c) => commands::triplets(&load(c)?),
        Command::TalWeights(c) => commands::tal_weights(&load(c)?),
        Command::TrainForecaster(c) => commands::train_forecaster(&load(c)?),
        Command::Gradcheck { common, assert, inject_grad_error } => {
            commands::gradcheck(&load(common)?, *assert, *inject_grad_error)
        }
        Command::Compare(c) => commands::compare(&load(c)?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // Help and version go to stdout and succeed; everything else is a usage error.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli.command) {
        Ok(line) => {
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<NumericalFailure>() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
