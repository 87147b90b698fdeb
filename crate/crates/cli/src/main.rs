use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use csp_core::experiment::{parse_config_with, run, Overrides, Scenario};
use csp_core::Mode;

#[derive(Parser)]
#[command(name = "csp", version, about = "Run causal strategic prediction experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the distribution induced by one mechanism.
    Simulate(RunArgs),
    /// Orient the skeleton from one deployment per feature.
    DiscoverPerNode(RunArgs),
    /// Orient the skeleton with isolation mechanisms.
    DiscoverGeneral(RunArgs),
    /// Elicit every inducible distribution under linear cost and solve the per-distribution QPs.
    ParetoLinear(RunArgs),
    /// Discover, identify and compute the risk/improvement front offline.
    OfflineFront(RunArgs),
    /// Evaluate the strong- and weak-proxy trade-off examples.
    TradeoffDemo(RunArgs),
    /// Compare cumulative loss of discovery and random search on chain graphs.
    RegretBench(RunArgs),
    /// Run whatever scenario the config names.
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// `exact`, `empirical` (100000 agents) or `empirical:COUNT`.
    #[arg(long, value_parser = parse_mode)]
    mode: Option<Mode>,
}

fn parse_mode(s: &str) -> Result<Mode> {
    match s.split_once(':') {
        None if s == "exact" => Ok(Mode::Exact),
        None if s == "empirical" => Ok(Mode::Empirical { count: 100_000 }),
        Some(("empirical", n)) => Ok(Mode::Empirical {
            count: n.parse().with_context(|| format!("bad agent count {n:?}"))?,
        }),
        _ => bail!("expected exact, empirical or empirical:COUNT, got {s:?}"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn execute(cli: Cli) -> Result<bool> {
    let (scenario, args) = match cli.command {
        Command::Simulate(a) => (Some(Scenario::Simulate), a),
        Command::DiscoverPerNode(a) => (Some(Scenario::DiscoverPerNode), a),
        Command::DiscoverGeneral(a) => (Some(Scenario::DiscoverGeneral), a),
        Command::ParetoLinear(a) => (Some(Scenario::ParetoLinear), a),
        Command::OfflineFront(a) => (Some(Scenario::OfflineFront), a),
        Command::TradeoffDemo(a) => (Some(Scenario::TradeoffDemo), a),
        Command::RegretBench(a) => (Some(Scenario::RegretBench), a),
        Command::Run(a) => (None, a),
    };
    let overrides = Overrides {
        scenario,
        seed: args.seed,
        mode: args.mode,
    };
    let config =
        parse_config_with(&args.config, &overrides).with_context(|| format!("reading {}", args.config.display()))?;
    let report = run(&config, &args.out_dir)?;
    println!("scenario {} (seed {})", report.scenario.name(), report.seed);
    for c in &report.checks {
        let mark = if c.passed { "pass" } else { "FAIL" };
        if c.detail.is_empty() {
            println!("  {mark}  {}", c.name);
        } else {
            println!("  {mark}  {}: {}", c.name, c.detail);
        }
    }
    for n in &report.notes {
        println!("  note  {n}");
    }
    println!(
        "wrote {} to {}",
        ["report.json".to_string()]
            .iter()
            .chain(&report.artifacts)
            .cloned()
            .collect::<Vec<_>>()
            .join(", "),
        args.out_dir.display()
    );
    Ok(report.passed)
}
