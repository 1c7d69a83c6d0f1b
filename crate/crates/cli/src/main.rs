use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hopsim_cli::config::ScenarioKind;
use hopsim_cli::output::{write_atomic, Artifact};
use hopsim_cli::{checks, run_scenario, Config, Outcome, RunError};

#[derive(Parser)]
#[command(name = "hopsim", version, about = "Thrust-assisted hopper scenarios and acceptance checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario described by the config.
    Simulate(Common),
    /// Search for the periodic gait and write it as gait.toml.
    GaitSearch(Common),
    /// Tabulate required thrust and achievable apex.
    DesignSweep(Common),
    /// Compare hopping and flying cost of transport.
    Cot(Common),
    /// Run the acceptance suite.
    Check(Common),
}

#[derive(Args)]
struct Common {
    config: PathBuf,
    /// Output directory; overrides the config.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Seed for randomized checks; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Suppress the summary on stdout.
    #[arg(long)]
    quiet: bool,
}

fn execute(command: Command) -> Result<u8, RunError> {
    let (forced, args) = match command {
        Command::Simulate(a) => (None, a),
        Command::GaitSearch(a) => (Some(ScenarioKind::GaitSearch), a),
        Command::DesignSweep(a) => (Some(ScenarioKind::DesignSweep), a),
        Command::Cot(a) => (Some(ScenarioKind::CotCompare), a),
        Command::Check(a) => {
            let loaded = args_config(&a)?;
            let outcome = checks::run_acceptance(&loaded.0)?;
            return finish(&loaded, outcome, &a);
        }
    };
    let (mut cfg, base) = args_config(&args)?;
    if let Some(kind) = forced {
        cfg.scenario.kind = kind;
    }
    let outcome = run_scenario(&cfg, &base)?;
    finish(&(cfg, base), outcome, &args)
}

fn args_config(args: &Common) -> Result<(Config, PathBuf), RunError> {
    let mut cfg = Config::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.scenario.seed = seed;
    }
    let base = args.config.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((cfg, base))
}

fn finish((cfg, base): &(Config, PathBuf), outcome: Outcome, args: &Common) -> Result<u8, RunError> {
    let dir = args.out_dir.clone().unwrap_or_else(|| base.join(&cfg.output.dir));
    for artifact in &outcome.artifacts {
        write_atomic(&dir, artifact)?;
    }
    let summary = outcome.report.summary();
    write_atomic(&dir, &Artifact::new("report.json", outcome.report.to_json()))?;
    write_atomic(&dir, &Artifact::new("summary.txt", summary.clone().into_bytes()))?;
    if !args.quiet {
        print!("{summary}");
    }
    Ok(outcome.report.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
