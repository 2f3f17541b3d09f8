mod commands;
mod config;
mod failure;
mod output;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use commands::{H2Method, Run};
use config::RawConfig;
use failure::{CliResult, Failure};
use output::Outputs;

/// LPV generalization toolkit: simulation, stability certificates,
/// weighted H2 norms, neural ODE embedding and PAC bounds.
#[derive(Parser)]
#[command(name = "lpvgen", version)]
struct Cli {
    /// JSON configuration for the subcommand.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    /// Seed for stochastic commands; overrides `seed` in the config.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an LPV system and write trajectory.csv.
    Simulate,
    /// Certify stability for a given lambda and write certificate.json.
    Certify,
    /// Weighted H2 norm from the Lyapunov solution and/or the Volterra series.
    H2norm {
        #[arg(long, value_enum, default_value = "both")]
        method: H2Method,
    },
    /// Embed a neural ODE as an LPV system and compare trajectories.
    Embed,
    /// Count ReLU activation regions visited by a set of inputs.
    Regions,
    /// Evaluate the generalization bounds.
    Bound,
    /// Run the Monte-Carlo generalization gap experiment.
    GapExperiment,
    /// Estimate the empirical Rademacher complexity of a loss matrix.
    Rademacher,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Certify => "certify",
            Command::H2norm { .. } => "h2norm",
            Command::Embed => "embed",
            Command::Regions => "regions",
            Command::Bound => "bound",
            Command::GapExperiment => "gap-experiment",
            Command::Rademacher => "rademacher",
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::config("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::config(format!("cannot start thread pool: {e}")))?;
    }
    let path = cli.config.as_deref().ok_or_else(|| Failure::config("--config PATH is required"))?;
    let raw = RawConfig::load(path)?;
    let out = Outputs::new(&cli.out);
    let run: Run = match &cli.command {
        Command::Simulate => commands::simulate_cmd(&raw, out)?,
        Command::Certify => commands::certify_cmd(&raw, out)?,
        Command::H2norm { method } => commands::h2norm_cmd(&raw, out, *method)?,
        Command::Embed => commands::embed_cmd(&raw, out)?,
        Command::Regions => commands::regions_cmd(&raw, out, cli.seed)?,
        Command::Bound => commands::bound_cmd(&raw, out)?,
        Command::GapExperiment => commands::gap_experiment_cmd(&raw, out, cli.seed)?,
        Command::Rademacher => commands::rademacher_cmd(&raw, out, cli.seed)?,
    };
    let Run { mut outputs, result, seed, summary } = run;
    let mut files = outputs.names();
    files.push("report.json".into());
    let report = json!({
        "command": cli.command.name(),
        "config_sha256": raw.digest,
        "seed": seed,
        "outputs": files,
        "result": result,
    });
    outputs.add_json("report.json", &report);
    outputs.commit()?;
    let mut stdout = std::io::stdout().lock();
    for line in summary {
        writeln!(stdout, "{line}")?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code as u8)
        }
    }
}
