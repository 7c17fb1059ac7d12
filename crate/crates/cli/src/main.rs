use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use popdyn_cli::acceptance::{run_acceptance, Suite, DEFAULT_SEED};
use popdyn_cli::config::{DataFormat, ScenarioConfig};
use popdyn_cli::report::RunReport;
use popdyn_cli::scenario::{run_scenario, write_outcome, MODELS};
use popdyn_cli::{CliError, Result};

#[derive(Parser)]
#[command(name = "popdyn", version, about = "Seeded Monte Carlo ensembles for stochastic population models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Overrides the ensemble seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the replicate count.
    #[arg(long, global = true)]
    reps: Option<usize>,
    /// Worker threads for replicate dispatch.
    #[arg(long, global = true, env = "POPDYN_THREADS")]
    threads: Option<usize>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write the report and per-replicate data.
    Simulate { config: PathBuf },
    /// Run a scenario and print the report; exits 1 if an oracle check fails.
    Analyze { config: PathBuf },
    /// Run the acceptance suite: exact-laws, mc or all.
    Validate {
        #[arg(default_value = "all")]
        suite: String,
    },
    /// List the models a scenario can name.
    ListModels,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for DataFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => DataFormat::Csv,
            Format::Json => DataFormat::Json,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: &Cli) -> Result<u8> {
    configure_threads(cli.threads)?;
    match &cli.command {
        Command::Simulate { config } => {
            let config = load(cli, config)?;
            let dir = cli
                .out_dir
                .clone()
                .or_else(|| config.output.dir.clone())
                .unwrap_or_else(|| PathBuf::from("popdyn-out"));
            let outcome = run_scenario(&config)?;
            write_outcome(&outcome, &dir, config.output.format)?;
            print_summary(&outcome.report);
            println!("wrote {}", dir.display());
            Ok(0)
        }
        Command::Analyze { config } => {
            let config = load(cli, config)?;
            let outcome = run_scenario(&config)?;
            match cli.format {
                Some(Format::Csv) => print_summary(&outcome.report),
                _ => println!("{}", serde_json::to_string_pretty(&outcome.report)?),
            }
            Ok(if outcome.report.passed() { 0 } else { 1 })
        }
        Command::Validate { suite } => {
            let suite: Suite = suite.parse()?;
            let report = run_acceptance(suite, cli.seed.unwrap_or(DEFAULT_SEED));
            let json = serde_json::to_string_pretty(&report)?;
            if let Some(dir) = &cli.out_dir {
                std::fs::create_dir_all(dir).map_err(|e| CliError::Io { path: dir.clone(), source: e })?;
                let path = dir.join("acceptance.json");
                std::fs::write(&path, &json).map_err(|e| CliError::Io { path, source: e })?;
            }
            if matches!(cli.format, Some(Format::Json)) {
                println!("{json}");
            } else {
                report.summary_lines().iter().for_each(|l| println!("{l}"));
            }
            Ok(if report.passed() { 0 } else { 1 })
        }
        Command::ListModels => {
            for m in MODELS {
                println!("{:<14} {}", m.id, m.parameters);
                println!("{:<14} statistics: {}", "", m.statistics.join(", "));
            }
            Ok(0)
        }
    }
}

fn load(cli: &Cli, path: &Path) -> Result<ScenarioConfig> {
    let mut config = ScenarioConfig::load(path)?;
    if let Some(seed) = cli.seed {
        config.ensemble.seed = seed;
    }
    if let Some(reps) = cli.reps {
        config.ensemble.reps = reps;
    }
    if let Some(dir) = &cli.out_dir {
        config.output.dir = Some(dir.clone());
    }
    if let Some(f) = cli.format {
        config.output.format = f.into();
    }
    Ok(config)
}

fn print_summary(report: &RunReport) {
    println!("{} replicates of {}", report.replicates, report.config.model.id());
    for s in &report.statistics {
        match &s.comparison {
            Some(c) => println!(
                "{:<16} {:>14.6} +- {:<12.3e} oracle {:>12.6}  z {:>7.2}  {}",
                s.name,
                s.estimate,
                s.se,
                c.oracle,
                c.z,
                if c.pass { "ok" } else { "FAIL" }
            ),
            None => println!("{:<16} {:>14.6} +- {:.3e}", s.name, s.estimate, s.se),
        }
    }
    println!("digest {}", report.digest);
}

#[cfg(feature = "parallel")]
fn configure_threads(threads: Option<usize>) -> Result<()> {
    let Some(n) = threads else { return Ok(()) };
    if n == 0 {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}

#[cfg(not(feature = "parallel"))]
fn configure_threads(threads: Option<usize>) -> Result<()> {
    match threads {
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        _ => Ok(()),
    }
}
