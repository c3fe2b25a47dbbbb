use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qsl_cli::config::parse_config;
use qsl_cli::run::{echo, simulate, write_outputs};
use qsl_cli::{CliError, RunConfig};
use qsl_core::verify::{run_suite, threads_from_env, Suite, SuiteOptions};

/// Fidelity speed limits for time-dependent target subspaces.
#[derive(Debug, Parser)]
#[command(name = "qsl", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Propagate a problem and evaluate the selected bounds against it.
    Simulate(RunArgs),
    /// Loschmidt echo between a problem and its perturbation.
    Echo(RunArgs),
    /// Run a seeded Monte Carlo property suite.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// JSON config file.
    #[arg(long)]
    config: PathBuf,
    /// Output prefix; writes <prefix>.csv and <prefix>.report.json.
    #[arg(long)]
    out_prefix: Option<String>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Debug, Args)]
struct Overrides {
    /// Grid steps (rows in the CSV are steps + 1).
    #[arg(long)]
    steps: Option<usize>,
    /// Seed for randomised scenarios.
    #[arg(long)]
    seed: Option<u64>,
    /// Largest bound violation reported as holding.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// theorem1, corollary, appendixA, appendixB, uncertainty, hierarchy,
    /// loschmidt or invariance.
    #[arg(long)]
    suite: String,
    /// Number of seeds.
    #[arg(long)]
    seeds: usize,
    /// Fixed Hilbert-space dimension.
    #[arg(long)]
    dim: Option<usize>,
    /// Grid steps for propagating suites.
    #[arg(long)]
    steps: Option<usize>,
    /// First seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the JSON summary here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(args: &RunArgs) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", args.config.display())))?;
    let o = &args.overrides;
    parse_config(&text)?.with_overrides(o.steps, o.seed, o.tol)
}

fn prefix(args: &RunArgs, cfg: &RunConfig) -> Result<String, CliError> {
    args.out_prefix
        .clone()
        .or_else(|| cfg.output.as_ref().map(|o| o.prefix.clone()))
        .ok_or_else(|| CliError::Config("no output prefix: pass --out-prefix or set output.prefix".into()))
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Simulate(args) => {
            let cfg = load(&args)?;
            let prefix = prefix(&args, &cfg)?;
            let out = simulate(&cfg)?;
            let (csv, json) = write_outputs(&prefix, &out)?;
            eprintln!(
                "[simulate] {} steps, bounds hold: {}; wrote {} and {}",
                out.report.grid.steps,
                out.report.all_hold,
                csv.display(),
                json.display()
            );
            Ok(0)
        }
        Command::Echo(args) => {
            let cfg = load(&args)?;
            let prefix = prefix(&args, &cfg)?;
            let out = echo(&cfg)?;
            let (csv, json) = write_outputs(&prefix, &out)?;
            eprintln!(
                "[echo] t* = {:?}, bound holds: {}; wrote {} and {}",
                out.report.t_star,
                out.report.holds,
                csv.display(),
                json.display()
            );
            Ok(0)
        }
        Command::Verify(args) => {
            let suite = Suite::from_name(&args.suite).ok_or_else(|| {
                let names: Vec<_> = Suite::ALL.iter().map(|s| s.name()).collect();
                CliError::Config(format!("unknown suite '{}' (expected one of {})", args.suite, names.join(", ")))
            })?;
            let opts = SuiteOptions {
                dim: args.dim,
                steps: args.steps,
                threads: threads_from_env()?,
                first_seed: args.seed,
            };
            let report = run_suite(suite, args.seeds, &opts)?;
            let json = serde_json::to_string_pretty(&report).expect("report serialises");
            println!("{json}");
            if let Some(path) = &args.out {
                std::fs::write(path, format!("{json}\n"))?;
            }
            eprintln!(
                "[verify] {suite}: {} passed, {} failed in {:.2} s",
                report.passed.len(),
                report.failed.len(),
                report.runtime_seconds
            );
            Ok(if report.all_passed() { 0 } else { 1 })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("qsl: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
