use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use palsgd::experiments::gradcheck::DEFAULT_PROBES;
use palsgd::experiments::theory::DEFAULT_SEEDS;
use palsgd::experiments::{
    gradcheck, parse_raw, run_experiment, sweep, verify_theory, Grid, Overrides, ResolvedConfig,
    TheoryOptions,
};

const EXIT_ERROR: u8 = 1;
const EXIT_DIVERGED: u8 = 2;
const EXIT_CHECK_FAILED: u8 = 3;

#[derive(Parser)]
#[command(
    name = "palsgd",
    version,
    about = "Simulate pseudo-asynchronous local SGD and its baselines"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON).
    config: PathBuf,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Write a metrics record every N steps.
    #[arg(long)]
    metrics_every: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and print its summary.
    Run(Common),
    /// Run one experiment per grid value and write a comparison table.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// JSON object mapping dotted config paths to value lists.
        #[arg(long)]
        grid: PathBuf,
    },
    /// Check linear speedup in K, the horizon and noiseless behaviour on a quadratic.
    VerifyTheory {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = DEFAULT_SEEDS)]
        seeds: usize,
    },
    /// Compare analytic minibatch gradients with central finite differences.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = DEFAULT_PROBES)]
        probes: usize,
    },
}

fn load(common: &Common) -> palsgd::Result<palsgd::experiments::RunConfig> {
    let mut raw = parse_raw(&fs::read_to_string(&common.config)?)?;
    Overrides {
        seed: common.seed,
        out_dir: common.out_dir.clone(),
        metrics_every: common.metrics_every,
    }
    .apply(&mut raw);
    Ok(raw)
}

fn write_report(dir: Option<&Path>, name: &str, json: &str) -> palsgd::Result<()> {
    if let Some(dir) = dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(name), format!("{json}\n"))?;
    }
    Ok(())
}

fn run(cli: Cli) -> palsgd::Result<u8> {
    match cli.command {
        Command::Run(common) => {
            let config: ResolvedConfig = load(&common)?.resolve()?;
            let result = run_experiment(&config)?;
            println!("{}", serde_json::to_string_pretty(&result.summary)?);
            Ok(if result.summary.diverged {
                EXIT_DIVERGED
            } else {
                0
            })
        }
        Command::Sweep { common, grid } => {
            let raw = load(&common)?;
            let grid = Grid::parse(&fs::read_to_string(grid)?)?;
            let out_dir = raw.output.dir.clone();
            let report = sweep(&raw, &grid, out_dir.as_deref())?;
            let mut w = csv::Writer::from_writer(std::io::stdout());
            for row in report.rows() {
                w.serialize(row)?;
            }
            w.flush()?;
            for cell in report.cells.iter().filter(|c| c.error.is_some()) {
                eprintln!(
                    "cell {}={} failed: {}",
                    cell.param,
                    cell.value,
                    cell.error.as_deref().unwrap_or("")
                );
            }
            Ok(if report.failures() > 0 { EXIT_ERROR } else { 0 })
        }
        Command::VerifyTheory { common, seeds } => {
            let config = load(&common)?.resolve()?;
            let options = TheoryOptions {
                seeds,
                ..TheoryOptions::default()
            };
            let report = verify_theory(&config, &options)?;
            for check in &report.checks {
                let status = if check.pass { "PASS" } else { "FAIL" };
                println!(
                    "{status} {}: {:.6e} (required {})",
                    check.name, check.value, check.requirement
                );
            }
            write_report(
                config.out_dir().map(PathBuf::as_path),
                "theory_report.json",
                &serde_json::to_string_pretty(&report)?,
            )?;
            Ok(if report.pass { 0 } else { EXIT_CHECK_FAILED })
        }
        Command::Gradcheck { common, probes } => {
            let config = load(&common)?.resolve()?;
            let workload = config.workload().build(config.config.seed)?;
            let report = gradcheck(
                &workload,
                config.config.seed,
                config.config.batch_size,
                probes,
            )?;
            let json = serde_json::to_string_pretty(&report)?;
            println!("{json}");
            write_report(
                config.out_dir().map(PathBuf::as_path),
                "gradcheck.json",
                &json,
            )?;
            Ok(if report.pass { 0 } else { EXIT_CHECK_FAILED })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
