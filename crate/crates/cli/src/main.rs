use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use subplan_cli::{cmd_compare, cmd_diagram, cmd_quantize, cmd_run, cmd_solve, exit_code};
use subplan_core::error::Result;
use subplan_cli::RunManifest;

#[derive(Parser)]
#[command(
    name = "subplan",
    version,
    about = "Carrier-submarine trajectory planning against acoustic targets"
)]
struct Cli {
    /// Override the config's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the parallel inner loops (defaults to all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render the configured emitter loss diagrams as CSV matrices.
    Diagram {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train quantization grids and estimate transition matrices.
    Quantize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the dynamic program against a stored chain archive.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Chain archive produced by `quantize`.
        #[arg(long)]
        chain: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Execute a scenario closed loop; writes log.csv, metrics.json, manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Replace every optimized action by the zero action.
        #[arg(long)]
        baseline: bool,
    },
    /// Compare two run logs (per-period cost means, filter RMSE, totals).
    Compare {
        #[arg(long)]
        log_a: PathBuf,
        #[arg(long)]
        log_b: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// First optimized step for the per-period means.
        #[arg(long, default_value_t = 0)]
        split: usize,
    },
}

fn dispatch(cli: &Cli) -> Result<RunManifest> {
    match &cli.command {
        Command::Diagram { config, out } => cmd_diagram(config, out, cli.seed),
        Command::Quantize { config, out } => cmd_quantize(config, out, cli.seed),
        Command::Solve { config, chain, out } => cmd_solve(config, chain, out, cli.seed),
        Command::Run {
            config,
            out,
            baseline,
        } => cmd_run(config, out, *baseline, cli.seed),
        Command::Compare {
            log_a,
            log_b,
            out,
            split,
        } => cmd_compare(log_a, log_b, out, *split),
    }
}

#[cfg(feature = "parallel")]
fn with_pool<F: FnOnce() -> Result<RunManifest> + Send>(
    workers: Option<usize>,
    f: F,
) -> Result<RunManifest> {
    match workers {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| {
                    subplan_core::Error::Config(format!("could not build a {n}-thread pool: {e}"))
                })?;
            pool.install(f)
        }
        None => f(),
    }
}

#[cfg(not(feature = "parallel"))]
fn with_pool<F: FnOnce() -> Result<RunManifest>>(workers: Option<usize>, f: F) -> Result<RunManifest> {
    if workers.is_some() {
        eprintln!("note: built without the `parallel` feature; --workers is ignored");
    }
    f()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match with_pool(cli.workers, || dispatch(&cli)) {
        Ok(manifest) => {
            for out in &manifest.outputs {
                println!("wrote {} ({} bytes)", out.path, out.bytes);
            }
            println!("run hash {}", manifest.run_hash);
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err) as u8)
        }
    }
}
