use std::path::PathBuf;
use std::process::ExitCode;

use adjoint_mc::config::RunDefaults;
use adjoint_mc::harness::{cmd_calibrate, cmd_gradient, cmd_measure_speedup, cmd_variance_table, RunConfig};
use clap::{Args, Parser, Subcommand};

/// Monte-Carlo adjoint gradient experiments.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand)]
enum Command {
    /// Wall time and per-coordinate variance for every (algorithm, N_mc).
    VarianceTable,
    /// Gradients of each algorithm on a shared path set.
    Gradient,
    /// Fit the curve knots with L-BFGS and write one trace per run.
    Calibrate,
    /// Measure K_F and K_R of batched replay (first --nmc value).
    MeasureSpeedup,
}

#[derive(Args)]
struct Flags {
    /// Market spec (TOML); its [run] table supplies defaults.
    #[arg(long, global = true, value_name = "FILE")]
    spec: Option<PathBuf>,
    /// Algorithms, e.g. 1,2,3.
    #[arg(long = "alg", global = true, value_delimiter = ',')]
    algorithms: Option<Vec<u8>>,
    /// Path counts, e.g. 10000,100000.
    #[arg(long, global = true, value_delimiter = ',')]
    nmc: Option<Vec<usize>>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    batch_width: Option<usize>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Optimizer iterations for `calibrate`.
    #[arg(long, global = true)]
    iterations: Option<usize>,
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
}

fn run(cli: Cli) -> adjoint_mc::Result<()> {
    let f = cli.flags;
    let overrides = RunDefaults {
        algorithms: f.algorithms,
        nmc: f.nmc,
        seed: f.seed,
        batch_width: f.batch_width,
        threads: f.threads,
        iterations: f.iterations,
        out: f.out,
    };
    let cfg = RunConfig::resolve(f.spec, &overrides)?;
    match cli.command {
        Command::VarianceTable => {
            let (table, path) = cmd_variance_table(&cfg)?;
            print!("{}", table.render());
            println!("wrote {}", path.display());
        }
        Command::Gradient => {
            let (table, path) = cmd_gradient(&cfg)?;
            print!("{}", table.render());
            println!("wrote {}", path.display());
        }
        Command::Calibrate => {
            for run in cmd_calibrate(&cfg)? {
                println!(
                    "alg {} N_mc {}: loss {:.6e} -> {:.6e}, knots {:?}",
                    run.algorithm,
                    run.n_paths,
                    run.trace.initial_loss(),
                    run.trace.final_loss(),
                    run.curve.vols()
                );
                println!("wrote {}", run.path.display());
            }
        }
        Command::MeasureSpeedup => {
            let (report, path) = cmd_measure_speedup(&cfg)?;
            print!("{}", report.render());
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
