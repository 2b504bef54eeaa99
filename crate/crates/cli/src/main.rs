use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use stobal::harness::{
    convergence_summary, run_convergence, run_diagnose, run_single, with_threads, write_convergence_outputs,
    write_diagnose_outputs, ExperimentConfig,
};
use stobal::{exact_riemann_burgers, Grid1D};

/// Operator splitting solver and estimator suite for stochastic balance laws.
#[derive(Parser)]
#[command(name = "stobal", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat TOML experiment configuration; built-in defaults otherwise.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of Monte Carlo paths.
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// One trajectory at the finest ladder level; dumps checkpoints and the path.
    Run,
    /// Self-convergence rate experiment.
    Converge,
    /// Fractional BV, time modulus, local Lᵖ and entropy residual checks.
    Diagnose,
    /// Print the exact Burgers Riemann solution as CSV.
    RiemannOracle {
        #[arg(long, allow_hyphen_values = true)]
        ul: f64,
        #[arg(long, allow_hyphen_values = true)]
        ur: f64,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, default_value_t = 2.0)]
        half_width: f64,
        #[arg(long, default_value_t = 64)]
        cells: usize,
    },
}

fn config(common: &Common) -> stobal::Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(paths) = common.paths {
        cfg.paths = paths;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    if let Some(threads) = common.threads {
        cfg.threads = threads;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// `Ok(true)` when every enabled check passed.
fn execute(cli: &Cli) -> stobal::Result<bool> {
    match &cli.command {
        Command::RiemannOracle { ul, ur, t, half_width, cells } => {
            let grid = Grid1D::symmetric(*half_width, *cells)?;
            println!("x,u");
            for x in grid.centers() {
                println!("{x},{}", exact_riemann_burgers(*ul, *ur, x, *t)?);
            }
            Ok(true)
        }
        Command::Run => {
            let cfg = config(&cli.common)?;
            let tr = with_threads(cfg.threads, || run_single(&cfg))??;
            fs::create_dir_all(&cfg.out_dir)?;
            tr.write_checkpoints_csv(fs::File::create(cfg.out_dir.join("checkpoints.csv"))?)?;
            tr.path().save(&cfg.out_dir.join("path.bin"))?;
            info!("wrote {} checkpoints to {}", tr.checkpoints().len(), cfg.out_dir.display());
            Ok(true)
        }
        Command::Converge => {
            let cfg = config(&cli.common)?;
            let fit = with_threads(cfg.threads, || run_convergence(&cfg))??;
            write_convergence_outputs(&fit, &cfg)?;
            print!("{}", convergence_summary(&fit, &cfg));
            Ok(fit.passes(&cfg))
        }
        Command::Diagnose => {
            let cfg = config(&cli.common)?;
            let bundle = with_threads(cfg.threads, || run_diagnose(&cfg))??;
            write_diagnose_outputs(&bundle, &cfg)?;
            print!("{}", bundle.summary(&cfg));
            Ok(bundle.all_pass())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
