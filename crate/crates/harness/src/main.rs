use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use nfbf_harness::experiments::Outcome;
use nfbf_harness::{output, run_experiment, ExperimentConfig, ExperimentKind, HarnessError};

/// Run a robust DMA-NOMA beamforming experiment and write its CSV.
#[derive(Debug, Parser)]
#[command(name = "nfbf", version)]
struct Cli {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Experiment to run (overrides the config's `experiment`).
    #[arg(long, value_enum)]
    experiment: Option<ExperimentKind>,
    /// Run a single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides the config's `output_dir`).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// error, warn, info, debug or trace.
    #[arg(long, default_value = "warn")]
    log_level: log::LevelFilter,
}

fn run(cli: Cli) -> Result<Outcome, HarnessError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seeds = vec![s];
    }
    if let Some(d) = cli.out_dir {
        cfg.output_dir = d;
    }
    let kind = cli
        .experiment
        .or(cfg.experiment)
        .ok_or_else(|| HarnessError::Config("no experiment given (use --experiment or `experiment` in the config)".into()))?;
    cfg.validate()?;
    output::ensure_writable(&cfg.output_dir)?;
    log::info!("{kind}: {} seeds, config {}", cfg.seeds.len(), cfg.hash());
    let out = run_experiment(kind, &cfg, cli.jobs)?;
    let path = output::write_output(&cfg.output_dir, &cfg, &out)?;
    println!("{}", path.display());
    Ok(out.outcome)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().filter_level(cli.log_level).parse_default_env().init();
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(o) => {
            let (code, what) = match o {
                Outcome::SolverFailure => (4, "a solver failure"),
                _ => (3, "an infeasible scenario"),
            };
            eprintln!("error: at least one task ended with {what}; see the status column");
            ExitCode::from(code)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
