use clap::Parser;
use mflab::config::ExperimentConfig;
use std::path::PathBuf;
use std::process::ExitCode;

/// Numerical laboratory for mean-field Langevin dynamics with a confined
/// barycenter interaction: potentials, Gibbs measures, particle and PDE
/// dynamics, metastable transition statistics, and functional-inequality
/// profiles.
#[derive(Parser)]
#[command(name = "mflab", version)]
struct Cli {
    /// Path to the experiment JSON config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config's `output` field).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Cap on worker threads (does not affect the produced numbers).
    #[arg(long)]
    workers: Option<usize>,
    /// Master seed (overrides the config's `seed` field).
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut cfg = match ExperimentConfig::from_path(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(workers) = cli.workers {
        cfg.workers = Some(workers);
    }
    let out_dir = cli
        .output
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    cfg.output = Some(out_dir.clone());

    match mflab::runner::run(&cfg, &out_dir) {
        Ok(true) => {
            println!("ok: all checks passed ({})", out_dir.join("summary.json").display());
            ExitCode::SUCCESS
        }
        Ok(false) => {
            eprintln!(
                "failed: one or more checks failed ({})",
                out_dir.join("summary.json").display()
            );
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
