use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use fractal_degree_cli::{run, CliError, Command, ExperimentConfig};

/// Brouwer degree experiments on self-similar fractal domains.
#[derive(Parser, Debug)]
#[command(name = "fdeg", version)]
struct Args {
    /// JSON experiment config; without it the default suite runs.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for parallel kernels.
    #[arg(long)]
    threads: Option<usize>,
    /// Seed for randomized checks (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Command to run when no config is given.
    #[arg(long, value_enum)]
    command: Option<Command>,
}

fn main_inner(args: Args) -> Result<(), CliError> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::for_command(args.command.unwrap_or(Command::Suite)),
    };
    if args.config.is_some() {
        if let Some(c) = args.command {
            cfg.command = c;
        }
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(t) = args.threads {
        cfg.threads = Some(t);
    }
    if let Some(o) = args.out {
        cfg.out = Some(o);
    }
    cfg.validate()?;
    if let Some(t) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Threads(e.to_string()))?;
    }
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("fdeg-out"));
    let manifest = run(&cfg, &out)?;
    eprintln!(
        "{}: {} files written to {} in {:.2} s",
        manifest.command,
        manifest.files.len(),
        out.display(),
        manifest.total_seconds
    );
    Ok(())
}

fn main() -> ExitCode {
    match main_inner(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
