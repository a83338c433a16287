use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use hbnwave_cli::{config, run, validate, JobSpec, Mode};

/// Helium transmission and diffraction through holes in monolayer hBN.
#[derive(Debug, Parser)]
#[command(name = "hbnwave", version)]
struct Args {
    #[arg(long, value_enum)]
    mode: Mode,
    /// JSON config file, or the manifest of an earlier run.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override a config value by dotted path, e.g. propagation.velocity=20.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Reserved. Every pipeline is deterministic.
    #[arg(long)]
    seed: Option<u64>,
    /// Validate the config, print the diagnostics and exit.
    #[arg(long)]
    check: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();

    if let Some(n) = args.threads {
        if n == 0 {
            eprintln!("--threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("cannot configure thread pool: {e}");
            return ExitCode::from(1);
        }
    }

    if args.check {
        let diags = validate(&args.config, &args.overrides);
        for d in &diags {
            eprintln!("{d}");
        }
        return if diags.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(2) };
    }

    let job = JobSpec {
        mode: args.mode,
        config_path: args.config,
        output_dir: args.out,
        overrides: args.overrides,
        seed: args.seed,
    };
    log::info!("data directory {}", config::default_data_dir().display());
    match run(&job) {
        Ok(m) => {
            log::info!("{} outputs written to {}", m.outputs.len(), job.output_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
