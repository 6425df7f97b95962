use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use log::error;
use ohmic_cli::config::{parse_formats, Command, RunConfig};
use ohmic_cli::runner::run;
use ohmic_cli::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "ohmic",
    version,
    about = "Run nonlocal reaction-diffusion experiments"
)]
struct Args {
    /// One of bifurcation, evolve, classify, envelope, blowup-rate,
    /// regime-map; must match the config's `command` key when both are set.
    command: Option<String>,
    /// Run configuration, key = value text or JSON.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for branch tracing and sweeps.
    #[arg(long)]
    threads: Option<usize>,
    /// Comma-separated subset of csv,json,svg; overrides `[output] formats`.
    #[arg(long)]
    format: Option<String>,
}

fn execute(args: &Args) -> Result<(), CliError> {
    let command = args.command.as_deref().map(Command::parse).transpose()?;
    let mut cfg = RunConfig::load(&args.config, command)?;
    if let Some(f) = &args.format {
        cfg.formats = parse_formats(f)?;
    }
    let out = args
        .out
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .ok_or_else(|| {
            CliError::Config("no output directory; pass --out or set [output] dir".into())
        })?;
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot size the thread pool: {e}")))?;
    }
    run(&cfg, &out).map(|_| ())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("OHMIC_LOG", "warn")).init();
    let args = Args::parse();
    match execute(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            eprintln!("ohmic: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
