use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use vpb_cli::commands::{override_backend, write_artifacts, Command, Context};
use vpb_cli::{CliError, ExperimentConfig};

/// Mode-by-mode experiments for the linearized Vlasov-Poisson-Boltzmann system.
#[derive(Debug, Parser)]
#[command(name = "vpb", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the collision backend: hard_sphere, synthetic or hard_potential.
    #[arg(long)]
    backend: Option<String>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(args: Args) -> Result<(), CliError> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(kind) = &args.backend {
        config.backend = override_backend(config.backend, kind).ok_or_else(|| CliError::Config {
            field: "--backend".into(),
            message: format!("unknown backend `{kind}`"),
        })?;
        config.validate()?;
    }
    if let Some(n) = args.jobs {
        if n == 0 {
            return Err(CliError::Config { field: "--jobs".into(), message: "must be positive".into() });
        }
        // only fails if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let out_dir = args.out.unwrap_or_else(|| config.output_dir.clone());
    let cache_dir = std::env::var_os("VPB_CACHE_DIR").map(PathBuf::from).unwrap_or_else(|| out_dir.join("cache"));
    let hash = config.hash();
    let ctx = Context { config, cache_dir: Some(cache_dir) };
    let output = ctx.run(args.command)?;
    let art = write_artifacts(&out_dir, args.command, &hash, &output)?;
    println!("{}", art.csv.display());
    println!("{}", art.json.display());
    if output.failures > 0 {
        return Err(CliError::ChecksFailed(output.failures));
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
