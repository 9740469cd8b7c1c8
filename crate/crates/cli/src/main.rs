use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use dppln_cli::{execute, load_config, CliError, Command, RunOptions};

/// Dual-periodically poled lithium niobate source designer.
#[derive(Debug, Parser)]
#[command(name = "dppln", version)]
struct Args {
    command: Command,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long)]
    threads: Option<usize>,
    /// Neither read nor write the mode cache.
    #[arg(long)]
    no_cache: bool,
}

fn run(args: Args) -> Result<(), CliError> {
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::Io(format!("thread pool: {e}")))?;
    }
    let cfg = load_config(&args.config)?;
    let opts = RunOptions {
        out_dir: args.out,
        cache_dir: None,
        use_cache: !args.no_cache,
    };
    let report = execute(args.command, &cfg, &opts)?;
    for o in &report.validation {
        println!("{} {}/{}: {}", if o.passed { "PASS" } else { "FAIL" }, o.module, o.name, o.detail);
    }
    println!(
        "{}: {} artifacts, {} mode solves ({} from cache); manifest {}",
        args.command.name(),
        report.manifest.artifacts.len(),
        report.mode_solves,
        report.cache_loaded,
        report.manifest_path.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
