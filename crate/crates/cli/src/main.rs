use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use ctrl_cli::config::ExperimentConfig;
use ctrl_cli::run::{run, run_seeds, Command};
use ctrl_cli::{CliError, EXIT_CONFIG, EXIT_PASS, EXIT_RUNTIME, EXIT_VERIFICATION_FAILED};

/// Run subspace transcription game experiments.
///
/// Exit codes: 0 pass, 1 verification failure, 2 config error, 3 runtime error.
#[derive(Parser)]
#[command(name = "ctrl", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// Experiment config (TOML, schema "v1").
    #[arg(long)]
    config: PathBuf,
    /// Overrides both the generation and the training seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output_dir`.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Worker threads for `--seeds` fan-out (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Comma-separated seeds, each run in `<output_dir>/seed-<seed>` in parallel.
    #[arg(long, value_delimiter = ',', conflicts_with = "seed")]
    seeds: Vec<u64>,
}

fn exit(code: i32) -> ExitCode {
    ExitCode::from(code as u8)
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!("error: {e}");
    exit(e.exit_code())
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mut cfg = match ExperimentConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    if let Some(dir) = args.output_dir {
        cfg.output_dir = dir;
    }
    if let Some(seed) = args.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(t) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: thread pool: {e}");
            return exit(EXIT_RUNTIME);
        }
    }

    if args.seeds.is_empty() {
        return match run(args.command, &cfg) {
            Ok(o) if o.success => exit(EXIT_PASS),
            Ok(_) => exit(EXIT_VERIFICATION_FAILED),
            Err(e) => fail(&e),
        };
    }

    let runs = match run_seeds(args.command, &cfg, &args.seeds) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    let mut code = EXIT_PASS;
    for r in &runs {
        let this = match &r.result {
            Ok(o) if o.success => EXIT_PASS,
            Ok(_) => EXIT_VERIFICATION_FAILED,
            Err(e) => {
                eprintln!("error (seed {}): {e}", r.seed);
                e.exit_code()
            }
        };
        // config errors outrank runtime errors, which outrank verification failures
        let rank = |c: i32| [EXIT_PASS, EXIT_VERIFICATION_FAILED, EXIT_RUNTIME, EXIT_CONFIG].iter().position(|&x| x == c).unwrap_or(0);
        if rank(this) > rank(code) {
            code = this;
        }
    }
    exit(code)
}
