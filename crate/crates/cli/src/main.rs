use std::path::PathBuf;
use std::process::ExitCode;

use blockrip_cli::commands::output_path;
use blockrip_cli::{run, CliError, Command, ExperimentConfig, Overrides};
use clap::Parser;

/// Runs one blockrip experiment and writes a CSV plus a JSON sidecar.
///
/// Flags override values from the config file. BLOCKRIP_THREADS caps the
/// worker count (0 or unset = all cores).
#[derive(Parser, Debug)]
#[command(name = "blockrip", version)]
struct Args {
    /// sample | psi-norm | ric-exact | ric-mc | chaos-tail | moment-check |
    /// chaining | phase-transition | recover | increment-check
    command: String,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
}

fn threads_from_env() -> Result<usize, CliError> {
    match std::env::var("BLOCKRIP_THREADS") {
        Err(_) => Ok(0),
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Validation(vec![format!("BLOCKRIP_THREADS: not a count: {v:?}")])),
    }
}

fn main_inner(args: Args) -> Result<(), CliError> {
    let command = Command::parse(&args.command)
        .ok_or_else(|| CliError::Validation(vec![format!("command: unknown command {:?}", args.command)]))?;
    let threads = threads_from_env()?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Io(format!("thread pool: {e}")))?;
    let text =
        std::fs::read_to_string(&args.config).map_err(|e| CliError::Io(format!("{}: {e}", args.config.display())))?;
    let mut config = ExperimentConfig::from_toml(&text).map_err(|e| CliError::Validation(vec![e]))?;
    config.apply(&Overrides {
        command: Some(command),
        seed: args.seed,
        trials: args.trials,
        output_path: args.out,
    });
    let result = run(&config)?;
    let summary = serde_json::to_string(&result.summary).unwrap_or_default();
    println!("{} {}", output_path(&config).display(), summary);
    Ok(())
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match main_inner(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
