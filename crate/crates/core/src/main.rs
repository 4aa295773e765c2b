use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use ralab::experiments::{run_experiment, ExperimentConfig, ExperimentKind, Scale};

/// Runs one experiment protocol and writes CSV, JSON and SVG results.
#[derive(Parser, Debug)]
#[command(name = "ralab", version)]
struct Cli {
    kind: ExperimentKind,
    /// JSON overrides merged onto the preset for `--scale`.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Replaces the master seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "desk")]
    scale: Scale,
}

fn main() -> ExitCode {
    // Exit code 2 is reserved for constraint violations, so usage errors
    // exit with 1 instead of clap's default.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::FAILURE } else { ExitCode::SUCCESS };
        }
    };
    let run = || -> ralab::Result<String> {
        let mut config = ExperimentConfig::load(cli.kind, cli.scale, &cli.config)?;
        if let Some(seed) = cli.seed {
            config.seed = seed;
        }
        config.validate()?;
        run_experiment(&config, &cli.out)
    };
    match run() {
        Ok(rows) => {
            print!("{rows}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("ralab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
