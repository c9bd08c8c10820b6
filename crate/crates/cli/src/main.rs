use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use jumpfb_cli::{load, run, validate_config, CliError, VERSION};

#[derive(Parser)]
#[command(name = "jumpfb", version = VERSION, about = "Jump-based feedback: steady states, counting statistics and trajectories")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, env = "JUMPFB_THREADS", global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the task described by a configuration file.
    Run {
        config: PathBuf,
        /// Output directory, overriding the configuration.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a configuration file without running it.
    Validate { config: PathBuf },
    /// Print the toolkit version.
    Version,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result: Result<(), CliError> = match &cli.command {
        Command::Version => {
            println!("jumpfb {VERSION}");
            Ok(())
        }
        Command::Validate { config } => load(config).and_then(|c| validate_config(&c)).map(|_| {
            println!("{}: ok", config.display());
        }),
        Command::Run { config, out } => load(config).and_then(|c| run(&c, out.as_deref())).map(|report| {
            for file in &report.outputs {
                println!("{file}");
            }
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
