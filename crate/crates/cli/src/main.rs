use beamloc_cli::{cmd_dataset, cmd_run, cmd_scenario, CliError, Options};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "beamloc", version, about = "Beam RSRP fingerprint positioning pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the scenario and export it as JSON
    Scenario(Common),
    /// Generate fingerprint datasets for every configured feature set
    Dataset(Common),
    /// Train and evaluate the experiment matrix
    Run(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output_dir`)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Global seed (overrides `seed`)
    #[arg(long)]
    seed: Option<u64>,
    /// Experiments run concurrently
    #[arg(long)]
    jobs: Option<usize>,
    /// Print the plan without writing anything
    #[arg(long)]
    dry_run: bool,
}

impl From<Common> for Options {
    fn from(c: Common) -> Self {
        Options { config: c.config, out: c.out, seed: c.seed, jobs: c.jobs, dry_run: c.dry_run }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut stdout = std::io::stdout();
    let result: Result<(), CliError> = match cli.command {
        Command::Scenario(c) => cmd_scenario(&c.into(), &mut stdout).map(drop),
        Command::Dataset(c) => cmd_dataset(&c.into(), &mut stdout).map(drop),
        Command::Run(c) => cmd_run(&c.into(), &mut stdout).map(drop),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
