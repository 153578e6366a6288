use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use locstat::commands::{self, Context, Mode};
use locstat::{runner, CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "locstat", version, about = "Homogenization experiments for locally stationary media")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads. Affects speed only.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Check the medium assumptions and microscopic ergodicity.
    Validate,
    /// Tabulate the effective tensors on the y-grid.
    Effective,
    /// Simulate an ensemble.
    Simulate {
        #[arg(long, value_enum)]
        mode: Mode,
    },
    /// Weak-convergence report along the epsilon ladder.
    Compare,
    /// The two-dimensional worked example with every check bundled.
    Sec4,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = match (&cli.config, &cli.command) {
        (Some(p), _) => ExperimentConfig::load(p)?,
        (None, Command::Sec4) => ExperimentConfig::sec4_default(),
        (None, _) => return Err(CliError::Usage("--config is required".into())),
    };
    let ctx = Context::new(config, cli.out)?;
    runner::pool(cli.threads).install(|| match cli.command {
        Command::Validate => commands::cmd_validate(&ctx),
        Command::Effective => commands::cmd_effective(&ctx),
        Command::Simulate { mode } => commands::cmd_simulate(&ctx, mode),
        Command::Compare => commands::cmd_compare(&ctx),
        Command::Sec4 => commands::cmd_sec4(&ctx),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("locstat: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
