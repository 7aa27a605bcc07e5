use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use tglab_cli::{parse_config, run_command, CliError, Command};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Cmd {
    Calibrate,
    EfsqSurface,
    FidelityHist,
    Compare,
    Grow,
    Verify,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Calibrate => Command::Calibrate,
            Cmd::EfsqSurface => Command::EfsqSurface,
            Cmd::FidelityHist => Command::FidelityHist,
            Cmd::Compare => Command::Compare,
            Cmd::Grow => Command::Grow,
            Cmd::Verify => Command::Verify,
        }
    }
}

/// Tilted graph states from mismatched cavities.
#[derive(Debug, Parser)]
#[command(name = "tglab", version)]
struct Args {
    command: Cmd,
    /// Experiment file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the file's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for CSV output.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn run(args: Args) -> Result<String, CliError> {
    let mut cfg = parse_config(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let outcome = run_command(args.command.into(), &cfg, &args.out)?;
    let mut text = outcome.summary;
    for f in &outcome.files {
        text.push_str(&format!("wrote {}\n", f.display()));
    }
    Ok(text)
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(args) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("tglab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
