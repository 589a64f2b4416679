use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gradguard_harness::config::{parse_flags, Settings, ALIASES};
use gradguard_harness::drivers;

const AFTER_HELP: &str = "\
Settings are dotted keys such as train.lambda1 or data.name. Set them in a
flat TOML file passed with --config, or on the command line as
--train.lambda1 1000 (or --train.lambda1=1000). Flags win over the file.

Short flags: --dataset (data.name), --lambda1 (train.lambda1),
--epochs (train.epochs), --seed, --cutoff, --out.

Exit status: 0 on success, 1 on a usage or configuration error,
2 when a run fails.";

#[derive(Parser)]
#[command(name = "gradguard", version, about = "Train and explain explanation-constrained classifiers", after_help = AFTER_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Flat TOML config file.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Setting overrides: --<key> <value> or --<key>=<value>.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "SETTINGS")]
    settings: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the resolved train/test pair as portable dataset files.
    GenData(Common),
    /// Train one model; writes a checkpoint and the loss history.
    Train(Common),
    /// Input-gradient explanations and masks on the test set.
    Explain(Common),
    /// Local surrogate explanations compared against input gradients.
    Surrogate(Common),
    /// Find-another-explanation loop.
    Fae(Common),
    /// Time surrogate and gradient explanations.
    Bench(Common),
    /// Train across a λ1 grid and record loss-term magnitudes.
    LambdaSweep(Common),
    /// Toy Color accuracy against training set size per annotation mask.
    DataEfficiency(Common),
    /// Gradient field of a 2D classifier on a dense grid.
    BoundaryField(Common),
    /// Accuracy with and without annotating a known confound.
    ConfoundReport(Common),
}

impl Command {
    fn split(self) -> (&'static str, Common) {
        match self {
            Command::GenData(c) => ("gen-data", c),
            Command::Train(c) => ("train", c),
            Command::Explain(c) => ("explain", c),
            Command::Surrogate(c) => ("surrogate", c),
            Command::Fae(c) => ("fae", c),
            Command::Bench(c) => ("bench", c),
            Command::LambdaSweep(c) => ("lambda-sweep", c),
            Command::DataEfficiency(c) => ("data-efficiency", c),
            Command::BoundaryField(c) => ("boundary-field", c),
            Command::ConfoundReport(c) => ("confound-report", c),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let (command, common) = cli.command.split();
    let result = parse_flags(&common.settings)
        .and_then(|flags| Settings::load(command, common.config.as_deref(), &flags))
        .and_then(|settings| drivers::run(command, &settings));
    match result {
        Ok(dir) => {
            println!("{command}: wrote {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("gradguard {command}: {e}");
            if e.exit_code() == 1 {
                let aliases: Vec<String> = ALIASES.iter().map(|(a, k)| format!("--{a} ({k})")).collect();
                eprintln!("usage: gradguard {command} [--config FILE] [--<key> <value>]...");
                eprintln!("short flags: {}", aliases.join(", "));
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
