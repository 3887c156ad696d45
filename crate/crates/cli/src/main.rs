mod ablate;
mod config;
mod eval;
mod gen;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "handmotion", version, about = "Adversarial motion priors for semi-supervised hand pose estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with a manifest.
    GenData(gen::GenArgs),
    /// Pretrain, train with the chosen objective, and evaluate.
    Train(train::TrainArgs),
    /// Run an ablation grid and tabulate the results.
    Ablate(ablate::AblateArgs),
    /// Evaluate a checkpoint, optionally against a second one.
    Eval(eval::EvalArgs),
}

/// Boolean flag spelled `on` or `off`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

impl From<Switch> for bool {
    fn from(s: Switch) -> bool {
        s == Switch::On
    }
}

#[derive(Args, Debug, Clone)]
pub struct ConfigArg {
    /// TOML configuration file; flags take precedence over its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

const EXIT_OTHER: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_DIVERGENCE: u8 = 3;
const EXIT_IO: u8 = 4;

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<handmotion::Error>() {
            return match e {
                handmotion::Error::Divergence(_) | handmotion::Error::NonFinite(_) => EXIT_DIVERGENCE,
                handmotion::Error::Io(_) => EXIT_IO,
                handmotion::Error::Config(_)
                | handmotion::Error::Format(_)
                | handmotion::Error::Architecture(_)
                | handmotion::Error::TooShort { .. }
                | handmotion::Error::Shape(_) => EXIT_VALIDATION,
                _ => EXIT_OTHER,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return EXIT_IO;
        }
        if cause.downcast_ref::<toml::de::Error>().is_some() || cause.downcast_ref::<config::Invalid>().is_some() {
            return EXIT_VALIDATION;
        }
    }
    EXIT_OTHER
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(a) => gen::run(a),
        Command::Train(a) => train::run(a),
        Command::Ablate(a) => ablate::run(a),
        Command::Eval(a) => eval::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
