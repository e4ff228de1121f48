//! `wavemix`: train, verify, cost and bench commands.

mod commands;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use wavemix::Error;

#[derive(Parser)]
#[command(name = "wavemix", version, about = "Wavelet token mixing for vision transformers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write metrics, a checkpoint and a report.
    Train(RunArgs),
    /// Run every module's invariant suite.
    Verify(VerifyArgs),
    /// Parameter and FLOP counts, measured and closed-form.
    Cost(RunArgs),
    /// Time mixer forward passes across token counts.
    Bench(BenchArgs),
}

/// Settings shared by commands that resolve a run config.
/// Precedence: flag, then `--set`, then config file, then defaults.
#[derive(Args, Debug, Default)]
pub struct RunArgs {
    #[arg(long)]
    config: Option<std::path::PathBuf>,
    #[arg(long)]
    mixer: Option<String>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    subset: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    data_root: Option<std::path::PathBuf>,
    #[arg(long)]
    out: Option<std::path::PathBuf>,
    #[arg(long)]
    patch: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Any config key, as `key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FaultArg {
    FlipHaarTap,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Restrict to one module's suite.
    #[arg(long)]
    only: Option<String>,
    #[arg(long, hide = true)]
    inject_fault: Option<FaultArg>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Hidden size.
    #[arg(long, default_value_t = 64)]
    d: usize,
    /// Token counts; each must be a perfect square with an even side.
    #[arg(long, value_delimiter = ',', default_values_t = [64, 256, 1024, 4096])]
    sizes: Vec<usize>,
    /// Mixers to time.
    #[arg(long, value_delimiter = ',', default_values_t = ["mwa".to_string(), "sa".to_string(), "gfn".to_string()])]
    mixers: Vec<String>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Shape(_) | Error::Usage(_) => 2,
        Error::Data(_) | Error::Format { .. } | Error::Io(_) => 3,
        Error::Numerical(_) => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => commands::train(&a),
        Command::Cost(a) => commands::cost(&a),
        Command::Bench(a) => commands::bench(&a),
        Command::Verify(a) => {
            let fault = a.inject_fault.map(|f| match f {
                FaultArg::FlipHaarTap => wavemix::verify::Fault::FlipHaarTap,
            });
            commands::verify(a.only, fault)
        }
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
