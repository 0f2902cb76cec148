mod commands;
mod text;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "gsneck",
    version,
    about = "Global semantic neck blocks: forward, verification and cost analysis"
)]
struct Cli {
    /// Report format on stdout.
    #[arg(long, value_enum, default_value_t = Format::Text, global = true)]
    format: Format,
    /// Echo every configuration default that was filled in.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Targets {
    FasterRcnn,
    Retinanet,
    Both,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Block {
    Neck,
    Baseline,
    Gsnet,
    Frm,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DTypeArg {
    F32,
    F64,
}

#[derive(Subcommand)]
pub enum Command {
    /// Layer table with parameter and MAC counts at the configured resolution.
    Describe {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the enhanced neck and write one tensor file per level.
    Forward {
        #[arg(long)]
        config: PathBuf,
        /// Input base path; level i is read from `<stem>_L<i>.<ext>`.
        /// Synthetic features are used when omitted.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Output base path; level i is written to `<stem>_L<i>.<ext>`.
        #[arg(long)]
        out: PathBuf,
        /// Write only this level (1-based).
        #[arg(long)]
        level: Option<usize>,
        /// Set every weight and bias to zero.
        #[arg(long)]
        zero_init: bool,
        /// Element type for synthetic inputs.
        #[arg(long, value_enum, default_value_t = DTypeArg::F32)]
        dtype: DTypeArg,
    },
    /// Central-difference gradient check in f64. Exits 2 on failure.
    Gradcheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long, value_enum, default_value_t = Block::Neck)]
        block: Block,
    },
    /// Gradient-magnitude map of one output unit with respect to its level's input.
    Erf {
        #[arg(long)]
        config: PathBuf,
        /// 1-based pyramid level.
        #[arg(long)]
        level: usize,
        /// Output coordinate as `y,x`.
        #[arg(long)]
        coord: String,
        #[arg(long, default_value_t = 0)]
        channel: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Search block configurations against the published complexity deltas.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = Targets::Both)]
        targets: Targets,
    },
    /// Time the enhanced neck forward pass.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        warmup: Option<usize>,
    },
    /// Write synthetic backbone features, one file per level.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = DTypeArg::F32)]
        dtype: DTypeArg,
    },
}

/// Exit statuses: 0 success, 1 user error, 2 verification failure.
pub enum Outcome {
    Ok,
    VerificationFailed,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(cli.command, cli.format, cli.verbose) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::VerificationFailed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
