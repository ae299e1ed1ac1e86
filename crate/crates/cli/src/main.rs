use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use landmark_core::pipeline::{self, Ablation, Command, Overrides, RunConfig, SweepAxis};

#[derive(Parser, Debug)]
#[command(
    name = "landmark",
    version,
    about = "Landmark discovery and multi-stream 3D CNN experiments on phantom cohorts"
)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,

    /// TOML file with run settings; unset keys take built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory shared by all steps of a run.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Number of streams (landmarks fed to the network).
    #[arg(long, global = true)]
    streams: Option<usize>,
    #[arg(long, global = true)]
    patch_size: Option<usize>,
    /// Train on all 27 jittered patch tuples per subject.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    augment: Option<bool>,
    /// Concatenate the six clinical biomarkers to the fused features.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    biomarkers: Option<bool>,
}

#[derive(Subcommand, Debug)]
enum Verb {
    /// Generate source and transfer phantom cohorts plus splits.
    Synth,
    /// Build the p-value map on the source training split and pick landmarks.
    Landmarks,
    /// Extract patch tuples and summarize their counts.
    Patches,
    /// Train the multi-stream model on the source task.
    Train,
    /// Fine-tune the source model's head on the transfer task.
    Finetune,
    /// Evaluate saved checkpoints on their test splits.
    Evaluate,
    /// Retrain across a range of stream counts or patch sizes.
    Sweep {
        #[arg(long, value_enum)]
        axis: AxisArg,
    },
    /// Compare the fine-tuned model against an ablated variant.
    Ablate {
        #[arg(long, value_enum)]
        which: WhichArg,
    },
    /// Write report.md from the tables recorded in the ledger.
    Report,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AxisArg {
    Streams,
    #[value(name = "patch_size", alias = "patch-size")]
    PatchSize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum WhichArg {
    NoTransfer,
    SingleStream,
}

impl Verb {
    fn command(&self) -> Command {
        match self {
            Verb::Synth => Command::Synth,
            Verb::Landmarks => Command::Landmarks,
            Verb::Patches => Command::Patches,
            Verb::Train => Command::Train,
            Verb::Finetune => Command::Finetune,
            Verb::Evaluate => Command::Evaluate,
            Verb::Sweep { axis: AxisArg::Streams } => Command::Sweep(SweepAxis::Streams),
            Verb::Sweep { axis: AxisArg::PatchSize } => Command::Sweep(SweepAxis::PatchSize),
            Verb::Ablate { which: WhichArg::NoTransfer } => Command::Ablate(Ablation::NoTransfer),
            Verb::Ablate { which: WhichArg::SingleStream } => Command::Ablate(Ablation::SingleStream),
            Verb::Report => Command::Report,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let loaded = match &cli.config {
        Some(path) => RunConfig::load(path),
        None => Ok(RunConfig::default()),
    };
    let mut cfg = match loaded {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(pipeline::exit_code(&e) as u8);
        }
    };
    cfg.apply(&Overrides {
        seed: cli.seed,
        out: cli.out.clone(),
        streams: cli.streams,
        patch_size: cli.patch_size,
        augment: cli.augment,
        biomarkers: cli.biomarkers,
    });
    match pipeline::run(cli.verb.command(), &cfg) {
        Ok(res) => {
            for line in &res.summary {
                println!("{line}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(pipeline::exit_code(&e) as u8)
        }
    }
}
