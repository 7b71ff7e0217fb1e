//! Command-line pipeline: corpus synthesis, feature extraction, GMM and
//! x-vector training, scoring, decision-level fusion and evaluation.
//!
//! Every stage reads and writes the documented file formats only, is
//! idempotent given identical inputs and seed, and exits non-zero with a
//! single `error[Code]: message` line on failure.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use commands::{
    EvaluateArgs, ExtractArgs, FuseArgs, ScoreArgs, SynthArgs, TrainGmmArgs, TrainXvectorArgs,
};
use config::FileConfig;

#[derive(Parser)]
#[command(
    name = "spoofdet",
    version,
    about = "Voice anti-spoofing toolkit: synthetic corpus, seven front-ends, GMM and x-vector back-ends, feature-switching fusion, EER / min t-DCF evaluation"
)]
struct Cli {
    /// Configuration file (`section.key = value` lines); flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads for data-parallel stages (default: all cores).
    /// Results do not depend on this value.
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the deterministic synthetic two-class corpus.
    SynthCorpus(SynthArgs),
    /// Extract features for one subset into an archive.
    Extract(ExtractArgs),
    /// Train the two-class GMM back-end (one mixture per class).
    TrainGmm(TrainGmmArgs),
    /// Train the x-vector network with focal loss.
    TrainXvector(TrainXvectorArgs),
    /// Score an archive with a trained back-end.
    Score(ScoreArgs),
    /// Decision-level feature switching over constituent score files.
    Fuse(FuseArgs),
    /// EER, min t-DCF and accuracy of score files against a protocol.
    Evaluate(EvaluateArgs),
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();

    if let Some(workers) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global() {
            eprintln!("error[Config]: cannot configure {workers} workers: {e}");
            std::process::exit(1);
        }
    }

    let file_config = match &cli.config {
        Some(path) => match FileConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error[{}]: {e}", e.code());
                std::process::exit(1);
            }
        },
        None => FileConfig::default(),
    };

    let result = match cli.command {
        Command::SynthCorpus(args) => commands::synth_corpus(args, &file_config),
        Command::Extract(args) => commands::extract(args, &file_config),
        Command::TrainGmm(args) => commands::train_gmm(args, &file_config),
        Command::TrainXvector(args) => commands::train_xvector(args, &file_config),
        Command::Score(args) => commands::score(args, &file_config),
        Command::Fuse(args) => commands::fuse(args, &file_config),
        Command::Evaluate(args) => commands::evaluate(args, &file_config),
    };

    if let Err(e) = result {
        eprintln!("error[{}]: {e}", e.code());
        std::process::exit(1);
    }
}
