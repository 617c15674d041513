use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use egomkl::{DescriptorKind, Error, KernelKind, Method};

mod commands;
mod inspect;

#[derive(Parser, Debug)]
#[command(name = "egomkl", version, about = "Activity recognition from first-person video with multiple kernel learning")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand. Values given here override the
/// configuration file.
#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// JSON run configuration; every field is optional.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice of the stage.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Descriptor types, comma separated (hof, logc, cuboid).
    #[arg(long, global = true, value_delimiter = ',', value_parser = parse_kind)]
    pub features: Option<Vec<DescriptorKind>>,
    /// Classifier: single, multichannel, simple_mkl or boost_mkl.
    #[arg(long, global = true, value_parser = parse_method)]
    pub method: Option<Method>,
    /// Kernel: gaussian, h_int, dc_int or jpl_int.
    #[arg(long, global = true, value_parser = parse_kernel)]
    pub kernel: Option<KernelKind>,
    /// Number of random train/test splits.
    #[arg(long, global = true)]
    pub repeats: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render the synthetic dataset: videos plus manifest.json.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract descriptors for every video of a manifest.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        /// Directory receiving <video_id>.<type>.dsc files.
        #[arg(long)]
        out: PathBuf,
    },
    /// Cluster extracted descriptors into one codebook per type.
    Codebook {
        #[arg(long)]
        manifest: PathBuf,
        /// Directory holding the .dsc files written by `extract`.
        #[arg(long)]
        descriptors: PathBuf,
        /// Vocabulary size per type.
        #[arg(long)]
        words: Option<usize>,
        /// Directory receiving <type>.cbk files.
        #[arg(long)]
        out: PathBuf,
    },
    /// Encode every video as a concatenated word histogram.
    Encode {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        descriptors: PathBuf,
        #[arg(long)]
        codebooks: PathBuf,
        /// Histogram file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a classifier on encoded videos, labels taken from the manifest.
    Train {
        #[arg(long)]
        histograms: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Model file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the repeated random-split protocol and write report.json and
    /// confusion.csv.
    Evaluate {
        /// Dataset manifest; the synthetic dataset of the configuration is
        /// rendered in memory when omitted.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a readable summary of any artifact file.
    Inspect { path: PathBuf },
}

fn parse_kind(s: &str) -> Result<DescriptorKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_kernel(s: &str) -> Result<KernelKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn exit_code(err: &Error) -> u8 {
    match err.root() {
        Error::Validation(_) | Error::Config(_) | Error::Domain(_) => 1,
        Error::Io { .. } | Error::Format { .. } | Error::Corruption { .. } => 2,
        Error::Convergence(_) | Error::Training(_) => 3,
        Error::Repeat { .. } => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Synth { out } => commands::synth(&cli.common, &out),
        Command::Extract { manifest, out } => commands::extract(&cli.common, &manifest, &out),
        Command::Codebook { manifest, descriptors, words, out } => {
            commands::codebook(&cli.common, &manifest, &descriptors, words, &out)
        }
        Command::Encode { manifest, descriptors, codebooks, out } => {
            commands::encode(&cli.common, &manifest, &descriptors, &codebooks, &out)
        }
        Command::Train { histograms, manifest, out } => commands::train(&cli.common, &histograms, &manifest, &out),
        Command::Evaluate { manifest, out } => commands::evaluate(&cli.common, manifest.as_deref(), &out),
        Command::Inspect { path } => inspect::inspect(&path),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
