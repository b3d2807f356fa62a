//! Command-line front end. [`run`] is the whole program; `main` only
//! forwards `argv` and exits with the returned code, so integration tests
//! drive the binary in-process.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use crate::config::ConfigError;
use crate::detector::REPORT_CSV_HEADER;
use crate::embed::{EmbedAlgorithm, EmbedConfig};
use crate::ensemble::EcConfig;
use crate::features::FeatureConfig;
use crate::harness::{
    cmd_changestats, cmd_detect, cmd_embed, cmd_experiment, cmd_features, cmd_synth, cmd_train,
    HarnessError,
};
use crate::synth::SourceParams;

#[derive(Parser)]
#[command(
    name = "stegoscope",
    version,
    about = "LSB steganalysis with a label-free reliability check"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cover corpus
    Synth {
        /// Source preset: source-a or source-b
        #[arg(long)]
        source: String,
        #[arg(long, default_value_t = 50)]
        count: usize,
        #[arg(long, default_value_t = 128)]
        width: u32,
        #[arg(long, default_value_t = 128)]
        height: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Embed a random message into every image of a directory
    Embed {
        /// Directory of cover PGMs
        #[arg(long, value_name = "DIR")]
        input: PathBuf,
        /// lsbm or hill
        #[arg(long)]
        algorithm: String,
        /// Payload in bits per pixel
        #[arg(long)]
        rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Count per-image pixel changes between two directories
    Changestats {
        #[arg(long, value_name = "DIR")]
        a: PathBuf,
        #[arg(long, value_name = "DIR")]
        b: PathBuf,
        /// CSV file; stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Extract feature vectors from a directory into a CSV
    Features {
        #[arg(long, value_name = "DIR")]
        input: PathBuf,
        /// Constant label column value
        #[arg(long)]
        label: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the paired detector models from a cover directory
    Train {
        #[arg(long, value_name = "DIR")]
        covers: PathBuf,
        /// Embedding the detector should assume: lsbm or hill
        #[arg(long)]
        algorithm: String,
        #[arg(long)]
        rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 51)]
        learners: usize,
        /// Feature-subset size per learner (default: min(200, dimension))
        #[arg(long)]
        subspace: Option<usize>,
        /// Model directory to create
        #[arg(long)]
        out: PathBuf,
    },
    /// Analyze an unlabeled directory with trained models
    Detect {
        /// Model directory from `train` or `experiment`
        #[arg(long, value_name = "DIR")]
        models: PathBuf,
        #[arg(long, value_name = "DIR")]
        images: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a full experiment described by a config file
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides run.out from the config
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `argv` and runs one command, returning the process exit code.
/// Failures print a single `error: ...` line to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn parse_embed(algorithm: &str, rate: f64) -> Result<EmbedConfig, HarnessError> {
    Ok(EmbedConfig::new(EmbedAlgorithm::parse(algorithm)?, rate)?)
}

fn dispatch(command: Command) -> Result<(), HarnessError> {
    match command {
        Command::Synth {
            source,
            count,
            width,
            height,
            seed,
            out,
        } => {
            let params = SourceParams::preset(&source).ok_or_else(|| {
                ConfigError::Invalid(format!(
                    "unknown source preset `{source}` (expected source-a or source-b)"
                ))
            })?;
            cmd_synth(&params, count, width, height, seed, &out)?;
            println!("wrote {count} covers to {}", out.display());
            Ok(())
        }
        Command::Embed {
            input,
            algorithm,
            rate,
            seed,
            out,
        } => {
            let cfg = parse_embed(&algorithm, rate)?;
            let n = cmd_embed(&input, &cfg, seed, &out)?;
            println!("embedded {n} images into {}", out.display());
            Ok(())
        }
        Command::Changestats { a, b, out } => {
            let csv = cmd_changestats(&a, &b)?;
            match out {
                Some(path) => std::fs::write(&path, csv).map_err(|source| HarnessError::Io {
                    path,
                    source,
                })?,
                None => print!("{csv}"),
            }
            Ok(())
        }
        Command::Features { input, label, out } => {
            let n = cmd_features(&input, &FeatureConfig::default(), label.as_deref(), &out)?;
            println!("extracted {n} feature rows to {}", out.display());
            Ok(())
        }
        Command::Train {
            covers,
            algorithm,
            rate,
            seed,
            learners,
            subspace,
            out,
        } => {
            let embed_cfg = parse_embed(&algorithm, rate)?;
            let features = FeatureConfig::default();
            let mut ec = EcConfig::for_dimension(features.dimension());
            ec.learners = learners;
            if let Some(d) = subspace {
                ec.subspace = d;
            }
            cmd_train(&covers, &embed_cfg, &features, &ec, seed, &out)?;
            println!("saved models to {}", out.display());
            Ok(())
        }
        Command::Detect {
            models,
            images,
            seed,
            out,
        } => {
            let report = cmd_detect(&models, &images, seed, &out)?;
            println!("{REPORT_CSV_HEADER}");
            println!("{}", report.csv_row());
            if report.n == 1 {
                eprintln!("warning: n=1: prediction informational only");
            }
            Ok(())
        }
        Command::Experiment { config, out } => {
            let (out_dir, report) = cmd_experiment(&config, out.as_deref())?;
            println!("{REPORT_CSV_HEADER}");
            println!("{}", report.csv_row());
            println!("outputs in {}", out_dir.display());
            Ok(())
        }
    }
}
