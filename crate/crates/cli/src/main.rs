//! `dscl` — contrastive losses, label-noise analysis and desk-scale
//! training experiments from the command line.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use dscl_core::noise::NoiseSpec;
use dscl_core::similarity::JsdMode;
use dscl_core::synth::{NoiseMechanism, SyntheticDatasetSpec, DEFAULT_CONFUSABLE_TEMPERATURE};

use commands::DataFormat;

#[derive(Parser)]
#[command(
    name = "dscl",
    version,
    about = "Debiased supervised contrastive learning toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum MechanismArg {
    Symmetric,
    Confusable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum JsdModeArg {
    Pooled,
    PerAssignedClass,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form and Monte Carlo pair mislabeling rates under symmetric
    /// label noise.
    AnalyzeNoise {
        #[arg(long)]
        classes: usize,
        #[arg(long)]
        error_rate: f64,
        /// Also simulate this many pairs.
        #[arg(long)]
        simulate: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Omit the timestamp field for byte-stable outputs.
        #[arg(long)]
        no_timestamp: bool,
    },
    /// Generate a synthetic labeled dataset on the unit sphere.
    GenerateData {
        #[arg(long)]
        classes: usize,
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        per_class: usize,
        /// Within-class vMF concentration.
        #[arg(long)]
        kappa: f64,
        #[arg(long)]
        error_rate: f64,
        #[arg(long, value_enum, default_value_t = MechanismArg::Symmetric)]
        mechanism: MechanismArg,
        #[arg(long, default_value_t = DEFAULT_CONFUSABLE_TEMPERATURE)]
        confusable_temperature: f64,
        /// Similarity temperature stored with the embeddings.
        #[arg(long, default_value_t = 0.5)]
        temperature: f64,
        #[arg(long)]
        centroid_seed: u64,
        #[arg(long)]
        sample_seed: u64,
        #[arg(long)]
        noise_seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = DataFormat::Bin)]
        format: DataFormat,
    },
    /// Pair-similarity histograms per category plus the JSD table.
    Similarity {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long, default_value_t = 50)]
        bins: usize,
        /// Temperature to attach to the loaded embeddings.
        #[arg(long, default_value_t = 0.5)]
        temperature: f64,
        #[arg(long, value_enum, default_value_t = JsdModeArg::Pooled)]
        mode: JsdModeArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        no_timestamp: bool,
    },
    /// Train every configured loss over several seeds and compare probes.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides output.directory from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        no_timestamp: bool,
    },
    /// Verify analytic gradients against central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
        #[arg(long, default_value_t = 1e-5)]
        tolerance: f64,
        /// Random batches per (size, dim) cell.
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long)]
        json: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::AnalyzeNoise {
            classes,
            error_rate,
            simulate,
            seed,
            out,
            no_timestamp,
        } => {
            commands::analyze_noise(classes, error_rate, simulate, seed, out, no_timestamp)?;
            Ok(true)
        }
        Command::GenerateData {
            classes,
            dim,
            per_class,
            kappa,
            error_rate,
            mechanism,
            confusable_temperature,
            temperature,
            centroid_seed,
            sample_seed,
            noise_seed,
            out,
            format,
        } => {
            let spec = SyntheticDatasetSpec {
                num_classes: classes,
                dim,
                samples_per_class: per_class,
                concentration: kappa,
                centroid_seed,
                sample_seed,
                noise_seed,
                noise: NoiseSpec::new(classes, error_rate)?,
                noise_mechanism: match mechanism {
                    MechanismArg::Symmetric => NoiseMechanism::Symmetric,
                    MechanismArg::Confusable => NoiseMechanism::ConfusableBySimilarity,
                },
                confusable_temperature,
                temperature,
            };
            commands::generate_data(spec, out, format)?;
            Ok(true)
        }
        Command::Similarity {
            embeddings,
            bins,
            temperature,
            mode,
            out,
            no_timestamp,
        } => {
            let mode = match mode {
                JsdModeArg::Pooled => JsdMode::Pooled,
                JsdModeArg::PerAssignedClass => JsdMode::PerAssignedClass,
            };
            commands::similarity(embeddings, bins, temperature, mode, out, no_timestamp)?;
            Ok(true)
        }
        Command::Simulate {
            config,
            out,
            no_timestamp,
        } => {
            commands::simulate(config, out, no_timestamp)?;
            Ok(true)
        }
        Command::Gradcheck {
            step,
            tolerance,
            seeds,
            json,
            out,
        } => commands::gradcheck(step, tolerance, seeds, json, out),
    }
}

/// Exit codes: 0 success, 1 check failure, 2 invalid configuration or usage,
/// 3 I/O failure, 4 non-finite loss.
fn exit_code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(core) = cause.downcast_ref::<dscl_core::Error>() {
            return match core {
                dscl_core::Error::Io(_) => 3,
                dscl_core::Error::NonFiniteLoss { .. } => 4,
                _ => 2,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 3;
        }
        if cause.downcast_ref::<serde_json::Error>().is_some() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
