//! Command-line front end: profiles, overrides and subcommands.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use petri_dish::Error;

#[derive(Parser, Debug)]
#[command(name = "petri", version, about = "Synthetic Petri Dish experiments")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Named defaults: desk-scale, table2 or table4.
    #[arg(long, global = true, default_value = "desk-scale")]
    pub profile: String,
    /// JSON file merged over the profile.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// `dotted.key=value` override (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Parallel ground-truth evaluations (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Print the resolved configuration and exit.
    #[arg(long, global = true)]
    pub dry_run: bool,
    /// Append-only ground-truth cache (JSON lines).
    #[arg(long, global = true)]
    pub cache: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Task {
    MnistSlope,
    CharLm,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Space {
    Slope,
    Cell,
}

/// Which motifs to operate on.
#[derive(Args, Debug, Clone)]
pub struct MotifArgs {
    /// Comma-separated slopes.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub slopes: Vec<f64>,
    /// Evenly spaced slopes over the study's grid range.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Random cell encodings drawn from the seed.
    #[arg(long)]
    pub random_cells: Option<usize>,
    /// JSON array of motifs.
    #[arg(long)]
    pub motifs: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Evaluate motifs on a ground-truth task and write a ledger.
    GroundTruth {
        #[arg(long, value_enum)]
        task: Task,
        #[command(flatten)]
        motifs: MotifArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a Petri dish on a ledger, or query a trained one.
    Petri {
        #[command(subcommand)]
        action: PetriAction,
    },
    /// Train the slope regressor on a ledger and predict a grid.
    Baseline {
        #[arg(long)]
        ledger: PathBuf,
        /// Predict on this many evenly spaced slopes.
        #[arg(long, default_value_t = 50)]
        grid: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Surrogate-assisted search with one or more arms on paired seeds.
    Search {
        #[arg(long, value_enum, default_value = "cell")]
        space: Space,
        #[arg(long, value_delimiter = ',', default_value = "petri-ga,random-select")]
        arms: Vec<String>,
        /// Paired runs with seeds `seed, seed+1, ..`.
        #[arg(long, default_value_t = 1)]
        runs: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full slope study: ground truth, Petri dish, ablation and baseline.
    SlopeStudy {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
pub enum PetriAction {
    Train {
        #[arg(long)]
        ledger: PathBuf,
        /// Skip the outer loop and keep the random synthetic data.
        #[arg(long)]
        ablation_random_data: bool,
        #[arg(long)]
        out: PathBuf,
    },
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        motifs: MotifArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Process exit status for an error: 2 configuration, 3 numeric divergence,
/// 4 data unavailable, 1 anything else.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::NonFiniteLoss(_) | Error::NonFiniteGradient { .. } => 3,
                Error::DataUnavailable(_) => 4,
                Error::InvalidArgument(_) | Error::DegenerateVariance(_) | Error::MixedVariants => 2,
                _ => 1,
            };
        }
        if cause.downcast_ref::<serde_json::Error>().is_some() || cause.downcast_ref::<clap::Error>().is_some() {
            return 2;
        }
    }
    if commands::is_config_error(err) {
        2
    } else {
        1
    }
}

