//! Command-line pipeline: data generation, training, inference, evaluation,
//! and SVG export for raster-to-vector floorplan models.

mod commands;
mod config;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use commands::EvalPolicy;

#[derive(Parser)]
#[command(name = "floorvec", version, about = "Raster-to-vector floorplan pipeline")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

/// Flags shared by every configurable subcommand.
#[derive(Args)]
struct ConfigArgs {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config value, e.g. --set train.epochs=50. Repeatable;
    /// overrides win over the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Master random seed; overrides the seeds in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic floorplan dataset.
    GenData {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Number of records to generate.
        #[arg(long)]
        count: usize,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a generated dataset.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Dataset directory from gen-data.
        #[arg(long)]
        data: PathBuf,
        /// Output directory for the checkpoint, log, and effective config.
        #[arg(long)]
        out: PathBuf,
        /// Evaluate free-running generation every N epochs and keep the
        /// best-scoring weights; 0 keeps the final weights.
        #[arg(long, default_value_t = 0, value_name = "N")]
        eval_every: usize,
        /// Cap the number of records used by each periodic evaluation.
        #[arg(long, value_name = "N")]
        eval_count: Option<usize>,
        /// Stop once periodic evaluation reaches this room F1.
        #[arg(long, value_name = "F1")]
        stop_room_f1: Option<f64>,
        /// Additionally require this corner F1 before stopping.
        #[arg(long, value_name = "F1")]
        stop_corner_f1: Option<f64>,
    },
    /// Generate predictions for every image of a dataset.
    Infer {
        /// Trained checkpoint file.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset directory whose images to vectorize.
        #[arg(long)]
        data: PathBuf,
        /// Output directory for prediction JSON files.
        #[arg(long)]
        out: PathBuf,
        /// Also write an SVG rendering per prediction.
        #[arg(long)]
        svg: bool,
    },
    /// Score predictions against ground truth (matched by file stem).
    Eval {
        /// Directory of prediction JSON files.
        #[arg(long)]
        pred: PathBuf,
        /// Ground-truth directory: a dataset or a directory of JSON files.
        #[arg(long)]
        gt: PathBuf,
        /// Write the full report JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render floorplan JSON to SVG.
    ExportSvg {
        /// A floorplan JSON file or a directory of them.
        #[arg(long)]
        input: PathBuf,
        /// Output directory for the SVG files.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::GenData { cfg, count, out } => {
            let mut app = config::load_config(cfg.config.as_deref(), &cfg.set)?;
            if let Some(seed) = cfg.seed {
                app.generator.seed = seed;
            }
            commands::gen_data(&app, count, &out)
        }
        Cmd::Train { cfg, data, out, eval_every, eval_count, stop_room_f1, stop_corner_f1 } => {
            let mut app = config::load_config(cfg.config.as_deref(), &cfg.set)?;
            if let Some(seed) = cfg.seed {
                app.train.seed = seed;
            }
            let policy =
                EvalPolicy { every: eval_every, count: eval_count, stop_room_f1, stop_corner_f1 };
            commands::train(&app, &data, &out, &policy)
        }
        Cmd::Infer { checkpoint, data, out, svg } => commands::infer(&checkpoint, &data, &out, svg),
        Cmd::Eval { pred, gt, out } => commands::eval(&pred, &gt, out.as_deref()).map(|_| ()),
        Cmd::ExportSvg { input, out } => commands::export(&input, &out),
    }
}
