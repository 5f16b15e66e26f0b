//! Command-line front end for `motionsync`: data generation, training,
//! descriptor extraction, evaluation and filter visualisation.
//!
//! The binary is a thin wrapper around [`run`]; the per-command logic in
//! [`commands`] is usable directly from tests and other tools.

pub mod commands;
pub mod config;
pub mod viz;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use motionsync::bundle::{load_dataset, ModelBundle};

pub use commands::{DataKind, ModelKind};
pub use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "motionsync", version, about = "Learn motion features by synchrony detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    GenData {
        #[arg(long, value_enum)]
        kind: DataKind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Fit whitening and a feature model on a dataset.
    Train {
        #[arg(long, value_enum)]
        model: ModelKind,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Compute per-video descriptors and word histograms.
    Extract {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        videos: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Fit pooling, descriptor PCA and vocabulary on these videos and
        /// write the completed model to OUT/model.
        #[arg(long)]
        fit_codebook: bool,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Classify extracted histograms with chi-squared k-NN.
    Eval {
        /// Feature directory written by `extract`.
        #[arg(long)]
        train: PathBuf,
        #[arg(long, conflicts_with = "loo", required_unless_present = "loo")]
        test: Option<PathBuf>,
        /// Leave-one-out over the training features.
        #[arg(long)]
        loo: bool,
        /// Directory for CSV reports and kernel matrices.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Write learned filters as a PGM mosaic.
    VizFilters {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Video dataset whose sub blocks decide pooling-group membership;
        /// switches to the per-group top-6 mosaic.
        #[arg(long)]
        pooling: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> anyhow::Result<RunConfig> {
    Ok(RunConfig::load_or_default(path)?)
}

fn load_bundle(dir: &Path) -> anyhow::Result<ModelBundle> {
    ModelBundle::load(dir).with_context(|| format!("{} is not a model bundle", dir.display()))
}

/// Execute one command, returning the lines it reports on stdout.
pub fn run(cli: Cli) -> anyhow::Result<Vec<String>> {
    let mut out = Vec::new();
    match cli.command {
        Command::GenData { kind, out: dir, config } => {
            let cfg = load_config(config.as_deref())?;
            let data = commands::gen_data(kind, &dir, &cfg)?;
            out.push(format!("wrote {} {} samples to {}", data.len(), kind.name(), dir.display()));
        }
        Command::Train { model, data, out: dir, config } => {
            let cfg = load_config(config.as_deref())?;
            let (ds, _) = load_dataset(&data).with_context(|| format!("reading dataset {}", data.display()))?;
            let trained = commands::train_to_dir(model, &ds, &dir, &cfg)?;
            out.push(format!(
                "trained {} ({} units, {} whitened dims) into {}",
                trained.bundle.model.kind(),
                cfg.model_units,
                trained.bundle.whitening.as_ref().map_or(0, |w| w.retained_dims()),
                dir.display()
            ));
            if let Some(last) = trained.trace_csv.lines().last() {
                out.push(format!("final epoch: {last}"));
            }
        }
        Command::Extract {
            model,
            videos,
            out: dir,
            fit_codebook,
            config,
        } => {
            let cfg = load_config(config.as_deref())?;
            let mut bundle = load_bundle(&model)?;
            let (ds, _) = load_dataset(&videos).with_context(|| format!("reading videos {}", videos.display()))?;
            let features = commands::extract(&mut bundle, &ds, &cfg, fit_codebook)?;
            commands::save_features(&dir, &features, bundle.model.kind())?;
            if fit_codebook {
                bundle.save(dir.join("model"))?;
                out.push(format!("fitted model written to {}", dir.join("model").display()));
            }
            out.push(format!("extracted {} videos into {}", features.histograms.len(), dir.display()));
        }
        Command::Eval {
            train,
            test,
            loo,
            out: dir,
            config,
        } => {
            let cfg = load_config(config.as_deref())?;
            let tr = commands::load_features(&train)?;
            let te = test.as_deref().map(commands::load_features).transpose()?;
            if te.is_none() && !loo {
                bail!("pass --test PATH or --loo");
            }
            let ev = commands::evaluate(&tr, te.as_ref(), &cfg)?;
            let protocol = if loo { "loo" } else { "split" };
            commands::save_evaluation(&dir, &ev, protocol)?;
            out.push(format!("accuracy {:.4} ({protocol}, {} items)", ev.report.accuracy, ev.report.predictions.len()));
        }
        Command::VizFilters {
            model,
            out: path,
            pooling,
            config,
        } => {
            let cfg = load_config(config.as_deref())?;
            let bundle = load_bundle(&model)?;
            let videos = pooling
                .as_deref()
                .map(|p| load_dataset(p).map(|d| d.0).with_context(|| format!("reading videos {}", p.display())))
                .transpose()?;
            let img = commands::viz_filters(&bundle, videos.as_ref(), &cfg)?;
            std::fs::write(&path, img.to_pgm()).with_context(|| format!("writing {}", path.display()))?;
            out.push(format!("wrote {}x{} mosaic to {}", img.width, img.height, path.display()));
        }
    }
    Ok(out)
}
