//! The `faultlens` pipeline: dataset generation, fault-injection campaigns,
//! model training, prediction and timing reports. Every stage reads and
//! writes files under one workspace directory, keyed by design id.

pub mod commands;
pub mod timing;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use faultlens::campaign::RateLabel;
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(name = "faultlens", version, about = "Fault-injection ground truth and GCN prediction for DMR designs")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Directory holding designs, campaigns, models and reports.
    #[arg(long, global = true, default_value = ".")]
    pub workspace: PathBuf,
    /// Dataset manifest; defaults to `<workspace>/manifest.json`.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
}

impl GlobalArgs {
    pub fn manifest_path(&self) -> PathBuf {
        self.manifest.clone().unwrap_or_else(|| self.workspace.join("manifest.json"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LabelArg {
    Cer,
    Der,
    Her,
    Ser,
}

impl From<LabelArg> for RateLabel {
    fn from(l: LabelArg) -> RateLabel {
        match l {
            LabelArg::Cer => RateLabel::Cer,
            LabelArg::Der => RateLabel::Der,
            LabelArg::Her => RateLabel::Her,
            LabelArg::Ser => RateLabel::Ser,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate diversified DMR designs and the dataset manifest.
    Generate {
        #[arg(long, default_value_t = 300)]
        count: usize,
        #[arg(long, default_value = "sbox_towerfield")]
        seed_circuit: String,
        /// Master seed of the dataset.
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Run SBF campaigns and derive DBF rates for every design.
    Campaign {
        #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
        jobs: u64,
        /// Re-run designs that already have labels.
        #[arg(long)]
        force: bool,
    },
    /// Train one model per label with k-fold selection.
    Train {
        /// Labels to train; all four when omitted.
        #[arg(long, value_enum)]
        label: Vec<LabelArg>,
        #[arg(long, default_value = "128", value_parser = clap::builder::PossibleValuesParser::new(["64", "128"]))]
        hidden: String,
        /// Seed of the split, initialisation and shuffling.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        max_epochs: usize,
        #[arg(long, default_value_t = 5)]
        folds: usize,
    },
    /// Predict a rate for one EDIF file or every `.edif` in a directory.
    Predict {
        path: PathBuf,
        /// Checkpoint; defaults to `<workspace>/models/<label>.json`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "der")]
        label: LabelArg,
    },
    /// Timing comparison of campaigns against training plus prediction.
    Report,
    /// Dump the watched signals of a fault-free run.
    Trace {
        path: PathBuf,
        #[arg(long, default_value_t = 0)]
        stimulus: u64,
        #[arg(long, default_value_t = 8)]
        cycles: usize,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Design(#[from] faultlens::designgen::DesignError),
    #[error(transparent)]
    Netlist(#[from] faultlens::netlist::NetlistError),
    #[error(transparent)]
    Sim(#[from] faultlens::sim::SimError),
    #[error(transparent)]
    Gnn(#[from] faultlens::gnn::GnnError),
    #[error("timings missing: {0}")]
    MissingTimings(String),
    #[error("{0}")]
    Invalid(String),
}

impl CliError {
    /// Short stable name for the machine-readable error line.
    pub fn kind(&self) -> &'static str {
        use faultlens::gnn::GnnError;
        match self {
            CliError::Io { .. } => "Io",
            CliError::Design(_) => "Design",
            CliError::Netlist(_) => "Netlist",
            CliError::Sim(_) => "Sim",
            CliError::Gnn(GnnError::DatasetTooSmall(_)) => "DatasetTooSmall",
            CliError::Gnn(GnnError::VocabularyMismatch(_)) => "VocabularyMismatch",
            CliError::Gnn(_) => "Model",
            CliError::MissingTimings(_) => "MissingTimings",
            CliError::Invalid(_) => "Invalid",
        }
    }

    /// `{"error": kind, "message": text}` on one line.
    pub fn json_line(&self) -> String {
        serde_json::json!({ "error": self.kind(), "message": self.to_string() }).to_string()
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let g = &cli.global;
    match cli.command {
        Command::Generate {
            count,
            ref seed_circuit,
            seed,
        } => commands::generate(g, count, seed_circuit, seed).map(|_| ()),
        Command::Campaign { jobs, force } => commands::campaign(g, jobs as usize, force).map(|_| ()),
        Command::Train {
            ref label,
            ref hidden,
            seed,
            max_epochs,
            folds,
        } => {
            let labels: Vec<RateLabel> = if label.is_empty() {
                RateLabel::ALL.to_vec()
            } else {
                label.iter().map(|&l| l.into()).collect()
            };
            let cfg = faultlens::gnn::TrainConfig {
                hidden_dim: hidden.parse().expect("validated by clap"),
                rng_seed: seed,
                max_epochs,
                k_folds: folds,
                ..Default::default()
            };
            commands::train(g, &labels, &cfg).map(|r| print!("{}", commands::r2_table(&r)))
        }
        Command::Predict {
            ref path,
            ref checkpoint,
            label,
        } => commands::predict(g, path, checkpoint.as_deref(), label.into()).map(|_| ()),
        Command::Report => commands::report(g).map(|_| ()),
        Command::Trace {
            ref path,
            stimulus,
            cycles,
        } => commands::trace(path, stimulus, cycles),
    }
}
