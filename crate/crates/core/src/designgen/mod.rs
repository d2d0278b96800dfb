//! Design-space generation: seed circuits, function-preserving structural
//! transforms, and lowering of replica pairs into DMR netlists.

use thiserror::Error;

use crate::netlist::NetlistError;

pub mod dataset;
pub mod ir;
pub mod lower;
pub mod seeds;
pub mod tower;
pub mod transforms;

pub use dataset::{generate_dataset, generate_design, DatasetManifest, GeneratedDesign, Labels, ManifestRow};
pub use ir::{check_equivalence, Equivalence, IrBuilder, IrDesign, IrOp};
pub use lower::make_dmr;
pub use seeds::{build_seed, SEED_NAMES};
pub use transforms::{apply_transforms, diversify, TransformSet};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DesignError {
    #[error("unknown seed circuit `{0}`")]
    UnknownSeed(String),
    #[error("invalid IR: {0}")]
    InvalidIr(String),
    #[error("invalid transform set: {0}")]
    InvalidTransform(String),
    #[error("replicas have different interfaces")]
    InterfaceMismatch,
    #[error("{0} input bits is too many for an exhaustive sweep")]
    InputSpaceTooLarge(usize),
    #[error("design {index}: replica {replica} differs from the seed at input {input:#x} (expected {expected:#x}, got {actual:#x})")]
    EquivalenceFailure {
        index: usize,
        replica: char,
        input: u64,
        expected: u64,
        actual: u64,
    },
    #[error("dataset must contain at least one design")]
    EmptyDataset,
    #[error(transparent)]
    Netlist(#[from] NetlistError),
    #[error("{0}")]
    Io(String),
    #[error("manifest: {0}")]
    Manifest(String),
}
