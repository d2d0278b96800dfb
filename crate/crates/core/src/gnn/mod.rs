//! Graph-convolutional regressor: three GCN layers with ReLU, global max
//! pooling and a linear head, trained with MSE and k-fold selection.

use thiserror::Error;

pub mod checkpoint;
pub mod layer;
pub mod model;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use layer::{gcn_layer, NormAdjacency};
pub use model::{predict, GcnModel, LabelTransform, Params, PreparedGraph};
pub use train::{
    fit, lr_schedule_step, r_squared, train_kfold, FoldReport, FoldResult, PlateauScheduler, TrainConfig,
    TrainSample,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GnnError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("need at least 20 labelled designs, got {0}")]
    DatasetTooSmall(usize),
    #[error("truths have zero variance")]
    DegenerateTruths,
    #[error("vocabulary mismatch: {0}")]
    VocabularyMismatch(String),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
