//! Datasets, synthetic corpora, the end-to-end model, training,
//! evaluation and the obfuscation robustness workflow.

mod config;
mod dataset;
mod metrics;
mod model;
mod robustness;
mod synth;
mod train;

pub use config::{Config, ConfigError, Modality};
pub use dataset::{
    load_dataset, read_dataset, save_dataset, write_dataset, ContractSample, DatasetError,
};
pub use metrics::{
    hamming_score, hs_degradation, iou_score, label_counts, metrics_report, prf1, prf1_with,
    Averaging, LabelCounts, MetricsError, MetricsReport,
};
pub use model::{Features, Model};
pub use robustness::{robustness_eval, RobustnessReport, Transforms};
pub use synth::{gen_synthetic, PRIORS};
pub use train::{evaluate, evaluate_with, predict_all, train, train_with, EpochLog, TrainOutcome};

use crate::autodiff::AdError;
use crate::encoders::EncodeError;
use crate::evm::EvmError;
use crate::preprocess::PreprocessError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Evm(#[from] EvmError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error("training set is empty")]
    EmptyTrainSet,
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("expected {expected} labels per sample, found {found}")]
    LabelWidth { expected: usize, found: usize },
    #[error("checkpoint does not match the model: {0}")]
    CheckpointMismatch(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl From<AdError> for HarnessError {
    fn from(e: AdError) -> Self {
        HarnessError::Encode(EncodeError::Ad(e))
    }
}
