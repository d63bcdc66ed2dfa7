//! Synthetic tasks with known ground truth, training with early stopping,
//! random hyperparameter search, model files and a quick self-test.

mod data;
mod persist;
mod search;
mod selftest;
mod synthetic;
mod train;

pub use data::{Dataset, Split, Targets};
pub use persist::{load_model, load_models, save_model, save_models, FORMAT_VERSION};
pub use search::{random_search, sample_config, DivergedTrial, SearchResult, SearchSpace, TrialRecord};
pub use selftest::{selftest, CheckOutcome};
pub use synthetic::{MultiAngleTask, SyntheticKind, SyntheticSpec, SyntheticTask, DEFAULT_UNIMODAL_KAPPA};
pub use train::{
    train, train_multi, EpochRecord, TrainConfig, TrainHistory, TrainedModel, DEFAULT_BATCH_SIZE, DEFAULT_MAX_EPOCHS,
    DEFAULT_PATIENCE,
};
