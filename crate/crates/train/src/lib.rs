//! Training, evaluation and ablation orchestration.

pub mod ablation;
pub mod config;
pub mod data;
pub mod eval;
pub mod report;
pub mod run;
pub mod schedule;

pub use ablation::{ablation_suite, ablation_table, AblationGrid, Cell, CellResult};
pub use config::{Experiment, Strategy, TrainConfig};
pub use data::{Batch, Datasets, SplitData};
pub use eval::{evaluate, evaluate_oracle, Evaluation, KeypointAccuracy};
pub use report::{EpochLog, Phase, RunReport};
pub use run::{load_run, save_run, train, train_end2end, train_runs, train_separate, TrainedRun};
pub use schedule::{epoch_lr, lr_at};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("dataset: {0}")]
    Data(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] egopose_core::Error),
    #[error(transparent)]
    Model(#[from] egopose_model::ModelError),
}

impl TrainError {
    /// True for problems with inputs on disk rather than with the request or the code.
    pub fn is_data_error(&self) -> bool {
        use egopose_core::Error as E;
        match self {
            TrainError::Data(_) | TrainError::Io { .. } => true,
            TrainError::Core(e) => matches!(e, E::Io { .. } | E::Json { .. } | E::Image { .. } | E::Container(_)),
            TrainError::Model(e) => matches!(
                e,
                egopose_model::ModelError::ConfigMismatch { .. }
                    | egopose_model::ModelError::Core(E::Io { .. } | E::Container(_))
            ),
            TrainError::Config(_) => false,
        }
    }
}

pub type Result<T, E = TrainError> = std::result::Result<T, E>;
