//! Accuracy metrics, evaluation reports and the ablation table.

mod ablation;
mod metrics;

pub use ablation::{ablation_table, score_part, AblationRow, AblationSpec, AblationTable, PartScore, ABLATION_HEADERS};
pub use metrics::{
    bbox_diagonal, nodal_deviation, one_step_mse, one_step_mse_with, rollout_metrics, EvalReport, OneStepMse,
    RolloutMetrics,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("no samples to evaluate")]
    EmptyDataset,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Graph(#[from] crate::graphbuild::GraphError),
    #[error(transparent)]
    Train(#[from] crate::training::TrainError),
    #[error(transparent)]
    Rollout(#[from] crate::rollout::RolloutError),
}
