//! Trajectory frames to graph samples G(V, E, U).

mod kdtree;
mod sample;
mod trajectory;

pub use kdtree::KdTree;
pub use sample::{
    assemble_sample, assemble_window, build_edges, finite_difference_velocity, valid_steps, GraphConfig, GraphSample,
    EDGE_FEATURE_WIDTH, GLOBAL_FEATURE_WIDTH,
};
pub use trajectory::{
    default_node_types, read_trajectory, write_trajectory, NodeType, NodeTypeCounts, Trajectory, TrajectoryMeta,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("frame index {index} out of range for {frames} frames")]
    IndexOutOfRange { index: usize, frames: usize },
    #[error("step {step} has fewer than {history} previous velocities")]
    HistoryUnavailable { step: usize, history: usize },
    #[error("step {step} + horizon {horizon} runs past {frames} frames")]
    HorizonUnavailable { step: usize, horizon: usize, frames: usize },
    #[error("neighbour radius must be positive, got {0}")]
    InvalidRadius(f64),
}
