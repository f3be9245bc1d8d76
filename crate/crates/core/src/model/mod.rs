//! The learned simulator: MLP blocks, the encode-process-decode network with
//! its reverse pass, and checkpoint files.

mod checkpoint;
mod mlp;
mod network;
mod params;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest, MANIFEST_FILE, PARAMS_FILE};
pub use mlp::{mlp_forward, Activation, Input, Linear, Mlp, MlpParams, MlpTrace};
pub use network::{
    canonical_order, decode, encode, forward, forward_normalized, process_round, split_slots, Accelerations,
    GradientSession, LatentGraph, ModelConfig, ModelParams, NetworkLayout, NormStats, ParamGradients, ProcessorBlock,
    Topology, STD_EPS,
};
pub use params::{ParamBuilder, ParamEntry};

pub use crate::tensor::Tensor2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("backward called without a recorded forward pass")]
    NoForwardRecorded,
    #[error("round {round} out of range for {rounds} rounds")]
    RoundOutOfRange { round: usize, rounds: usize },
    #[error("malformed sample: {0}")]
    InvalidSample(String),
    #[error("non-finite values in {0}")]
    NonFinite(String),
}
