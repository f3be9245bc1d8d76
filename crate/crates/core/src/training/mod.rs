//! Objective, normalization statistics, edge dropout and the optimization loop.

mod adam;
mod loss;
mod stats;
mod trainer;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::Adam;
pub use loss::{anchor_loss, discounted_loss, is_constrained, sample_objective};
pub use stats::{fit_norm_stats, NormAccumulator, RunningMoments};
pub use trainer::{
    fit_trajectory_stats, initial_params, read_log, sample_index, train, train_from, validation_mse, write_log,
    EpochRecord, TrainOutcome,
};

use crate::graphbuild::{GraphConfig, GraphSample};
use crate::model::{ModelConfig, ModelError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("no samples to fit")]
    EmptyDataset,
    #[error("shape mismatch: prediction {pred:?} vs target {target:?} (slots, nodes)")]
    ShapeMismatch {
        pred: (usize, usize),
        target: (usize, usize),
    },
    #[error("no trajectory has the {needed} frames needed (longest has {longest})")]
    DatasetTooShort { needed: usize, longest: usize },
    #[error("loss diverged to {loss} at epoch {epoch}, sample {sample} ({part_id} step {step})")]
    DivergedLoss {
        epoch: usize,
        sample: usize,
        part_id: String,
        step: usize,
        loss: f64,
    },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Graph(#[from] crate::graphbuild::GraphError),
}

/// Hyperparameters and ablation switches; mirrored by `train.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Velocity history length `n`.
    pub history: usize,
    /// Predicted steps `l`.
    pub horizon: usize,
    /// Per-slot loss discount `γ`.
    pub discount: f64,
    pub edge_dropout_rate: f64,
    /// Anchor-loss weight `λ`.
    pub anchor_weight: f64,
    pub learning_rate: f64,
    /// Learning rate multiplier applied after every epoch.
    pub lr_decay: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Samples whose gradients are averaged per optimizer step.
    pub grad_accumulation: usize,
    /// Std of the noise added to input velocities, as a fraction of the voxel size.
    pub noise_scale: f64,
    pub use_noise: bool,
    pub use_temperature: bool,
    pub use_edge_dropout: bool,
    pub use_feature_norm: bool,
    pub use_anchor_loss: bool,
    /// Use every `sample_stride`-th frame of each training trajectory.
    pub sample_stride: usize,
    /// Use every `validation_stride`-th frame of each validation trajectory.
    pub validation_stride: usize,
    pub radius_factor: f64,
    pub latent: usize,
    pub hidden: usize,
    pub hidden_layers: usize,
    pub global_latent: usize,
    pub rounds: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            history: 3,
            horizon: 2,
            discount: 0.9,
            edge_dropout_rate: 0.6,
            anchor_weight: 1.0,
            learning_rate: 1e-4,
            lr_decay: 0.98,
            epochs: 10,
            seed: 0,
            grad_accumulation: 1,
            noise_scale: 1e-4,
            use_noise: true,
            use_temperature: true,
            use_edge_dropout: true,
            use_feature_norm: true,
            use_anchor_loss: true,
            sample_stride: 1,
            validation_stride: 1,
            radius_factor: 1.2,
            latent: 128,
            hidden: 128,
            hidden_layers: 2,
            global_latent: 16,
            rounds: 10,
        }
    }
}

impl TrainConfig {
    /// The four model versions of the ablation, in table order:
    /// baseline with temperature, + edge dropout, + feature normalization,
    /// + anchor loss.
    pub fn ablation_versions(base: &TrainConfig) -> [TrainConfig; 4] {
        let flags = |dropout, norm, anchor| TrainConfig {
            use_temperature: true,
            use_edge_dropout: dropout,
            use_feature_norm: norm,
            use_anchor_loss: anchor,
            ..base.clone()
        };
        [
            flags(false, false, false),
            flags(true, false, false),
            flags(true, true, false),
            flags(true, true, true),
        ]
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if self.history == 0 {
            return bad("history must be at least 1");
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1");
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return bad("discount must lie in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.edge_dropout_rate) {
            return bad("edge_dropout_rate must lie in [0, 1)");
        }
        if !(self.anchor_weight >= 0.0) {
            return bad("anchor_weight must be non-negative");
        }
        if !(self.learning_rate >= 0.0) || !(self.lr_decay > 0.0) {
            return bad("learning rate and decay must be non-negative and positive");
        }
        if !(self.noise_scale >= 0.0) {
            return bad("noise_scale must be non-negative");
        }
        if self.grad_accumulation == 0 || self.sample_stride == 0 || self.validation_stride == 0 {
            return bad("grad_accumulation and strides must be at least 1");
        }
        if self.latent == 0 || self.hidden == 0 || self.global_latent == 0 {
            return bad("layer widths must be positive");
        }
        Ok(())
    }

    pub fn graph_config(&self) -> GraphConfig {
        GraphConfig {
            history: self.history,
            horizon: self.horizon,
            radius_factor: self.radius_factor,
            use_temperature: self.use_temperature,
            ..GraphConfig::default()
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            graph: self.graph_config(),
            latent: self.latent,
            hidden: self.hidden,
            hidden_layers: self.hidden_layers,
            global_latent: self.global_latent,
            rounds: self.rounds,
            normalize_node_features: self.use_feature_norm,
        }
    }

    /// Learning rate during `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.learning_rate * self.lr_decay.powi(epoch as i32)
    }
}

/// Independent random streams used during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Shuffle = 2,
    EdgeDropout = 3,
    Noise = 4,
}

/// Mixes a run seed with stream and position labels (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, stream: Stream, parts: &[u64]) -> u64 {
    let mix = |mut z: u64| {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    };
    let mut h = mix(seed ^ mix(stream as u64));
    for &p in parts {
        h = mix(h ^ p);
    }
    h
}

/// Drops each directed edge independently with probability `rate`.
///
/// The mask depends only on `(seed, epoch, sample_id)`, so it is fixed within
/// an epoch and resampled across epochs. The input sample is not modified.
pub fn apply_edge_dropout(sample: &GraphSample, rate: f64, seed: u64, epoch: usize, sample_id: usize) -> GraphSample {
    let mut out = sample.clone();
    if rate <= 0.0 {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
        seed,
        Stream::EdgeDropout,
        &[epoch as u64, sample_id as u64],
    ));
    let keep: Vec<usize> = (0..sample.num_edges())
        .filter(|_| rng.random::<f64>() >= rate)
        .collect();
    out.senders = keep.iter().map(|&e| sample.senders[e]).collect();
    out.receivers = keep.iter().map(|&e| sample.receivers[e]).collect();
    out.edge_feat = sample.edge_feat.gather_rows(&keep);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphbuild::NodeType;
    use crate::tensor::Tensor2;

    fn chain(edges: usize) -> GraphSample {
        let n = edges + 1;
        GraphSample {
            step: 0,
            node_pos: (0..n).map(|i| [i as f64, 0.0, 0.0]).collect(),
            node_types: vec![NodeType::Free; n],
            node_feat: Tensor2::zeros(n, 3),
            senders: (0..edges).collect(),
            receivers: (1..n).collect(),
            edge_feat: Tensor2::from_vec(edges, 4, (0..4 * edges).map(|i| i as f64).collect()),
            global_feat: vec![0.0],
            targets: None,
        }
    }

    #[test]
    fn zero_rate_keeps_every_edge() {
        let s = chain(50);
        assert_eq!(apply_edge_dropout(&s, 0.0, 1, 2, 3), s);
    }

    #[test]
    fn keep_fraction_within_binomial_band() {
        let s = chain(10_000);
        let kept = apply_edge_dropout(&s, 0.6, 42, 0, 0).num_edges();
        assert!((3700..=4300).contains(&kept), "kept {kept}");
    }

    #[test]
    fn mask_is_deterministic_and_resampled_per_epoch() {
        let s = chain(200);
        let a = apply_edge_dropout(&s, 0.5, 7, 3, 11);
        assert_eq!(a, apply_edge_dropout(&s, 0.5, 7, 3, 11));
        assert_ne!(a.senders, apply_edge_dropout(&s, 0.5, 7, 4, 11).senders);
        assert_ne!(a.senders, apply_edge_dropout(&s, 0.5, 7, 3, 12).senders);
        // kept edges carry their own features
        for (k, &snd) in a.senders.iter().enumerate() {
            assert_eq!(a.edge_feat.row(k)[0], (4 * snd) as f64);
        }
    }

    #[test]
    fn config_round_trips_and_validates() {
        let cfg = TrainConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<TrainConfig>(&text).unwrap(), cfg);
        let partial: TrainConfig = serde_json::from_str(r#"{"epochs": 3}"#).unwrap();
        assert_eq!(partial.epochs, 3);
        assert_eq!(partial.discount, 0.9);
        assert!(TrainConfig {
            edge_dropout_rate: 1.0,
            ..cfg.clone()
        }
        .validate()
        .is_err());
        assert!(TrainConfig { discount: 0.0, ..cfg }.validate().is_err());
    }

    #[test]
    fn ablation_versions_follow_table_order() {
        let v = TrainConfig::ablation_versions(&TrainConfig::default());
        let flags: Vec<_> = v
            .iter()
            .map(|c| {
                (
                    c.use_temperature,
                    c.use_edge_dropout,
                    c.use_feature_norm,
                    c.use_anchor_loss,
                )
            })
            .collect();
        assert_eq!(
            flags,
            vec![
                (true, false, false, false),
                (true, true, false, false),
                (true, true, true, false),
                (true, true, true, true)
            ]
        );
    }
}
