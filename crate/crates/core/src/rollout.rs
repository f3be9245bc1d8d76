//! Autoregressive inference: predict accelerations, integrate, rebuild the
//! graph, repeat.

use std::collections::hash_map::DefaultHasher;
use std::hash::Hasher;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::graphbuild::{assemble_window, GraphConfig, GraphError, GraphSample, NodeType, Trajectory};
use crate::model::{forward, Accelerations, ModelError, ModelParams};
use crate::oracle::{step_oracle, SinterProfile, SupportField};
use crate::store::{self, StoreError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RolloutError {
    #[error("seed must hold {expected} frames, got {actual}")]
    SeedLengthMismatch { expected: usize, actual: usize },
    #[error("non-finite prediction at step {step}")]
    NonFinitePrediction { step: usize },
    #[error("temperature profile has {available} entries, rollout needs {needed}")]
    ProfileTooShort { needed: usize, available: usize },
    #[error("rollout needs at least one step")]
    NoSteps,
    #[error("seed frames disagree on node count")]
    RaggedSeed,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// What a predictor sees at step `k` besides the graph.
#[derive(Debug, Clone, Copy)]
pub struct StepInput<'a> {
    pub step: usize,
    /// Furnace temperature at step `k` (°C).
    pub celsius: f64,
    /// Positions at step `k`.
    pub positions: &'a [[f64; 3]],
    /// Velocity `p_k - p_(k-1)`.
    pub velocity: &'a [[f64; 3]],
}

/// Anything that maps the current state to accelerations for the next steps.
pub trait Predictor {
    fn graph_config(&self) -> &GraphConfig;
    fn predict(&mut self, sample: &GraphSample, input: &StepInput) -> Result<Accelerations, RolloutError>;
}

/// The learned simulator.
pub struct ModelPredictor<'a> {
    pub params: &'a ModelParams,
}

impl Predictor for ModelPredictor<'_> {
    fn graph_config(&self) -> &GraphConfig {
        &self.params.config.graph
    }

    fn predict(&mut self, sample: &GraphSample, _: &StepInput) -> Result<Accelerations, RolloutError> {
        Ok(forward(sample, self.params)?)
    }
}

/// The data generator used as a model: the acceleration that moves the current
/// state to the oracle's next state.
pub struct OraclePredictor {
    pub graph: GraphConfig,
    pub profile: SinterProfile,
    pub support: SupportField,
    pub node_types: Vec<NodeType>,
}

impl Predictor for OraclePredictor {
    fn graph_config(&self) -> &GraphConfig {
        &self.graph
    }

    fn predict(&mut self, _: &GraphSample, input: &StepInput) -> Result<Accelerations, RolloutError> {
        let next = step_oracle(
            input.positions,
            &self.node_types,
            input.celsius,
            &self.profile,
            &self.support,
        );
        let accel = next
            .iter()
            .zip(input.positions)
            .zip(input.velocity)
            .map(|((q, p), v)| std::array::from_fn(|d| (q[d] - p[d]) - v[d]))
            .collect();
        Ok(vec![accel])
    }
}

/// Starting state and known control inputs of a rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutInput {
    /// `n + 1` frames.
    pub seed: Vec<Vec<[f64; 3]>>,
    pub node_types: Vec<NodeType>,
    /// Temperature for every frame index, seed included.
    pub temperature: Vec<f64>,
    pub voxel_size: f64,
    pub build_plane_z: f64,
}

impl RolloutInput {
    /// Seeds from the first `history + 1` frames of `traj`.
    pub fn from_trajectory(traj: &Trajectory, history: usize) -> Self {
        RolloutInput {
            seed: traj.frames.iter().take(history + 1).cloned().collect(),
            node_types: traj.node_types.clone(),
            temperature: traj.temperature.clone(),
            voxel_size: traj.voxel_size,
            build_plane_z: traj.build_plane_z(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutConfig {
    pub steps: usize,
    /// Integrate every predicted horizon slot before predicting again.
    pub consume_horizon: bool,
}

impl RolloutConfig {
    pub fn steps(steps: usize) -> Self {
        RolloutConfig {
            steps,
            consume_horizon: false,
        }
    }
}

/// Per-step instrumentation passed to the observer.
#[derive(Debug, Clone, PartialEq)]
pub struct StepObservation {
    pub step: usize,
    /// Hash of the velocity columns of the node features.
    pub velocity_hash: u64,
    pub num_edges: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutResult {
    /// `K` predicted frames, following the seed.
    pub positions: Vec<Vec<[f64; 3]>>,
    /// Number of seed velocities `n`.
    pub seed_steps: usize,
    pub step_wall_ms: Vec<f64>,
    pub total_wall_ms: f64,
}

impl RolloutResult {
    /// Seed frames followed by the predicted frames, as a trajectory.
    pub fn to_trajectory(&self, input: &RolloutInput, part_id: &str, voxel_size: f64) -> Trajectory {
        let frames: Vec<Vec<[f64; 3]>> = input.seed.iter().chain(&self.positions).cloned().collect();
        Trajectory {
            part_id: part_id.to_string(),
            voxel_size,
            temperature: input.temperature.iter().copied().take(frames.len()).collect(),
            node_types: input.node_types.clone(),
            frames,
        }
    }
}

/// Hash of the first `3 * history` columns (the velocities) of every node row.
pub fn velocity_hash(sample: &GraphSample, history: usize) -> u64 {
    let mut h = DefaultHasher::new();
    for i in 0..sample.num_nodes() {
        for x in &sample.node_feat.row(i)[..3 * history] {
            h.write_u64(x.to_bits());
        }
    }
    h.finish()
}

fn difference(a: &[[f64; 3]], b: &[[f64; 3]]) -> Vec<[f64; 3]> {
    a.iter()
        .zip(b)
        .map(|(p, q)| std::array::from_fn(|d| p[d] - q[d]))
        .collect()
}

/// Semi-implicit Euler step with constraint projection: Fixed nodes keep
/// their position exactly; Slip nodes keep their height (zero z velocity) and
/// never go below the build plane.
pub fn integrate(
    current: &[[f64; 3]],
    velocity: &[[f64; 3]],
    accel: &[[f64; 3]],
    types: &[NodeType],
    build_plane_z: f64,
) -> Vec<[f64; 3]> {
    current
        .iter()
        .zip(velocity)
        .zip(accel)
        .zip(types)
        .map(|(((p, v), a), t)| match t {
            NodeType::Fixed => *p,
            _ => {
                let mut q: [f64; 3] = std::array::from_fn(|d| p[d] + (v[d] + a[d]));
                if *t == NodeType::Slip {
                    q[2] = p[2].max(build_plane_z);
                }
                q
            }
        })
        .collect()
}

/// Rolls `predictor` forward `cfg.steps` frames from `input.seed`.
pub fn rollout(
    predictor: &mut dyn Predictor,
    input: &RolloutInput,
    cfg: &RolloutConfig,
    mut observer: Option<&mut dyn FnMut(&StepObservation)>,
) -> Result<RolloutResult, RolloutError> {
    let graph = predictor.graph_config().clone();
    let n = graph.history;
    if input.seed.len() != n + 1 {
        return Err(RolloutError::SeedLengthMismatch {
            expected: n + 1,
            actual: input.seed.len(),
        });
    }
    if cfg.steps == 0 {
        return Err(RolloutError::NoSteps);
    }
    let num_nodes = input.node_types.len();
    if input.seed.iter().any(|f| f.len() != num_nodes) {
        return Err(RolloutError::RaggedSeed);
    }
    let needed = n + cfg.steps;
    if input.temperature.len() < needed {
        return Err(RolloutError::ProfileTooShort {
            needed,
            available: input.temperature.len(),
        });
    }

    let started = Instant::now();
    let mut frames: Vec<Vec<[f64; 3]>> = input.seed.clone();
    let mut step_wall_ms = Vec::with_capacity(cfg.steps);
    while frames.len() < n + 1 + cfg.steps {
        let t0 = Instant::now();
        let k = frames.len() - 1;
        let window: Vec<&[[f64; 3]]> = frames[k - n..=k].iter().map(Vec::as_slice).collect();
        let sample = assemble_window(
            &window,
            &input.node_types,
            input.temperature[k],
            input.voxel_size,
            k,
            &graph,
        )?;
        if let Some(obs) = observer.as_deref_mut() {
            obs(&StepObservation {
                step: k,
                velocity_hash: velocity_hash(&sample, n),
                num_edges: sample.num_edges(),
            });
        }
        let velocity = difference(&frames[k], &frames[k - 1]);
        let accel = predictor.predict(
            &sample,
            &StepInput {
                step: k,
                celsius: input.temperature[k],
                positions: &frames[k],
                velocity: &velocity,
            },
        )?;
        let slots = if cfg.consume_horizon { accel.len() } else { 1 };
        let remaining = n + 1 + cfg.steps - frames.len();
        let slots = slots.min(remaining).max(1);
        for a in accel.iter().take(slots) {
            if a.len() != num_nodes || a.iter().flatten().any(|x| !x.is_finite()) {
                return Err(RolloutError::NonFinitePrediction { step: frames.len() - 1 });
            }
            let last = frames.len() - 1;
            let v = difference(&frames[last], &frames[last - 1]);
            let next = integrate(&frames[last], &v, a, &input.node_types, input.build_plane_z);
            if next.iter().flatten().any(|x| !x.is_finite()) {
                return Err(RolloutError::NonFinitePrediction { step: last });
            }
            frames.push(next);
        }
        let ms = t0.elapsed().as_secs_f64() * 1e3;
        log::debug!("rollout step {k}: {} edges, {ms:.1} ms", sample.num_edges());
        // a multi-slot step is charged to its first frame, later frames cost 0
        step_wall_ms.push(ms);
        step_wall_ms.extend(std::iter::repeat_n(0.0, slots - 1));
    }
    let total_wall_ms = started.elapsed().as_secs_f64() * 1e3;
    Ok(RolloutResult {
        positions: frames.split_off(n + 1),
        seed_steps: n,
        step_wall_ms,
        total_wall_ms,
    })
}

/// Per-node displacement magnitude between the last predicted frame and `reference`.
pub fn final_deformation(result: &RolloutResult, reference: &[[f64; 3]]) -> Vec<f64> {
    let last = result.positions.last().map(Vec::as_slice).unwrap_or(reference);
    last.iter()
        .zip(reference)
        .map(|(p, q)| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt())
        .collect()
}

pub const ROLLOUT_META_FILE: &str = "rollout_meta.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutMeta {
    pub seed_frames: usize,
    pub checkpoint_id: String,
    pub steps: usize,
    pub consume_horizon: bool,
    pub step_wall_ms: Vec<f64>,
    pub total_wall_ms: f64,
}

/// Writes the predicted trajectory (seed included) and `rollout_meta.json`.
pub fn write_rollout(dir: &Path, traj: &Trajectory, meta: &RolloutMeta) -> Result<(), StoreError> {
    crate::graphbuild::write_trajectory(dir, traj)?;
    store::write_json(&dir.join(ROLLOUT_META_FILE), meta)
}
