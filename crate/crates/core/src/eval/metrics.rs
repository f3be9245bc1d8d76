use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::graphbuild::{assemble_sample, GraphConfig, GraphSample, Trajectory};
use crate::model::{forward, ModelParams, NormStats};
use crate::store::{self, StoreError};
use crate::training::sample_index;

/// Headline accuracy numbers for one part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub part_id: String,
    /// First-slot acceleration MSE in normalized target units, when a model was given.
    pub one_step_mse_normalized: Option<f64>,
    /// The same in mm²/step⁴.
    pub one_step_mse_physical: Option<f64>,
    /// Mean squared positional error over every frame and node (mm²).
    pub rollout_mse: f64,
    /// Mean nodal deviation at the final frame (mm).
    pub mean_nodal_dev: f64,
    pub max_nodal_dev: f64,
    pub max_dev_pct_of_diagonal: f64,
    pub inference_wall_ms: Option<f64>,
    pub node_count: usize,
    pub diagonal_mm: f64,
}

impl EvalReport {
    pub fn from_metrics(part_id: &str, m: &RolloutMetrics) -> Self {
        EvalReport {
            part_id: part_id.to_string(),
            one_step_mse_normalized: None,
            one_step_mse_physical: None,
            rollout_mse: m.rollout_mse,
            mean_nodal_dev: m.mean_nodal_dev,
            max_nodal_dev: m.max_nodal_dev,
            max_dev_pct_of_diagonal: m.max_dev_pct_of_diagonal,
            inference_wall_ms: None,
            node_count: m.node_count,
            diagonal_mm: m.diagonal_mm,
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), StoreError> {
        store::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self, StoreError> {
        store::read_json(path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OneStepMse {
    pub normalized: f64,
    pub physical: f64,
}

/// Mean over samples of the first-slot squared acceleration error, where
/// `predict` returns the first-slot physical accelerations of a sample.
/// Errors are also reported divided by the target std of `norm`.
pub fn one_step_mse_with<F>(
    dataset: &[Trajectory],
    cfg: &GraphConfig,
    norm: &NormStats,
    mut predict: F,
) -> Result<OneStepMse, EvalError>
where
    F: FnMut(&GraphSample) -> Result<Vec<[f64; 3]>, EvalError>,
{
    let index = sample_index(dataset, cfg, 1);
    if index.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let (mut phys, mut normed) = (0.0, 0.0);
    for &(t, k) in &index {
        let sample = assemble_sample(&dataset[t], k, cfg)?;
        let pred = predict(&sample)?;
        let target = &sample.targets.as_ref().expect("assembled samples carry targets")[0];
        if pred.len() != target.len() {
            return Err(EvalError::ShapeMismatch(format!(
                "prediction has {} nodes, target {}",
                pred.len(),
                target.len()
            )));
        }
        let (mut sp, mut sn) = (0.0, 0.0);
        for (p, a) in pred.iter().zip(target) {
            for d in 0..3 {
                let e = p[d] - a[d];
                sp += e * e;
                let en = e / norm.target_std[d];
                sn += en * en;
            }
        }
        let count = (3 * target.len().max(1)) as f64;
        phys += sp / count;
        normed += sn / count;
    }
    let n = index.len() as f64;
    Ok(OneStepMse {
        normalized: normed / n,
        physical: phys / n,
    })
}

/// [`one_step_mse_with`] for the learned model.
pub fn one_step_mse(params: &ModelParams, dataset: &[Trajectory]) -> Result<OneStepMse, EvalError> {
    one_step_mse_with(dataset, &params.config.graph, &params.norm, |s| {
        Ok(forward(s, params)?.swap_remove(0))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutMetrics {
    pub rollout_mse: f64,
    pub mean_nodal_dev: f64,
    pub max_nodal_dev: f64,
    pub max_dev_pct_of_diagonal: f64,
    pub node_count: usize,
    pub diagonal_mm: f64,
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Bounding-box diagonal of a frame.
pub fn bbox_diagonal(frame: &[[f64; 3]]) -> f64 {
    if frame.is_empty() {
        return 0.0;
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in frame {
        for d in 0..3 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    dist(&lo, &hi)
}

/// Per-node Euclidean deviation between two frames.
pub fn nodal_deviation(pred: &[[f64; 3]], truth: &[[f64; 3]]) -> Vec<f64> {
    pred.iter().zip(truth).map(|(a, b)| dist(a, b)).collect()
}

/// Positional accuracy of a predicted trajectory against the truth.
pub fn rollout_metrics(pred: &Trajectory, truth: &Trajectory) -> Result<RolloutMetrics, EvalError> {
    if pred.num_nodes() != truth.num_nodes() || pred.num_frames() != truth.num_frames() {
        return Err(EvalError::ShapeMismatch(format!(
            "prediction {} frames x {} nodes, truth {} x {}",
            pred.num_frames(),
            pred.num_nodes(),
            truth.num_frames(),
            truth.num_nodes()
        )));
    }
    if truth.num_frames() == 0 || truth.num_nodes() == 0 {
        return Err(EvalError::EmptyDataset);
    }
    let mut sq = 0.0;
    for (fp, ft) in pred.frames.iter().zip(&truth.frames) {
        for (a, b) in fp.iter().zip(ft) {
            sq += (0..3).map(|d| (a[d] - b[d]).powi(2)).sum::<f64>();
        }
    }
    let rollout_mse = sq / (truth.num_frames() * truth.num_nodes()) as f64;
    let dev = nodal_deviation(pred.frames.last().unwrap(), truth.frames.last().unwrap());
    let mean = dev.iter().sum::<f64>() / dev.len() as f64;
    let max = dev.iter().copied().fold(0.0, f64::max);
    let diagonal = bbox_diagonal(&truth.frames[0]);
    Ok(RolloutMetrics {
        rollout_mse,
        mean_nodal_dev: mean,
        max_nodal_dev: max,
        max_dev_pct_of_diagonal: if diagonal > 0.0 { 100.0 * max / diagonal } else { 0.0 },
        node_count: truth.num_nodes(),
        diagonal_mm: diagonal,
    })
}
