use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::loss::sample_objective;
use super::stats::NormAccumulator;
use super::{apply_edge_dropout, derive_seed, Stream, TrainConfig, TrainError};
use crate::graphbuild::{assemble_sample, valid_steps, GraphConfig, Trajectory, EDGE_FEATURE_WIDTH};
use crate::model::{forward_normalized, Accelerations, GradientSession, ModelParams, NormStats};
use crate::store::{self, StoreError};

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean training objective over the epoch's samples.
    pub train_loss: f64,
    /// Held-out first-slot MSE in normalized target units.
    pub val_1step_mse: f64,
    pub lr: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters after the epoch with the lowest validation MSE.
    pub params: ModelParams,
    /// Parameters after the last epoch.
    pub last: ModelParams,
    pub log: Vec<EpochRecord>,
    /// 1-based; 0 when no epoch ran.
    pub best_epoch: usize,
}

/// `(trajectory, frame)` pairs usable as samples, every `stride`-th frame.
pub fn sample_index(trajectories: &[Trajectory], cfg: &GraphConfig, stride: usize) -> Vec<(usize, usize)> {
    trajectories
        .iter()
        .enumerate()
        .flat_map(|(t, traj)| {
            valid_steps(traj.num_frames(), cfg)
                .step_by(stride.max(1))
                .map(move |k| (t, k))
        })
        .collect()
}

/// Normalization statistics over the given samples of `trajectories`.
pub fn fit_trajectory_stats(
    trajectories: &[Trajectory],
    cfg: &GraphConfig,
    index: &[(usize, usize)],
) -> Result<NormStats, TrainError> {
    let mut acc = NormAccumulator::new(cfg.node_feature_width(), EDGE_FEATURE_WIDTH);
    for &(t, k) in index {
        acc.add(&assemble_sample(&trajectories[t], k, cfg)?);
    }
    acc.finish()
}

fn normalized_targets(targets: &Accelerations, norm: &NormStats) -> Accelerations {
    targets
        .iter()
        .map(|slot| slot.iter().map(|a| norm.normalize_target(*a)).collect())
        .collect()
}

/// Mean over samples of the first-slot squared error, in normalized target units.
pub fn validation_mse(params: &ModelParams, trajectories: &[Trajectory], stride: usize) -> Result<f64, TrainError> {
    let cfg = &params.config.graph;
    let index = sample_index(trajectories, cfg, stride);
    if index.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut total = 0.0;
    for &(t, k) in &index {
        let sample = assemble_sample(&trajectories[t], k, cfg)?;
        let out = forward_normalized(&sample, params)?;
        let target = &sample.targets.as_ref().expect("assembled samples carry targets")[0];
        let mut sum = 0.0;
        for (i, a) in target.iter().enumerate() {
            let a = params.norm.normalize_target(*a);
            for d in 0..3 {
                let diff = out.row(i)[d] - a[d];
                sum += diff * diff;
            }
        }
        total += sum / (3 * target.len().max(1)) as f64;
    }
    Ok(total / index.len() as f64)
}

fn check_lengths(trajectories: &[Trajectory], cfg: &TrainConfig) -> Result<(), TrainError> {
    let needed = cfg.history + cfg.horizon + 1;
    let longest = trajectories.iter().map(Trajectory::num_frames).max().unwrap_or(0);
    if longest < needed {
        return Err(TrainError::DatasetTooShort { needed, longest });
    }
    for t in trajectories.iter().filter(|t| t.num_frames() < needed) {
        log::warn!("skipping {}: {} frames, need {needed}", t.part_id, t.num_frames());
    }
    Ok(())
}

/// Fits normalization statistics on the training set and initializes weights.
pub fn initial_params(train: &[Trajectory], cfg: &TrainConfig) -> Result<ModelParams, TrainError> {
    cfg.validate()?;
    check_lengths(train, cfg)?;
    let graph = cfg.graph_config();
    let index = sample_index(train, &graph, cfg.sample_stride);
    let norm = fit_trajectory_stats(train, &graph, &index)?;
    Ok(ModelParams::init(
        cfg.model_config(),
        norm,
        derive_seed(cfg.seed, Stream::Init, &[]),
    ))
}

/// Trains a fresh model; see [`train_from`].
pub fn train(train: &[Trajectory], validation: &[Trajectory], cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    let init = initial_params(train, cfg)?;
    train_from(init, train, validation, cfg)
}

/// Optimizes `params` on `train`. Validation uses `validation`, or the training
/// trajectories when it is empty.
pub fn train_from(
    mut params: ModelParams,
    train: &[Trajectory],
    validation: &[Trajectory],
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    check_lengths(train, cfg)?;
    let graph = params.config.graph.clone();
    let index = sample_index(train, &graph, cfg.sample_stride);
    if index.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let validation = if validation.is_empty() { train } else { validation };
    let norm = params.norm.clone();
    let anchor = cfg.use_anchor_loss.then(|| {
        let shift = std::array::from_fn(|d| norm.target_mean[d] / norm.target_std[d]);
        (cfg.anchor_weight, shift)
    });
    let velocity_width = 3 * graph.history;

    let mut adam = Adam::new(params.param_count());
    let mut grad_sum = vec![0.0; params.param_count()];
    let mut pending = 0usize;
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, ModelParams)> = None;
    log::info!(
        "training on {} samples from {} trajectories, {} parameters",
        index.len(),
        train.len(),
        params.param_count()
    );

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let lr = cfg.lr_at(epoch);
        let mut order: Vec<usize> = (0..index.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(
            cfg.seed,
            Stream::Shuffle,
            &[epoch as u64],
        )));
        let mut losses = vec![0.0; index.len()];

        for &sample_id in &order {
            let (t, k) = index[sample_id];
            let traj = &train[t];
            let mut sample = assemble_sample(traj, k, &graph)?;
            if cfg.use_edge_dropout {
                sample = apply_edge_dropout(&sample, cfg.edge_dropout_rate, cfg.seed, epoch, sample_id);
            }
            if cfg.use_noise && cfg.noise_scale > 0.0 {
                let sigma = cfg.noise_scale * traj.voxel_size;
                let normal = Normal::new(0.0, sigma).expect("noise std is finite and non-negative");
                let mut rng =
                    ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, Stream::Noise, &[epoch as u64, sample_id as u64]));
                for i in 0..sample.num_nodes() {
                    for x in &mut sample.node_feat.row_mut(i)[..velocity_width] {
                        *x += normal.sample(&mut rng);
                    }
                }
            }
            let target = normalized_targets(sample.targets.as_ref().expect("assembled samples carry targets"), &norm);

            let grads = {
                let mut session = GradientSession::new(&params);
                let out = session.forward(&sample)?;
                let (loss, upstream) = sample_objective(&out, &target, &sample.node_types, cfg.discount, anchor)?;
                if !loss.is_finite() {
                    return Err(TrainError::DivergedLoss {
                        epoch: epoch + 1,
                        sample: sample_id,
                        part_id: traj.part_id.clone(),
                        step: k,
                        loss,
                    });
                }
                losses[sample_id] = loss;
                session.backward(&upstream)?
            };
            grad_sum.iter_mut().zip(&grads.values).for_each(|(s, g)| *s += g);
            pending += 1;
            if pending == cfg.grad_accumulation {
                apply(&mut adam, &mut params.values, &mut grad_sum, pending, lr);
                pending = 0;
            }
        }
        if pending > 0 {
            apply(&mut adam, &mut params.values, &mut grad_sum, pending, lr);
            pending = 0;
        }

        let train_loss = losses.iter().sum::<f64>() / losses.len() as f64;
        let val = validation_mse(&params, validation, cfg.validation_stride)?;
        let record = EpochRecord {
            epoch: epoch + 1,
            train_loss,
            val_1step_mse: val,
            lr,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        };
        log::info!(
            "epoch {:>4}  train {:.6e}  val {:.6e}  lr {:.3e}  {:.0} ms",
            record.epoch,
            record.train_loss,
            record.val_1step_mse,
            record.lr,
            record.wall_ms
        );
        log.push(record);
        if best.as_ref().is_none_or(|(b, _, _)| val < *b) {
            best = Some((val, epoch + 1, params.clone()));
        }
    }

    let (best_params, best_epoch) = match best {
        Some((_, e, p)) => (p, e),
        None => (params.clone(), 0),
    };
    Ok(TrainOutcome {
        params: best_params,
        last: params,
        log,
        best_epoch,
    })
}

fn apply(adam: &mut Adam, values: &mut [f64], grad_sum: &mut [f64], count: usize, lr: f64) {
    if count > 1 {
        let inv = 1.0 / count as f64;
        grad_sum.iter_mut().for_each(|g| *g *= inv);
    }
    adam.step(values, grad_sum, lr);
    grad_sum.fill(0.0);
}

/// Writes the log as one JSON object per line.
pub fn write_log(path: &Path, log: &[EpochRecord]) -> Result<(), StoreError> {
    let mut text = Vec::new();
    for r in log {
        serde_json::to_writer(&mut text, r).expect("records serialize");
        text.write_all(b"\n").expect("write to memory");
    }
    store::write_bytes(path, &text)
}

pub fn read_log(path: &Path) -> Result<Vec<EpochRecord>, StoreError> {
    let bytes = store::read_bytes(path)?;
    let text = String::from_utf8_lossy(&bytes);
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|source| StoreError::Json {
                path: path.display().to_string(),
                source,
            })
        })
        .collect()
}
