use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kdtree::KdTree;
use super::trajectory::{NodeType, Trajectory};
use super::GraphError;
use crate::tensor::Tensor2;

/// How a trajectory frame window becomes a graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphConfig {
    /// Velocity history length `n`.
    pub history: usize,
    /// Predicted acceleration steps `l`.
    pub horizon: usize,
    /// Connection radius as a multiple of the voxel size.
    pub radius_factor: f64,
    /// Temperature feature is `(T - temperature_offset) / temperature_scale`.
    pub temperature_offset: f64,
    pub temperature_scale: f64,
    /// When false the global feature is held at zero.
    pub use_temperature: bool,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            history: 3,
            horizon: 2,
            radius_factor: 1.2,
            temperature_offset: 20.0,
            temperature_scale: 1500.0,
            use_temperature: true,
        }
    }
}

impl GraphConfig {
    /// Node feature width: `3n` velocity components plus the node-type one-hot.
    pub fn node_feature_width(&self) -> usize {
        3 * self.history + NodeType::COUNT
    }

    pub fn normalized_temperature(&self, celsius: f64) -> f64 {
        if self.use_temperature {
            (celsius - self.temperature_offset) / self.temperature_scale
        } else {
            0.0
        }
    }
}

pub const EDGE_FEATURE_WIDTH: usize = 4;
pub const GLOBAL_FEATURE_WIDTH: usize = 1;

/// One timestep as a directed graph with node, edge and global features.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSample {
    /// Frame index `k` the sample was built at.
    pub step: usize,
    pub node_pos: Vec<[f64; 3]>,
    pub node_types: Vec<NodeType>,
    /// `N x (3n + 3)`: velocities oldest first, then the type one-hot.
    pub node_feat: Tensor2,
    pub senders: Vec<usize>,
    pub receivers: Vec<usize>,
    /// `E x 4`: `[dx, dy, dz, |d|]` with `d = pos[receiver] - pos[sender]`.
    pub edge_feat: Tensor2,
    pub global_feat: Vec<f64>,
    /// `targets[i][node]` is the acceleration at `k + i + 1` (mm/step²).
    pub targets: Option<Vec<Vec<[f64; 3]>>>,
}

impl GraphSample {
    pub fn num_nodes(&self) -> usize {
        self.node_pos.len()
    }

    pub fn num_edges(&self) -> usize {
        self.senders.len()
    }

    /// Index sanity: no self edges, every index in range, widths consistent.
    pub fn check(&self) -> Result<(), String> {
        let n = self.num_nodes();
        if self.node_feat.rows != n || self.node_types.len() != n {
            return Err("node arrays disagree on N".into());
        }
        if self.receivers.len() != self.senders.len() || self.edge_feat.rows != self.senders.len() {
            return Err("edge arrays disagree on E".into());
        }
        if self.edge_feat.cols != EDGE_FEATURE_WIDTH {
            return Err(format!("edge feature width {}", self.edge_feat.cols));
        }
        for (&s, &r) in self.senders.iter().zip(&self.receivers) {
            if s >= n || r >= n {
                return Err(format!("edge ({s}, {r}) out of range for N = {n}"));
            }
            if s == r {
                return Err(format!("self edge at node {s}"));
            }
        }
        Ok(())
    }

    /// Same graph with nodes relabelled: node `i` of the result is node `perm[i]`
    /// of `self`. Edges are re-sorted by `(sender, receiver)`.
    pub fn permuted(&self, perm: &[usize]) -> GraphSample {
        let n = self.num_nodes();
        assert_eq!(perm.len(), n);
        let mut inverse = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let mut edges: Vec<(usize, usize, usize)> = self
            .senders
            .iter()
            .zip(&self.receivers)
            .enumerate()
            .map(|(e, (&s, &r))| (inverse[s], inverse[r], e))
            .collect();
        edges.sort_unstable();
        let edge_order: Vec<usize> = edges.iter().map(|t| t.2).collect();
        GraphSample {
            step: self.step,
            node_pos: perm.iter().map(|&i| self.node_pos[i]).collect(),
            node_types: perm.iter().map(|&i| self.node_types[i]).collect(),
            node_feat: self.node_feat.gather_rows(perm),
            senders: edges.iter().map(|t| t.0).collect(),
            receivers: edges.iter().map(|t| t.1).collect(),
            edge_feat: self.edge_feat.gather_rows(&edge_order),
            global_feat: self.global_feat.clone(),
            targets: self
                .targets
                .as_ref()
                .map(|t| t.iter().map(|step| perm.iter().map(|&i| step[i]).collect()).collect()),
        }
    }
}

/// `positions[k] - positions[k - 1]` per node (mm/step).
pub fn finite_difference_velocity(positions: &[Vec<[f64; 3]>], k: usize) -> Result<Vec<[f64; 3]>, GraphError> {
    if k == 0 || k >= positions.len() {
        return Err(GraphError::IndexOutOfRange {
            index: k,
            frames: positions.len(),
        });
    }
    Ok(frame_difference(&positions[k], &positions[k - 1]))
}

fn frame_difference(a: &[[f64; 3]], b: &[[f64; 3]]) -> Vec<[f64; 3]> {
    a.iter()
        .zip(b)
        .map(|(p, q)| [p[0] - q[0], p[1] - q[1], p[2] - q[2]])
        .collect()
}

/// All ordered pairs `(i, j)`, `i != j`, with `|p_j - p_i| <= radius`, sorted
/// by `(sender, receiver)`.
pub fn build_edges(node_pos: &[[f64; 3]], radius: f64) -> Result<(Vec<usize>, Vec<usize>), GraphError> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(GraphError::InvalidRadius(radius));
    }
    let tree = KdTree::new(node_pos);
    let per_node: Vec<Vec<usize>> = node_pos
        .par_iter()
        .enumerate()
        .map(|(i, &p)| {
            let mut hits = Vec::with_capacity(8);
            tree.within_radius(p, radius, &mut hits);
            hits.retain(|&j| j != i);
            hits.sort_unstable();
            hits
        })
        .collect();
    let total = per_node.iter().map(Vec::len).sum();
    let mut senders = Vec::with_capacity(total);
    let mut receivers = Vec::with_capacity(total);
    for (i, hits) in per_node.into_iter().enumerate() {
        for j in hits {
            senders.push(i);
            receivers.push(j);
        }
    }
    Ok((senders, receivers))
}

/// Builds the graph at the newest frame of `window`.
///
/// `window` holds `n + 1` consecutive frames ending at step `k`; they supply
/// the `n` velocities of the node features. Edges are rebuilt from the newest
/// frame. This is the single path shared by training and rollout.
pub fn assemble_window(
    window: &[&[[f64; 3]]],
    node_types: &[NodeType],
    temperature: f64,
    voxel_size: f64,
    step: usize,
    cfg: &GraphConfig,
) -> Result<GraphSample, GraphError> {
    let n = cfg.history;
    if window.len() != n + 1 {
        return Err(GraphError::HistoryUnavailable { step, history: n });
    }
    let current = window[n];
    let num_nodes = current.len();
    let width = cfg.node_feature_width();
    let mut node_feat = Tensor2::zeros(num_nodes, width);
    for h in 0..n {
        let (older, newer) = (window[h], window[h + 1]);
        for i in 0..num_nodes {
            let row = node_feat.row_mut(i);
            for d in 0..3 {
                row[3 * h + d] = newer[i][d] - older[i][d];
            }
        }
    }
    for (i, t) in node_types.iter().enumerate() {
        node_feat.row_mut(i)[3 * n..].copy_from_slice(&t.one_hot());
    }

    let (senders, receivers) = build_edges(current, cfg.radius_factor * voxel_size)?;
    let mut edge_feat = Tensor2::zeros(senders.len(), EDGE_FEATURE_WIDTH);
    for (e, (&s, &r)) in senders.iter().zip(&receivers).enumerate() {
        let d = [
            current[r][0] - current[s][0],
            current[r][1] - current[s][1],
            current[r][2] - current[s][2],
        ];
        let norm = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        edge_feat.row_mut(e).copy_from_slice(&[d[0], d[1], d[2], norm]);
    }

    Ok(GraphSample {
        step,
        node_pos: current.to_vec(),
        node_types: node_types.to_vec(),
        node_feat,
        senders,
        receivers,
        edge_feat,
        global_feat: vec![cfg.normalized_temperature(temperature)],
        targets: None,
    })
}

/// Graph at frame `k` of `traj`, with the next `l` accelerations as targets.
pub fn assemble_sample(traj: &Trajectory, k: usize, cfg: &GraphConfig) -> Result<GraphSample, GraphError> {
    let (n, l) = (cfg.history, cfg.horizon);
    let frames = traj.num_frames();
    if k < n || k >= frames {
        return Err(GraphError::HistoryUnavailable { step: k, history: n });
    }
    if k + l >= frames {
        return Err(GraphError::HorizonUnavailable {
            step: k,
            horizon: l,
            frames,
        });
    }
    let window: Vec<&[[f64; 3]]> = traj.frames[k - n..=k].iter().map(Vec::as_slice).collect();
    let mut sample = assemble_window(&window, &traj.node_types, traj.temperature[k], traj.voxel_size, k, cfg)?;
    let targets = (0..l)
        .map(|i| {
            let v_next = frame_difference(&traj.frames[k + i + 1], &traj.frames[k + i]);
            let v_now = frame_difference(&traj.frames[k + i], &traj.frames[k + i - 1]);
            frame_difference(&v_next, &v_now)
        })
        .collect();
    sample.targets = Some(targets);
    Ok(sample)
}

/// Frame indices `k` at which [`assemble_sample`] succeeds.
pub fn valid_steps(num_frames: usize, cfg: &GraphConfig) -> std::ops::Range<usize> {
    let hi = num_frames.saturating_sub(cfg.horizon);
    cfg.history..hi.max(cfg.history)
}
