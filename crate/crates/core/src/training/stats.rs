use crate::graphbuild::GraphSample;
use crate::model::NormStats;

use super::TrainError;

/// Streaming per-dimension mean and population variance (Welford).
#[derive(Debug, Clone, Default)]
pub struct RunningMoments {
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl RunningMoments {
    pub fn new(dims: usize) -> Self {
        RunningMoments {
            count: 0,
            mean: vec![0.0; dims],
            m2: vec![0.0; dims],
        }
    }

    pub fn push(&mut self, x: &[f64]) {
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let delta = v - *m;
            *m += delta / n;
            *s += delta * (v - *m);
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> Vec<f64> {
        self.mean.clone()
    }

    pub fn std(&self) -> Vec<f64> {
        let n = self.count.max(1) as f64;
        self.m2.iter().map(|s| (s / n).sqrt()).collect()
    }
}

/// Accumulates [`NormStats`] over samples one at a time.
#[derive(Debug, Clone)]
pub struct NormAccumulator {
    nodes: RunningMoments,
    edges: RunningMoments,
    targets: RunningMoments,
    samples: usize,
}

impl NormAccumulator {
    pub fn new(node_width: usize, edge_width: usize) -> Self {
        NormAccumulator {
            nodes: RunningMoments::new(node_width),
            edges: RunningMoments::new(edge_width),
            targets: RunningMoments::new(3),
            samples: 0,
        }
    }

    pub fn add(&mut self, sample: &GraphSample) {
        self.samples += 1;
        for i in 0..sample.node_feat.rows {
            self.nodes.push(sample.node_feat.row(i));
        }
        for e in 0..sample.edge_feat.rows {
            self.edges.push(sample.edge_feat.row(e));
        }
        for a in sample.targets.iter().flatten().flatten() {
            self.targets.push(a);
        }
    }

    pub fn finish(self) -> Result<NormStats, TrainError> {
        if self.samples == 0 {
            return Err(TrainError::EmptyDataset);
        }
        let mut stats = NormStats {
            node_mean: self.nodes.mean(),
            node_std: self.nodes.std(),
            edge_mean: self.edges.mean(),
            edge_std: self.edges.std(),
            target_mean: self.targets.mean(),
            target_std: self.targets.std(),
        };
        stats.clamp();
        Ok(stats)
    }
}

/// Mean and population std of node features, edge features and targets over
/// every node, edge and horizon slot; std clamped at 1e-8.
pub fn fit_norm_stats(samples: &[GraphSample]) -> Result<NormStats, TrainError> {
    let first = samples.first().ok_or(TrainError::EmptyDataset)?;
    let mut acc = NormAccumulator::new(first.node_feat.cols, first.edge_feat.cols);
    for s in samples {
        acc.add(s);
    }
    acc.finish()
}
