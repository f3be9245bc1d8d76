use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{one_step_mse, rollout_metrics};
use super::EvalError;
use crate::graphbuild::Trajectory;
use crate::rollout::{rollout, ModelPredictor, RolloutConfig, RolloutInput};
use crate::training::{train, TrainConfig, TrainOutcome};

/// `ablation --spec` input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSpec {
    /// Shared hyperparameters; the four versions differ only in their flags.
    #[serde(default)]
    pub base: TrainConfig,
    /// Training trajectory directories.
    pub train: Vec<String>,
    /// Held-out trajectory directories, each scored separately.
    pub held_out: Vec<String>,
}

/// Scores of one held-out part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartScore {
    pub part_id: String,
    /// Normalized target units.
    pub one_step_mse: f64,
    /// mm².
    pub rollout_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub version: usize,
    pub use_temperature: bool,
    pub use_edge_dropout: bool,
    pub use_feature_norm: bool,
    pub use_anchor_loss: bool,
    pub parts: Vec<PartScore>,
}

impl AblationRow {
    pub fn mean_one_step(&self) -> f64 {
        self.parts.iter().map(|p| p.one_step_mse).sum::<f64>() / self.parts.len().max(1) as f64
    }

    pub fn mean_rollout(&self) -> f64 {
        self.parts.iter().map(|p| p.rollout_mse).sum::<f64>() / self.parts.len().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

pub const ABLATION_HEADERS: [&str; 7] = [
    "Model version",
    "Temperature",
    "Edge dropout",
    "Feature norm",
    "Anchor loss",
    "1-step MSE",
    "Rollout MSE",
];

fn joined(parts: &[PartScore], f: impl Fn(&PartScore) -> f64) -> String {
    parts
        .iter()
        .map(|p| format!("{:.3e}", f(p)))
        .collect::<Vec<_>>()
        .join(" / ")
}

impl AblationTable {
    /// Aligned markdown table, one row per model version; multi-part scores
    /// are separated by " / ".
    pub fn to_markdown(&self) -> String {
        let mark = |b: bool| if b { "x" } else { "" }.to_string();
        let cells: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.version.to_string(),
                    mark(r.use_temperature),
                    mark(r.use_edge_dropout),
                    mark(r.use_feature_norm),
                    mark(r.use_anchor_loss),
                    joined(&r.parts, |p| p.one_step_mse),
                    joined(&r.parts, |p| p.rollout_mse),
                ]
            })
            .collect();
        let mut widths: Vec<usize> = ABLATION_HEADERS.iter().map(|h| h.len()).collect();
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.len());
            }
        }
        let line = |items: &[String]| {
            let body: Vec<String> = items.iter().zip(&widths).map(|(c, w)| format!(" {c:<w$} ")).collect();
            format!("|{}|\n", body.join("|"))
        };
        let mut out = String::new();
        out.push_str(&line(&ABLATION_HEADERS.map(String::from)));
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(w + 2)).collect();
        let _ = writeln!(out, "|{}|", rule.join("|"));
        for row in &cells {
            out.push_str(&line(row));
        }
        out
    }
}

/// Scores a trained model on one held-out part: normalized 1-step MSE and the
/// MSE of a full rollout from the part's first `n + 1` frames.
pub fn score_part(outcome: &TrainOutcome, part: &Trajectory) -> Result<PartScore, EvalError> {
    let params = &outcome.params;
    let one = one_step_mse(params, std::slice::from_ref(part))?;
    let n = params.config.graph.history;
    let steps = part.num_frames().saturating_sub(n + 1);
    let rollout_mse = if steps == 0 {
        0.0
    } else {
        let input = RolloutInput::from_trajectory(part, n);
        let res = rollout(
            &mut ModelPredictor { params },
            &input,
            &RolloutConfig::steps(steps),
            None,
        )?;
        let pred = res.to_trajectory(&input, &part.part_id, part.voxel_size);
        rollout_metrics(&pred, part)?.rollout_mse
    };
    Ok(PartScore {
        part_id: part.part_id.clone(),
        one_step_mse: one.normalized,
        rollout_mse,
    })
}

/// Trains each config on `train` (shared data and seeds) and scores it on
/// every held-out part. Rows are numbered from 1 in the given order.
pub fn ablation_table(
    configs: &[TrainConfig],
    train_set: &[Trajectory],
    held_out: &[Trajectory],
) -> Result<AblationTable, EvalError> {
    let mut rows = Vec::with_capacity(configs.len());
    for (i, cfg) in configs.iter().enumerate() {
        log::info!("ablation version {}", i + 1);
        let outcome = train(train_set, &[], cfg)?;
        let parts = held_out
            .iter()
            .map(|p| score_part(&outcome, p))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(AblationRow {
            version: i + 1,
            use_temperature: cfg.use_temperature,
            use_edge_dropout: cfg.use_edge_dropout,
            use_feature_norm: cfg.use_feature_norm,
            use_anchor_loss: cfg.use_anchor_loss,
            parts,
        });
    }
    Ok(AblationTable { rows })
}
