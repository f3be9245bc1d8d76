use crate::graphbuild::NodeType;
use crate::model::Accelerations;
use crate::tensor::Tensor2;

use super::TrainError;

fn check_shapes(pred: &Accelerations, target: &Accelerations) -> Result<(), TrainError> {
    let same = pred.len() == target.len() && pred.iter().zip(target).all(|(a, b)| a.len() == b.len());
    if same {
        Ok(())
    } else {
        Err(TrainError::ShapeMismatch {
            pred: shape(pred),
            target: shape(target),
        })
    }
}

fn shape(a: &Accelerations) -> (usize, usize) {
    (a.len(), a.first().map_or(0, Vec::len))
}

fn slot_mse(pred: &[[f64; 3]], target: &[[f64; 3]]) -> f64 {
    if pred.is_empty() {
        return 0.0;
    }
    let sum: f64 = pred
        .iter()
        .zip(target)
        .flat_map(|(p, t)| (0..3).map(move |d| (p[d] - t[d]) * (p[d] - t[d])))
        .sum();
    sum / (3 * pred.len()) as f64
}

/// `Σ_i γ^(i-1) · MSE(pred_i, target_i)`, each MSE a mean over nodes and axes.
pub fn discounted_loss(pred: &Accelerations, target: &Accelerations, gamma: f64) -> Result<f64, TrainError> {
    check_shapes(pred, target)?;
    let mut weight = 1.0;
    let mut total = 0.0;
    for (p, t) in pred.iter().zip(target) {
        total += weight * slot_mse(p, t);
        weight *= gamma;
    }
    Ok(total)
}

/// Whether axis `d` of a node of type `t` is constrained to zero acceleration.
pub fn is_constrained(t: NodeType, d: usize) -> bool {
    match t {
        NodeType::Free => false,
        NodeType::Fixed => true,
        NodeType::Slip => d == 2,
    }
}

/// Mean squared predicted acceleration over constrained components: all three
/// axes of Fixed nodes, z of Slip nodes. Zero when nothing is constrained.
pub fn anchor_loss(pred: &Accelerations, types: &[NodeType]) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for slot in pred {
        for (a, &t) in slot.iter().zip(types) {
            for (d, x) in a.iter().enumerate() {
                if is_constrained(t, d) {
                    sum += x * x;
                    count += 1;
                }
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Training objective for one sample, in normalized target units, and its
/// gradient with respect to the `N x 3l` network output.
///
/// The anchor term is applied to `pred + mean/std`, the predicted physical
/// acceleration measured in target standard deviations, so that zero means
/// "not moving" rather than "moving at the mean rate".
pub fn sample_objective(
    out: &Tensor2,
    target: &Accelerations,
    types: &[NodeType],
    gamma: f64,
    anchor: Option<(f64, [f64; 3])>,
) -> Result<(f64, Tensor2), TrainError> {
    let horizon = target.len();
    let n = out.rows;
    if out.cols != 3 * horizon || target.iter().any(|t| t.len() != n) || types.len() != n {
        return Err(TrainError::ShapeMismatch {
            pred: (out.cols / 3, n),
            target: shape(target),
        });
    }
    let mut grad = Tensor2::zeros(n, out.cols);
    let mut loss = 0.0;
    if n == 0 {
        return Ok((loss, grad));
    }
    let scale = 1.0 / (3 * n) as f64;
    let mut weight = 1.0;
    for (s, slot) in target.iter().enumerate() {
        let mut sum = 0.0;
        for (i, t) in slot.iter().enumerate() {
            let row = out.row(i);
            let g = grad.row_mut(i);
            for d in 0..3 {
                let diff = row[3 * s + d] - t[d];
                sum += diff * diff;
                g[3 * s + d] = weight * 2.0 * diff * scale;
            }
        }
        loss += weight * sum * scale;
        weight *= gamma;
    }

    if let Some((lambda, shift)) = anchor {
        let count: usize = types
            .iter()
            .map(|&t| (0..3).filter(|&d| is_constrained(t, d)).count())
            .sum::<usize>()
            * horizon;
        if count > 0 && lambda != 0.0 {
            let mut sum = 0.0;
            let c = lambda / count as f64;
            for (i, &t) in types.iter().enumerate() {
                for s in 0..horizon {
                    for (d, sh) in shift.iter().enumerate() {
                        if is_constrained(t, d) {
                            let a = out.row(i)[3 * s + d] + sh;
                            sum += a * a;
                            grad.row_mut(i)[3 * s + d] += 2.0 * c * a;
                        }
                    }
                }
            }
            loss += c * sum;
        }
    }
    Ok((loss, grad))
}
