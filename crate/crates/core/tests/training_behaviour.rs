//! Run-to-verify training behaviour on tiny oracle data.

use sinter_gnn::eval::{ablation_table, rollout_metrics};
use sinter_gnn::geometry::{voxel_centers, VoxelGrid};
use sinter_gnn::graphbuild::{assemble_sample, default_node_types, NodeType, Trajectory};
use sinter_gnn::model::forward;
use sinter_gnn::oracle::{generate_trajectory, generate_with_types, ProfileSpec};
use sinter_gnn::training::{train, TrainConfig};

fn cube(n: usize) -> VoxelGrid {
    let mut grid = VoxelGrid::new([0.0; 3], 1.0, [n, n, n]).unwrap();
    grid.fill_block([0, 0, 0], [n, n, n]);
    grid
}

fn tiny_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        latent: 16,
        hidden: 16,
        global_latent: 4,
        rounds: 2,
        epochs,
        learning_rate: 1e-3,
        lr_decay: 1.0,
        use_noise: false,
        use_edge_dropout: false,
        ..TrainConfig::default()
    }
}

/// One graph: frames 0..=n+l with a single valid sample at k = n.
fn single_sample(grid: &VoxelGrid, types: Vec<NodeType>) -> Trajectory {
    let cfg = TrainConfig::default();
    let profile = ProfileSpec {
        steps: 30,
        ..ProfileSpec::default()
    }
    .build()
    .unwrap();
    let mut traj = generate_with_types(grid, &profile, "one", types).unwrap();
    let keep = cfg.history + cfg.horizon + 1;
    traj.frames.drain(..traj.num_frames() - keep);
    traj.temperature.drain(..traj.temperature.len() - keep);
    traj
}

#[test]
fn single_sample_overfit_drops_loss_a_hundredfold() {
    let grid = cube(3);
    let traj = single_sample(&grid, default_node_types(&voxel_centers(&grid), 1.0));
    let out = train(std::slice::from_ref(&traj), &[], &tiny_config(500)).unwrap();
    let first = out.log[0].val_1step_mse;
    let last = out.log.last().unwrap().val_1step_mse;
    assert!(first / last >= 100.0, "1-step MSE {first:e} -> {last:e}");
}

#[test]
fn anchoring_silences_fixed_nodes() {
    let grid = cube(3);
    let centers = voxel_centers(&grid);
    // Pin the left face; everything else is free to move.
    let types: Vec<NodeType> = centers
        .iter()
        .map(|p| if p[0] < 1.0 { NodeType::Fixed } else { NodeType::Free })
        .collect();
    let traj = single_sample(&grid, types.clone());
    let cfg = TrainConfig {
        anchor_weight: 1.0,
        ..tiny_config(500)
    };
    let out = train(std::slice::from_ref(&traj), &[], &cfg).unwrap();
    let sample = assemble_sample(&traj, cfg.history, &cfg.graph_config()).unwrap();
    let pred = forward(&sample, &out.params).unwrap();
    let magnitude = |want: NodeType| {
        let picked: Vec<f64> = pred[0]
            .iter()
            .zip(&types)
            .filter(|(_, &t)| t == want)
            .map(|(a, _)| (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt())
            .collect();
        picked.iter().sum::<f64>() / picked.len() as f64
    };
    let (fixed, free) = (magnitude(NodeType::Fixed), magnitude(NodeType::Free));
    assert!(fixed < 0.1 * free, "fixed {fixed:e} vs free {free:e}");
}

#[test]
fn rollout_metrics_match_independent_computation() {
    let profile = ProfileSpec {
        steps: 20,
        ..ProfileSpec::default()
    }
    .build()
    .unwrap();
    let truth = generate_trajectory(&cube(4), &profile, "c").unwrap();
    let mut pred = truth.clone();
    for (t, frame) in pred.frames.iter_mut().enumerate() {
        for (i, p) in frame.iter_mut().enumerate() {
            p[i % 3] += 0.01 * ((t * 7 + i * 13) % 11) as f64 - 0.05;
        }
    }
    let m = rollout_metrics(&pred, &truth).unwrap();

    let (frames, nodes) = (truth.num_frames(), truth.num_nodes());
    let mut sq = 0.0;
    for t in 0..frames {
        for i in 0..nodes {
            for d in 0..3 {
                sq += (pred.frames[t][i][d] - truth.frames[t][i][d]).powi(2);
            }
        }
    }
    let last: Vec<f64> = (0..nodes)
        .map(|i| {
            (0..3)
                .map(|d| (pred.frames[frames - 1][i][d] - truth.frames[frames - 1][i][d]).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let lo: Vec<f64> = (0..3)
        .map(|d| truth.frames[0].iter().map(|p| p[d]).fold(f64::MAX, f64::min))
        .collect();
    let hi: Vec<f64> = (0..3)
        .map(|d| truth.frames[0].iter().map(|p| p[d]).fold(f64::MIN, f64::max))
        .collect();
    let diagonal = (0..3).map(|d| (hi[d] - lo[d]).powi(2)).sum::<f64>().sqrt();

    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs().max(1e-12);
    assert!(close(m.rollout_mse, sq / (frames * nodes) as f64));
    assert!(close(m.mean_nodal_dev, last.iter().sum::<f64>() / nodes as f64));
    assert!(close(m.max_nodal_dev, last.iter().copied().fold(0.0, f64::max)));
    assert!(close(m.diagonal_mm, diagonal));
}

#[test]
fn identical_configs_give_identical_ablation_rows() {
    let profile = ProfileSpec {
        steps: 12,
        ..ProfileSpec::default()
    }
    .build()
    .unwrap();
    let train_set = vec![generate_trajectory(&cube(3), &profile, "a").unwrap()];
    let held_out = vec![generate_trajectory(&cube(2), &profile, "b").unwrap()];
    let cfg = tiny_config(2);
    let table = ablation_table(&[cfg.clone(), cfg.clone(), cfg.clone(), cfg], &train_set, &held_out).unwrap();
    assert_eq!(table.rows.len(), 4);
    for row in &table.rows[1..] {
        assert_eq!(row.parts, table.rows[0].parts);
    }
}
