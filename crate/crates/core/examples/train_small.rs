//! Trains a reduced model on three small parts, then rolls it out over a
//! fourth part it never saw and reports deviations relative to part size.
//!
//! `cargo run --release --example train_small -- [epochs] [checkpoint_dir]`

use sinter_gnn::eval::rollout_metrics;
use sinter_gnn::geometry::VoxelGrid;
use sinter_gnn::graphbuild::Trajectory;
use sinter_gnn::model::save_checkpoint;
use sinter_gnn::oracle::{generate_trajectory, ProfileSpec, SinterProfile};
use sinter_gnn::rollout::{rollout, ModelPredictor, RolloutConfig, RolloutInput};
use sinter_gnn::training::{train, TrainConfig};

fn part(
    id: &str,
    dims: [usize; 3],
    blocks: &[([usize; 3], [usize; 3])],
    profile: &SinterProfile,
) -> anyhow::Result<Trajectory> {
    let mut grid = VoxelGrid::new([0.0; 3], 1.0, dims)?;
    for &(lo, hi) in blocks {
        grid.fill_block(lo, hi);
    }
    Ok(generate_trajectory(&grid, profile, id)?)
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let epochs: usize = args.first().map(|s| s.parse()).transpose()?.unwrap_or(40);
    let profile = ProfileSpec {
        steps: 120,
        ..ProfileSpec::default()
    }
    .build()?;
    let train_set = vec![
        part("box", [10, 8, 5], &[([0, 0, 0], [10, 8, 5])], &profile)?,
        part(
            "lshape",
            [12, 10, 4],
            &[([0, 0, 0], [12, 4, 4]), ([0, 4, 0], [4, 10, 4])],
            &profile,
        )?,
        part("tall", [6, 6, 9], &[([0, 0, 0], [6, 6, 9])], &profile)?,
    ];
    let held_out = part(
        "step",
        [11, 7, 6],
        &[([0, 0, 0], [11, 7, 3]), ([0, 0, 3], [5, 7, 6])],
        &profile,
    )?;

    let cfg = TrainConfig {
        latent: 32,
        hidden: 32,
        global_latent: 8,
        rounds: 3,
        epochs,
        learning_rate: 1e-3,
        lr_decay: 0.95,
        validation_stride: 4,
        ..TrainConfig::default()
    };
    let outcome = train(&train_set, &[], &cfg)?;
    if let Some(dir) = args.get(1) {
        save_checkpoint(std::path::Path::new(dir), &outcome.params, "train_small")?;
    }

    for traj in train_set.iter().chain(std::iter::once(&held_out)) {
        let input = RolloutInput::from_trajectory(traj, cfg.history);
        let steps = traj.num_frames() - cfg.history - 1;
        let res = rollout(
            &mut ModelPredictor {
                params: &outcome.params,
            },
            &input,
            &RolloutConfig::steps(steps),
            None,
        )?;
        let m = rollout_metrics(&res.to_trajectory(&input, &traj.part_id, traj.voxel_size), traj)?;
        println!(
            "{:7} {:4} nodes  max dev {:.2}% / mean dev {:.2}% of {:.1} mm diagonal  ({:.0} ms)",
            traj.part_id,
            traj.num_nodes(),
            m.max_dev_pct_of_diagonal,
            100.0 * m.mean_nodal_dev / m.diagonal_mm,
            m.diagonal_mm,
            res.total_wall_ms
        );
    }
    Ok(())
}
