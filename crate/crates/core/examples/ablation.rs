//! Trains the four model versions on shared data and seeds and prints the
//! comparison table for two held-out parts.
//!
//! `cargo run --release --example ablation -- [epochs]`

use sinter_gnn::eval::ablation_table;
use sinter_gnn::geometry::VoxelGrid;
use sinter_gnn::graphbuild::Trajectory;
use sinter_gnn::oracle::{generate_trajectory, ProfileSpec, SinterProfile};
use sinter_gnn::training::TrainConfig;

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
    let epochs: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(40);
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
    let held_out = vec![
        part(
            "step",
            [11, 7, 6],
            &[([0, 0, 0], [11, 7, 3]), ([0, 0, 3], [5, 7, 6])],
            &profile,
        )?,
        part(
            "slab",
            [13, 9, 5],
            &[([0, 0, 0], [13, 9, 2]), ([3, 3, 2], [9, 6, 5])],
            &profile,
        )?,
    ];
    let base = TrainConfig {
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
    let table = ablation_table(&TrainConfig::ablation_versions(&base), &train_set, &held_out)?;
    print!("{}", table.to_markdown());
    Ok(())
}
