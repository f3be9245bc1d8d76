//! Times a full-size rollout: 10,000 nodes, D = 128, M = 10, 50 steps.
//!
//! `cargo run --release --example inference_speed -- [nodes_x nodes_y nodes_z steps]`

use sinter_gnn::geometry::VoxelGrid;
use sinter_gnn::model::{ModelConfig, ModelParams, NormStats};
use sinter_gnn::oracle::{generate_trajectory, ProfileSpec};
use sinter_gnn::rollout::{rollout, ModelPredictor, RolloutConfig, RolloutInput};

fn main() -> anyhow::Result<()> {
    env_logger::init();
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    let (nx, ny, nz, steps) = match args.as_slice() {
        [x, y, z, s] => (*x, *y, *z, *s),
        _ => (25, 20, 20, 50),
    };
    let mut grid = VoxelGrid::new([0.0; 3], 1.0, [nx, ny, nz])?;
    grid.fill_block([0, 0, 0], [nx, ny, nz]);
    let profile = ProfileSpec {
        steps: steps + 8,
        ..ProfileSpec::default()
    }
    .build()?;
    let truth = generate_trajectory(&grid, &profile, "block")?;

    let cfg = ModelConfig::default();
    // Near-zero accelerations keep the part intact, so every step sees the
    // full edge count instead of a part that random weights blow apart.
    let mut norm = NormStats::identity(cfg.node_feature_width());
    norm.target_std = vec![1e-6; 3];
    let params = ModelParams::init(cfg.clone(), norm, 1);
    let input = RolloutInput::from_trajectory(&truth, cfg.graph.history);
    let res = rollout(
        &mut ModelPredictor { params: &params },
        &input,
        &RolloutConfig::steps(steps),
        None,
    )?;
    let per_step = &res.step_wall_ms;
    println!(
        "{} nodes, {} steps: total {:.1} s, per step min {:.0} ms / max {:.0} ms",
        truth.num_nodes(),
        steps,
        res.total_wall_ms / 1e3,
        per_step.iter().copied().fold(f64::INFINITY, f64::min),
        per_step.iter().copied().fold(0.0, f64::max)
    );
    Ok(())
}
