//! Drives the integrator with exact accelerations from the reference model
//! and checks that the rollout reproduces the reference trajectory.
//!
//! `cargo run --release --example rollout_oracle`

use sinter_gnn::geometry::VoxelGrid;
use sinter_gnn::graphbuild::GraphConfig;
use sinter_gnn::oracle::{generate_trajectory, ProfileSpec, SupportField};
use sinter_gnn::rollout::{rollout, OraclePredictor, RolloutConfig, RolloutInput, StepObservation};

fn main() -> anyhow::Result<()> {
    env_logger::init();
    let mut grid = VoxelGrid::new([0.0; 3], 1.0, [12, 6, 8])?;
    grid.fill_block([0, 0, 0], [4, 6, 8]);
    grid.fill_block([4, 0, 5], [12, 6, 8]);
    let profile = ProfileSpec {
        steps: 104,
        ..ProfileSpec::default()
    }
    .build()?;
    let truth = generate_trajectory(&grid, &profile, "overhang")?;
    let graph = GraphConfig::default();
    let input = RolloutInput::from_trajectory(&truth, graph.history);
    let mut predictor = OraclePredictor {
        graph,
        profile,
        support: SupportField::from_grid(&grid),
        node_types: truth.node_types.clone(),
    };
    let steps = truth.num_frames() - input.seed.len();
    let mut edges = Vec::new();
    let mut observe = |o: &StepObservation| edges.push(o.num_edges);
    let res = rollout(&mut predictor, &input, &RolloutConfig::steps(steps), Some(&mut observe))?;

    let mut worst = 0.0f64;
    for (pred, frame) in res.positions.iter().zip(&truth.frames[input.seed.len()..]) {
        for (a, b) in pred.iter().zip(frame) {
            worst = worst.max((0..3).map(|d| (a[d] - b[d]).abs()).fold(0.0, f64::max));
        }
    }
    println!(
        "{steps} steps on {} nodes: max error {worst:.2e} mm, edges {}..{}, {:.0} ms",
        truth.num_nodes(),
        edges.iter().min().unwrap_or(&0),
        edges.iter().max().unwrap_or(&0),
        res.total_wall_ms
    );
    Ok(())
}
