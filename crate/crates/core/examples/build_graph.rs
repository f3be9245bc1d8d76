//! Builds the radius graph and node/edge features for one training sample.
//!
//! `cargo run --release --example build_graph`

use sinter_gnn::geometry::VoxelGrid;
use sinter_gnn::graphbuild::{assemble_sample, GraphConfig};
use sinter_gnn::oracle::{generate_trajectory, ProfileSpec};

fn main() -> anyhow::Result<()> {
    env_logger::init();
    let mut grid = VoxelGrid::new([0.0; 3], 1.0, [8, 8, 8])?;
    grid.fill_block([0, 0, 0], [8, 8, 8]);
    let profile = ProfileSpec {
        steps: 60,
        ..ProfileSpec::default()
    }
    .build()?;
    let traj = generate_trajectory(&grid, &profile, "cube")?;
    let cfg = GraphConfig::default();

    for k in [cfg.history, 30, 59 - cfg.horizon] {
        let s = assemble_sample(&traj, k, &cfg)?;
        let mut degree = vec![0usize; s.num_nodes()];
        for &r in &s.receivers {
            degree[r] += 1;
        }
        let max = degree.iter().max().copied().unwrap_or(0);
        println!(
            "step {k:2}: T = {:6.1} C, {} nodes, {} edges, in-degree {}..{}, node features {}, targets {}",
            traj.temperature[k],
            s.num_nodes(),
            s.num_edges(),
            degree.iter().min().copied().unwrap_or(0),
            max,
            s.node_feat.cols,
            s.targets.as_ref().map_or(0, |t| t.len())
        );
    }
    Ok(())
}
