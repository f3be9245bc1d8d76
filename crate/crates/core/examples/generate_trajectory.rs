//! Runs the reference deformation model on a cantilevered part and reports
//! shrinkage, sag and base drag.
//!
//! `cargo run --release --example generate_trajectory -- [out_dir]`

use sinter_gnn::geometry::VoxelGrid;
use sinter_gnn::graphbuild::{write_trajectory, NodeType, NodeTypeCounts};
use sinter_gnn::oracle::{generate_trajectory, ProfileSpec};

fn main() -> anyhow::Result<()> {
    env_logger::init();
    // A post with an overhanging arm: the arm has no material below it.
    let mut grid = VoxelGrid::new([0.0; 3], 1.0, [16, 4, 10])?;
    grid.fill_block([0, 0, 0], [4, 4, 10]);
    grid.fill_block([4, 0, 7], [16, 4, 10]);
    let profile = ProfileSpec::default().build()?;
    let traj = generate_trajectory(&grid, &profile, "overhang")?;

    let counts = NodeTypeCounts::of(&traj.node_types);
    println!(
        "{} nodes x {} frames, {:?}",
        traj.num_nodes(),
        traj.num_frames(),
        counts
    );
    let (first, last) = (&traj.frames[0], traj.frames.last().unwrap());
    let extent = |f: &[[f64; 3]], d: usize| {
        let (lo, hi) = f
            .iter()
            .fold((f64::MAX, f64::MIN), |(lo, hi), p| (lo.min(p[d]), hi.max(p[d])));
        hi - lo
    };
    for (d, axis) in ["x", "y", "z"].iter().enumerate() {
        println!("{axis} extent {:.2} -> {:.2} mm", extent(first, d), extent(last, d));
    }
    let tip = (0..traj.num_nodes())
        .max_by(|&a, &b| first[a][0].total_cmp(&first[b][0]))
        .unwrap();
    println!("arm tip drops {:.3} mm", first[tip][2] - last[tip][2]);
    let slip: Vec<usize> = (0..traj.num_nodes())
        .filter(|&i| traj.node_types[i] == NodeType::Slip)
        .collect();
    let plane = traj.build_plane_z();
    assert!(slip.iter().all(|&i| traj.frames.iter().all(|f| f[i][2] >= plane)));
    println!("{} slip nodes stay on the build plane z = {plane}", slip.len());

    if let Some(dir) = std::env::args().nth(1) {
        write_trajectory(std::path::Path::new(&dir), &traj)?;
        println!("written to {dir}");
    }
    Ok(())
}
