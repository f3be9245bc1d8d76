//! Voxelizes an STL file, or a built-in L-bracket when no path is given,
//! and round-trips the grid through the `.vox` format.
//!
//! `cargo run --release --example voxelize_stl -- [part.stl] [voxel_size_mm]`

use sinter_gnn::geometry::{boxes_mesh, parse_stl, read_vox, voxelize, write_stl, write_vox};

fn main() -> anyhow::Result<()> {
    env_logger::init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let bytes = match args.first() {
        Some(path) => std::fs::read(path)?,
        None => write_stl(&boxes_mesh(&[
            ([0.0, 0.0, 0.0], [30.0, 10.0, 4.0]),
            ([0.0, 0.0, 4.0], [4.0, 10.0, 20.0]),
        ])),
    };
    let voxel_size: f64 = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(1.0);

    let mesh = parse_stl(&bytes)?;
    let vox = voxelize(&mesh, voxel_size)?;
    let grid = &vox.grid;
    println!(
        "{} triangles -> {:?} grid, {} occupied voxels, {} ambiguous",
        mesh.len(),
        grid.dims,
        grid.occupied_count(),
        vox.ambiguous
    );
    let encoded = write_vox(grid);
    assert_eq!(&read_vox(&encoded)?, grid);
    println!(".vox encoding: {} bytes, round trip exact", encoded.len());
    Ok(())
}
