//! Compares every analytic parameter gradient of a reduced model with central
//! finite differences on a small real sample.
//!
//! `cargo run --release --example gradient_check -- [latent rounds]`

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sinter_gnn::geometry::VoxelGrid;
use sinter_gnn::graphbuild::{assemble_sample, GraphConfig};
use sinter_gnn::model::{forward_normalized, GradientSession, ModelConfig, ModelParams, NormStats, Tensor2};
use sinter_gnn::oracle::{generate_trajectory, ProfileSpec};
use sinter_gnn::training::{fit_trajectory_stats, sample_index};

fn main() -> anyhow::Result<()> {
    env_logger::init();
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    let (latent, rounds) = match args.as_slice() {
        [d, m] => (*d, *m),
        _ => (32, 2),
    };
    let mut grid = VoxelGrid::new([0.0; 3], 1.0, [5, 2, 2])?;
    grid.fill_block([0, 0, 0], [5, 2, 2]);
    let profile = ProfileSpec {
        steps: 20,
        ..ProfileSpec::default()
    }
    .build()?;
    let traj = generate_trajectory(&grid, &profile, "bar")?;
    let cfg = ModelConfig {
        graph: GraphConfig::default(),
        latent,
        hidden: latent,
        rounds,
        ..ModelConfig::default()
    };
    let data = std::slice::from_ref(&traj);
    let norm: NormStats = fit_trajectory_stats(data, &cfg.graph, &sample_index(data, &cfg.graph, 1))?;
    let sample = assemble_sample(&traj, 10, &cfg.graph)?;
    let mut params = ModelParams::init(cfg.clone(), norm, 5);
    params.randomize_biases(0.1, 5);

    let rows = sample.num_nodes();
    let cols = cfg.output_width();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let weights = Tensor2::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect(),
    );
    let loss = |p: &ModelParams| -> anyhow::Result<f64> {
        let out = forward_normalized(&sample, p)?;
        Ok(out.data.iter().zip(&weights.data).map(|(a, b)| a * b).sum())
    };
    let mut session = GradientSession::new(&params);
    session.forward(&sample)?;
    let grads = session.backward(&weights)?;

    let h = 1e-5;
    let mut probe = params.clone();
    let mut worst = (0.0f64, 0usize);
    for i in 0..params.param_count() {
        let orig = probe.values[i];
        probe.values[i] = orig + h;
        let up = loss(&probe)?;
        probe.values[i] = orig - h;
        let down = loss(&probe)?;
        probe.values[i] = orig;
        let fd = (up - down) / (2.0 * h);
        let a = grads.values[i];
        let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
        if rel > worst.0 {
            worst = (rel, i);
        }
    }
    let name = params
        .named_offsets()
        .into_iter()
        .filter(|(_, off)| *off <= worst.1)
        .last()
        .map(|(e, _)| e.name.clone())
        .unwrap_or_default();
    println!(
        "{} nodes, {} parameters: max relative error {:.2e} (in {name})",
        rows,
        params.param_count(),
        worst.0
    );
    Ok(())
}
