//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines are always printed.
//! `cargo test --release --test acceptance -- 3 7` runs a subset.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sinter_gnn::eval::{ablation_table, rollout_metrics};
use sinter_gnn::geometry::{boxes_mesh, parse_stl, read_vox, voxel_centers, voxelize, write_stl, write_vox, VoxelGrid};
use sinter_gnn::graphbuild::{
    assemble_sample, build_edges, default_node_types, read_trajectory, write_trajectory, GraphConfig, NodeType,
    Trajectory,
};
use sinter_gnn::model::{
    forward_normalized, load_checkpoint, save_checkpoint, GradientSession, ModelConfig, ModelParams, NormStats, Tensor2,
};
use sinter_gnn::oracle::{generate_trajectory, generate_with_types, ProfileSpec, SinterProfile, SupportField};
use sinter_gnn::rollout::{
    rollout, ModelPredictor, OraclePredictor, Predictor, RolloutConfig, RolloutInput, RolloutResult,
};
use sinter_gnn::training::{discounted_loss, fit_trajectory_stats, sample_index, train, TrainConfig};

type Check = Result<String, String>;

static ROLLOUTS_CHECKED: AtomicUsize = AtomicUsize::new(0);
static STEPS_CHECKED: AtomicUsize = AtomicUsize::new(0);
static VIOLATIONS: AtomicUsize = AtomicUsize::new(0);

/// Runs a rollout and audits every predicted frame: Fixed nodes must keep
/// their seed position bit for bit, Slip nodes must stay on or above the plane.
fn audited_rollout(predictor: &mut dyn Predictor, input: &RolloutInput, steps: usize) -> RolloutResult {
    let res = rollout(predictor, input, &RolloutConfig::steps(steps), None).expect("rollout");
    let anchor = input.seed.last().unwrap();
    let mut bad = 0;
    for frame in &res.positions {
        for (i, t) in input.node_types.iter().enumerate() {
            let ok = match t {
                NodeType::Fixed => frame[i].map(f64::to_bits) == anchor[i].map(f64::to_bits),
                NodeType::Slip => frame[i][2] >= input.build_plane_z,
                NodeType::Free => true,
            };
            bad += usize::from(!ok);
        }
    }
    ROLLOUTS_CHECKED.fetch_add(1, Ordering::Relaxed);
    STEPS_CHECKED.fetch_add(res.positions.len(), Ordering::Relaxed);
    VIOLATIONS.fetch_add(bad, Ordering::Relaxed);
    res
}

fn grid(dims: [usize; 3], blocks: &[([usize; 3], [usize; 3])]) -> VoxelGrid {
    let mut g = VoxelGrid::new([0.0; 3], 1.0, dims).unwrap();
    for &(lo, hi) in blocks {
        g.fill_block(lo, hi);
    }
    g
}

fn profile(steps: usize) -> SinterProfile {
    ProfileSpec {
        steps,
        ..ProfileSpec::default()
    }
    .build()
    .unwrap()
}

/// The desk-scale corpus: three training parts and two held-out parts, 1 mm voxels.
fn corpus(steps: usize) -> (Vec<Trajectory>, Vec<Trajectory>) {
    let p = profile(steps);
    let part =
        |id: &str, dims, blocks: &[([usize; 3], [usize; 3])]| generate_trajectory(&grid(dims, blocks), &p, id).unwrap();
    let train_set = vec![
        part("box", [10, 8, 5], &[([0, 0, 0], [10, 8, 5])]),
        part(
            "lshape",
            [12, 10, 4],
            &[([0, 0, 0], [12, 4, 4]), ([0, 4, 0], [4, 10, 4])],
        ),
        part("tall", [6, 6, 9], &[([0, 0, 0], [6, 6, 9])]),
    ];
    let held_out = vec![
        part("step", [11, 7, 6], &[([0, 0, 0], [11, 7, 3]), ([0, 0, 3], [5, 7, 6])]),
        part("slab", [13, 9, 5], &[([0, 0, 0], [13, 9, 2]), ([3, 3, 2], [9, 6, 5])]),
    ];
    (train_set, held_out)
}

fn desk_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        latent: 32,
        hidden: 32,
        global_latent: 8,
        rounds: 3,
        epochs,
        learning_rate: 1e-3,
        lr_decay: 0.95,
        validation_stride: 4,
        ..TrainConfig::default()
    }
}

fn neighbor_count() -> Check {
    let t0 = Instant::now();
    let spacing = 0.7;
    let pos: Vec<[f64; 3]> = (0..125)
        .map(|i| {
            [
                (i % 5) as f64 * spacing,
                ((i / 5) % 5) as f64 * spacing,
                (i / 25) as f64 * spacing,
            ]
        })
        .collect();
    let (senders, _) = build_edges(&pos, 1.2 * spacing).map_err(|e| e.to_string())?;
    let mut out_degree = vec![0usize; pos.len()];
    for s in senders {
        out_degree[s] += 1;
    }
    let interior: Vec<usize> = (0..125)
        .filter(|&i| {
            let c = [i % 5, (i / 5) % 5, i / 25];
            c.iter().all(|&x| (1..4).contains(&x))
        })
        .collect();
    let wrong = interior.iter().filter(|&&i| out_degree[i] != 6).count();
    let secs = t0.elapsed().as_secs_f64();
    let detail = format!(
        "{} interior nodes, {wrong} with out-degree != 6, {secs:.3} s",
        interior.len()
    );
    if wrong == 0 && interior.len() == 27 && secs < 1.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn kdtree_vs_brute_force() -> Check {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pos: Vec<[f64; 3]> = (0..500)
        .map(|_| std::array::from_fn(|_| rng.random_range(0.0..10.0)))
        .collect();
    let mut sizes = Vec::new();
    for radius in [0.5, 1.2, 2.5] {
        let (s, r) = build_edges(&pos, radius).map_err(|e| e.to_string())?;
        let tree: BTreeSet<(usize, usize)> = s.into_iter().zip(r).collect();
        let mut brute = BTreeSet::new();
        for i in 0..pos.len() {
            for j in 0..pos.len() {
                let d2: f64 = (0..3).map(|d| (pos[i][d] - pos[j][d]).powi(2)).sum();
                if i != j && d2 <= radius * radius {
                    brute.insert((i, j));
                }
            }
        }
        if tree != brute {
            return Err(format!(
                "radius {radius}: {} tree edges vs {} brute-force",
                tree.len(),
                brute.len()
            ));
        }
        sizes.push(tree.len());
    }
    let secs = t0.elapsed().as_secs_f64();
    let detail = format!("edge sets equal at 3 radii ({sizes:?} edges), {secs:.2} s");
    if secs < 5.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gradient_check() -> Check {
    let t0 = Instant::now();
    let traj = generate_trajectory(&grid([5, 2, 2], &[([0, 0, 0], [5, 2, 2])]), &profile(20), "bar").unwrap();
    let cfg = ModelConfig {
        latent: 32,
        hidden: 32,
        rounds: 2,
        ..ModelConfig::default()
    };
    let data = std::slice::from_ref(&traj);
    let norm = fit_trajectory_stats(data, &cfg.graph, &sample_index(data, &cfg.graph, 1)).map_err(|e| e.to_string())?;
    let sample = assemble_sample(&traj, 10, &cfg.graph).map_err(|e| e.to_string())?;
    let mut params = ModelParams::init(cfg.clone(), norm, 3);
    params.randomize_biases(0.1, 3);

    let (rows, cols) = (sample.num_nodes(), cfg.output_width());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let weights = Tensor2::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect(),
    );
    let loss = |p: &ModelParams| -> f64 {
        let out = forward_normalized(&sample, p).unwrap();
        out.data.iter().zip(&weights.data).map(|(a, b)| a * b).sum()
    };
    let mut session = GradientSession::new(&params);
    session.forward(&sample).map_err(|e| e.to_string())?;
    let grads = session.backward(&weights).map_err(|e| e.to_string())?;

    let h = 1e-5;
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    for i in 0..params.param_count() {
        let orig = probe.values[i];
        probe.values[i] = orig + h;
        let up = loss(&probe);
        probe.values[i] = orig - h;
        let down = loss(&probe);
        probe.values[i] = orig;
        let fd = (up - down) / (2.0 * h);
        let a = grads.values[i];
        worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-6));
    }
    let secs = t0.elapsed().as_secs_f64();
    let detail = format!(
        "{rows} nodes, {} parameters, max relative error {worst:.2e}, {secs:.1} s",
        params.param_count()
    );
    if worst < 1e-4 && secs < 60.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn loss_algebra() -> Check {
    // Per-step MSEs 1 and 4: every entry of slot 0 is off by 1, of slot 1 by 2.
    let target = vec![vec![[0.0; 3]; 5]; 2];
    let pred = vec![vec![[1.0, -1.0, 1.0]; 5], vec![[2.0, 2.0, -2.0]; 5]];
    let two = discounted_loss(&pred, &target, 0.5).map_err(|e| e.to_string())?;
    let one_pred = vec![vec![[0.3, -0.2, 0.9], [1.5, 0.0, -0.4]]];
    let one_target = vec![vec![[0.1, 0.1, 0.1], [-0.5, 0.25, 0.0]]];
    let one = discounted_loss(&one_pred, &one_target, 0.5).map_err(|e| e.to_string())?;
    let plain: f64 = one_pred[0]
        .iter()
        .zip(&one_target[0])
        .flat_map(|(p, t)| (0..3).map(move |d| (p[d] - t[d]).powi(2)))
        .sum::<f64>()
        / 6.0;
    let detail = format!("l=2, gamma=0.5 -> {two}; l=1 -> {one} vs plain MSE {plain}");
    if (two - 3.0).abs() <= 1e-12 && one == plain {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Post with an overhanging arm; the far end of the arm is pinned.
fn constrained_part(steps: usize) -> (VoxelGrid, Trajectory, SinterProfile) {
    let g = grid([12, 6, 8], &[([0, 0, 0], [4, 6, 8]), ([4, 0, 5], [12, 6, 8])]);
    let centers = voxel_centers(&g);
    let mut types = default_node_types(&centers, g.voxel_size);
    for (t, p) in types.iter_mut().zip(&centers) {
        if p[0] > 11.0 {
            *t = NodeType::Fixed;
        }
    }
    let p = profile(steps);
    let traj = generate_with_types(&g, &p, "post", types).unwrap();
    (g, traj, p)
}

fn rollout_identity() -> Check {
    let t0 = Instant::now();
    let (g, truth, p) = constrained_part(104);
    let graph = GraphConfig::default();
    let input = RolloutInput::from_trajectory(&truth, graph.history);
    let mut predictor = OraclePredictor {
        graph,
        profile: p,
        support: SupportField::from_grid(&g),
        node_types: truth.node_types.clone(),
    };
    let res = audited_rollout(&mut predictor, &input, 100);
    let mut worst = 0.0f64;
    for (pred, frame) in res.positions.iter().zip(&truth.frames[input.seed.len()..]) {
        for (a, b) in pred.iter().zip(frame) {
            worst = worst.max(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt());
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    let detail = format!(
        "{} steps, {} nodes, max nodal error {worst:.2e} mm, {secs:.2} s",
        res.positions.len(),
        truth.num_nodes()
    );
    if res.positions.len() == 100 && worst < 1e-9 && secs < 10.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Rollouts under a model with large random outputs, which would push every
/// node off its constraint without the projection.
fn adversarial_constraint_rollouts() {
    let (_, truth, _) = constrained_part(40);
    for seed in 0..3 {
        let cfg = ModelConfig {
            latent: 8,
            hidden: 8,
            global_latent: 4,
            rounds: 1,
            ..ModelConfig::default()
        };
        let mut norm = NormStats::identity(cfg.node_feature_width());
        norm.target_std = vec![0.5; 3];
        norm.target_mean = vec![0.0, 0.0, -0.3];
        let mut params = ModelParams::init(cfg.clone(), norm, seed);
        params.randomize_biases(1.0, seed);
        let input = RolloutInput::from_trajectory(&truth, cfg.graph.history);
        audited_rollout(&mut ModelPredictor { params: &params }, &input, 30);
    }
}

fn constraint_safety() -> Check {
    let (rollouts, steps, bad) = (
        ROLLOUTS_CHECKED.load(Ordering::Relaxed),
        STEPS_CHECKED.load(Ordering::Relaxed),
        VIOLATIONS.load(Ordering::Relaxed),
    );
    let detail = format!("{rollouts} audited rollouts, {steps} steps, {bad} violations");
    if bad == 0 && rollouts > 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn learnability() -> Check {
    let (train_set, held_out) = corpus(120);
    let part = &held_out[0];
    let cfg = desk_config(40);
    let t0 = Instant::now();
    let outcome = train(&train_set, &[], &cfg).map_err(|e| e.to_string())?;
    let train_secs = t0.elapsed().as_secs_f64();
    let input = RolloutInput::from_trajectory(part, cfg.history);
    let res = audited_rollout(
        &mut ModelPredictor {
            params: &outcome.params,
        },
        &input,
        part.num_frames() - cfg.history - 1,
    );
    let m =
        rollout_metrics(&res.to_trajectory(&input, &part.part_id, part.voxel_size), part).map_err(|e| e.to_string())?;
    let mean_pct = 100.0 * m.mean_nodal_dev / m.diagonal_mm;
    let nodes: Vec<usize> = train_set.iter().map(Trajectory::num_nodes).collect();
    let detail = format!(
        "train parts {nodes:?} nodes, held-out '{}' {} nodes: max dev {:.2}% / mean dev {mean_pct:.2}% of {:.1} mm; train {train_secs:.0} s, rollout {:.2} s",
        part.part_id,
        part.num_nodes(),
        m.max_dev_pct_of_diagonal,
        m.diagonal_mm,
        res.total_wall_ms / 1e3
    );
    if m.max_dev_pct_of_diagonal < 5.0 && mean_pct < 1.5 && train_secs <= 1800.0 && res.total_wall_ms <= 30_000.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn ablation_trend() -> Check {
    let (train_set, held_out) = corpus(120);
    let table = ablation_table(&TrainConfig::ablation_versions(&desk_config(40)), &train_set, &held_out)
        .map_err(|e| e.to_string())?;
    println!("{}", table.to_markdown());
    let mse: Vec<f64> = table.rows.iter().map(|r| r.mean_one_step()).collect();
    let (r41, r21) = (mse[0] / mse[3], mse[0] / mse[1]);
    let detail = format!("held-out 1-step MSE ratio v1/v4 = {r41:.2}, v1/v2 = {r21:.2} (need >= 1.5 each)");
    if r41 >= 1.5 && r21 >= 1.5 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn inference_speed() -> Check {
    let (nx, ny, nz) = (25, 20, 20);
    let g = grid([nx, ny, nz], &[([0, 0, 0], [nx, ny, nz])]);
    let truth = generate_trajectory(&g, &profile(58), "block").unwrap();
    let cfg = ModelConfig::default();
    // Near-zero accelerations keep the part intact, so every step sees the
    // full edge count instead of a part that random weights blow apart.
    let mut norm = NormStats::identity(cfg.node_feature_width());
    norm.target_std = vec![1e-6; 3];
    let params = ModelParams::init(cfg.clone(), norm, 9);
    let input = RolloutInput::from_trajectory(&truth, cfg.graph.history);
    let res = audited_rollout(&mut ModelPredictor { params: &params }, &input, 50);
    let steps: Vec<String> = res.step_wall_ms.iter().map(|ms| format!("{ms:.0}")).collect();
    println!("    per-step wall ms: {}", steps.join(" "));
    let secs = res.total_wall_ms / 1e3;
    let detail = format!(
        "{} nodes, D={} M={}, 50 steps in {secs:.1} s on {} thread(s)",
        truth.num_nodes(),
        cfg.latent,
        cfg.rounds,
        rayon::current_num_threads()
    );
    if secs <= 60.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn determinism() -> Check {
    let (train_set, held_out) = corpus(24);
    let cfg = desk_config(3);
    let a = train(&train_set, &[], &cfg).map_err(|e| e.to_string())?;
    let b = train(&train_set, &[], &cfg).map_err(|e| e.to_string())?;
    let strip = |log: &[sinter_gnn::training::EpochRecord]| -> Vec<[u64; 3]> {
        log.iter()
            .map(|r| [r.train_loss.to_bits(), r.val_1step_mse.to_bits(), r.lr.to_bits()])
            .collect()
    };
    let logs_equal = strip(&a.log) == strip(&b.log) && a.params.values == b.params.values;
    let part = &held_out[0];
    let input = RolloutInput::from_trajectory(part, cfg.history);
    let steps = part.num_frames() - cfg.history - 1;
    let r1 = audited_rollout(&mut ModelPredictor { params: &a.params }, &input, steps);
    let r2 = audited_rollout(&mut ModelPredictor { params: &a.params }, &input, steps);
    let bits =
        |r: &RolloutResult| -> Vec<u64> { r.positions.iter().flatten().flatten().map(|x| x.to_bits()).collect() };
    let rollouts_equal = bits(&r1) == bits(&r2);
    let detail = format!("loss logs identical: {logs_equal}; rollout positions bitwise identical: {rollouts_equal}");
    if logs_equal && rollouts_equal {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn round_trips() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mesh = boxes_mesh(&[([0.0, 0.0, 0.0], [7.3, 4.1, 2.0]), ([0.5, 0.25, 2.0], [3.0, 4.0, 6.6])]);
    let stl_ok = parse_stl(&write_stl(&mesh)).map_err(|e| e.to_string())? == mesh;
    let g = voxelize(&mesh, 0.5).map_err(|e| e.to_string())?.grid;
    let vox_ok = read_vox(&write_vox(&g)).map_err(|e| e.to_string())? == g;

    let cfg = ModelConfig {
        latent: 8,
        hidden: 8,
        global_latent: 4,
        rounds: 2,
        ..ModelConfig::default()
    };
    let mut params = ModelParams::init(cfg.clone(), NormStats::identity(cfg.node_feature_width()), 4);
    params.randomize_biases(0.3, 4);
    let ckpt = dir.path().join("ckpt");
    save_checkpoint(&ckpt, &params, "rt").map_err(|e| e.to_string())?;
    let (loaded, manifest) = load_checkpoint(&ckpt).map_err(|e| e.to_string())?;
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    let ckpt_ok = bits(&loaded.values) == bits(&params.values)
        && loaded.config == params.config
        && loaded.norm == params.norm
        && manifest.id == "rt";

    let (_, traj, _) = constrained_part(12);
    let tdir = dir.path().join("traj");
    write_trajectory(&tdir, &traj).map_err(|e| e.to_string())?;
    let traj_ok = read_trajectory(&tdir).map_err(|e| e.to_string())? == traj.quantized();

    let detail = format!("stl {stl_ok}, vox {vox_ok}, checkpoint {ckpt_ok}, trajectory (f32 storage) {traj_ok}");
    if stl_ok && vox_ok && ckpt_ok && traj_ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let run = |id: usize| wanted.is_empty() || wanted.contains(&id);

    let criteria: [(usize, &str, fn() -> Check); 10] = [
        (1, "neighbor count on a lattice", neighbor_count),
        (2, "k-d tree vs brute force", kdtree_vs_brute_force),
        (3, "gradient check", gradient_check),
        (4, "loss algebra", loss_algebra),
        (5, "rollout identity", rollout_identity),
        (7, "desk-scale learnability", learnability),
        (8, "ablation trend", ablation_trend),
        (9, "inference speed", inference_speed),
        (10, "determinism", determinism),
        (11, "format round trips", round_trips),
    ];
    let mut results = Vec::new();
    for (id, name, check) in criteria {
        if !run(id) {
            continue;
        }
        let r = check();
        report(id, name, &r);
        results.push((id, name, r));
    }
    if run(6) {
        adversarial_constraint_rollouts();
        let r = constraint_safety();
        report(6, "constraint safety", &r);
        results.push((6, "constraint safety", r));
    }

    results.sort_by_key(|(id, _, _)| *id);
    println!("\nacceptance summary");
    for (id, name, r) in &results {
        report(*id, name, r);
    }
    let failed = results.iter().filter(|(_, _, r)| r.is_err()).count();
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn report(id: usize, name: &str, r: &Check) {
    match r {
        Ok(d) => println!("criterion {id:2} PASS  {name}: {d}"),
        Err(d) => println!("criterion {id:2} FAIL  {name}: {d}"),
    }
}
