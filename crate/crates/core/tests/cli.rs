//! End-to-end runs of the command-line tool.

use std::path::Path;
use std::process::Command;

use sinter_gnn::eval::EvalReport;
use sinter_gnn::geometry::{boxes_mesh, write_stl};
use sinter_gnn::graphbuild::read_trajectory;

fn run(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_sinter-gnn"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs");
    let text = String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().unwrap_or(-1), text)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn full_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let stl = d.join("part.stl");
    std::fs::write(
        &stl,
        write_stl(&boxes_mesh(&[
            ([0.0, 0.0, 0.0], [6.0, 4.0, 2.0]),
            ([0.0, 0.0, 2.0], [2.0, 4.0, 5.0]),
        ])),
    )
    .unwrap();
    let vox = d.join("part.vox");
    let (code, log) = run(&["voxelize", "--stl", s(&stl), "--voxel-size", "1", "--out", s(&vox)]);
    assert_eq!(code, 0, "{log}");

    let profile = d.join("profile.json");
    std::fs::write(&profile, r#"{"steps": 16}"#).unwrap();
    let data = d.join("traj");
    let (code, log) = run(&[
        "gen-data",
        "--vox",
        s(&vox),
        "--profile",
        s(&profile),
        "--out",
        s(&data),
    ]);
    assert_eq!(code, 0, "{log}");
    let truth = read_trajectory(&data).unwrap();
    assert_eq!((truth.num_nodes(), truth.num_frames()), (72, 16));
    assert_eq!(truth.part_id, "part");

    let config = d.join("train.json");
    std::fs::write(
        &config,
        r#"{"epochs": 2, "latent": 8, "hidden": 8, "global_latent": 4, "rounds": 1, "learning_rate": 1e-3}"#,
    )
    .unwrap();
    let ckpt = d.join("ckpt");
    let (code, log) = run(&["train", "--data", s(&data), "--config", s(&config), "--out", s(&ckpt)]);
    assert_eq!(code, 0, "{log}");
    assert!(ckpt.join("train_log.jsonl").exists());

    let pred = d.join("pred");
    let (code, log) = run(&[
        "rollout",
        "--ckpt",
        s(&ckpt),
        "--truth",
        s(&data),
        "--steps",
        "8",
        "--out",
        s(&pred),
    ]);
    assert_eq!(code, 0, "{log}");
    assert_eq!(read_trajectory(&pred).unwrap().num_frames(), 12);

    let report = d.join("report.json");
    let (code, log) = run(&[
        "eval",
        "--pred",
        s(&pred),
        "--truth",
        s(&data),
        "--report",
        s(&report),
        "--ckpt",
        s(&ckpt),
    ]);
    assert_eq!(code, 0, "{log}");
    let r = EvalReport::load(&report).unwrap();
    assert_eq!(r.node_count, 72);
    assert!(r.one_step_mse_normalized.is_some() && r.inference_wall_ms.is_some());

    let spec = d.join("ablation.json");
    let base = r#"{"epochs": 1, "latent": 8, "hidden": 8, "global_latent": 4, "rounds": 1}"#;
    std::fs::write(
        &spec,
        format!(
            r#"{{"base": {base}, "train": ["{}"], "held_out": ["{}"]}}"#,
            s(&data),
            s(&data)
        ),
    )
    .unwrap();
    let table = d.join("table.md");
    let (code, log) = run(&["ablation", "--spec", s(&spec), "--out", s(&table)]);
    assert_eq!(code, 0, "{log}");
    let md = std::fs::read_to_string(&table).unwrap();
    assert_eq!(md.lines().count(), 6);
    assert!(md.contains("Anchor loss"));
}

#[test]
fn missing_input_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.vox");
    let missing = dir.path().join("missing.stl");
    assert_eq!(
        run(&["voxelize", "--stl", s(&missing), "--voxel-size", "1", "--out", s(&out)]).0,
        2
    );
    let missing_dir = dir.path().join("nothing");
    let ckpt = dir.path().join("ckpt");
    assert_eq!(run(&["train", "--data", s(&missing_dir), "--out", s(&ckpt)]).0, 2);
}

#[test]
fn bad_content_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let stl = dir.path().join("short.stl");
    std::fs::write(&stl, [0u8; 40]).unwrap();
    let out = dir.path().join("x.vox");
    assert_eq!(
        run(&["voxelize", "--stl", s(&stl), "--voxel-size", "1", "--out", s(&out)]).0,
        1
    );

    std::fs::write(&stl, write_stl(&boxes_mesh(&[([0.0; 3], [1.0; 3])]))).unwrap();
    assert_eq!(
        run(&["voxelize", "--stl", s(&stl), "--voxel-size=-1", "--out", s(&out)]).0,
        1
    );

    let config = dir.path().join("train.json");
    std::fs::write(&config, r#"{"history": 0}"#).unwrap();
    let data = dir.path().join("traj");
    let ckpt = dir.path().join("ckpt");
    assert_eq!(
        run(&["train", "--data", s(&data), "--config", s(&config), "--out", s(&ckpt)]).0,
        1
    );
    assert_eq!(run(&["train", "--bogus"]).0, 1);
}
