use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use sinter_gnn::eval::{ablation_table, one_step_mse, rollout_metrics, AblationSpec, EvalReport};
use sinter_gnn::geometry::{parse_stl, read_vox, voxelize, write_vox};
use sinter_gnn::graphbuild::{read_trajectory, write_trajectory, Trajectory};
use sinter_gnn::model::{load_checkpoint, save_checkpoint};
use sinter_gnn::oracle::{generate_trajectory, ProfileSpec};
use sinter_gnn::rollout::{rollout, write_rollout, ModelPredictor, RolloutConfig, RolloutInput, RolloutMeta};
use sinter_gnn::store::{self, StoreError};
use sinter_gnn::training::{train, write_log, TrainConfig};

#[derive(Parser)]
#[command(name = "sinter-gnn", version, about = "Learned sintering-deformation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solid-voxelize a binary STL into a .vox grid.
    Voxelize {
        #[arg(long)]
        stl: PathBuf,
        #[arg(long)]
        voxel_size: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the reference deformation model over a voxel part.
    GenData {
        #[arg(long)]
        vox: PathBuf,
        /// Profile JSON; defaults are used when omitted.
        #[arg(long)]
        profile: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to the .vox file stem.
        #[arg(long)]
        part_id: Option<String>,
    },
    /// Train a model on trajectory directories and write a checkpoint.
    Train {
        #[arg(long, num_args = 1.., required = true)]
        data: Vec<PathBuf>,
        /// Held-out trajectories for checkpoint selection; training data when omitted.
        #[arg(long, num_args = 1..)]
        val: Vec<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Roll a checkpoint out from the first frames of a trajectory.
    Rollout {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Defaults to every remaining frame of the truth.
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare a predicted trajectory against the truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Also report the checkpoint's 1-step MSE on the truth.
        #[arg(long)]
        ckpt: Option<PathBuf>,
    },
    /// Train the four model versions and write the comparison table.
    Ablation {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            // Bad arguments are validation errors, not I/O errors.
            return if err.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// 2 for filesystem failures, 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(s) = cause.downcast_ref::<StoreError>() {
            if s.is_io() {
                return 2;
            }
        }
        if cause.is::<std::io::Error>() {
            return 2;
        }
    }
    1
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn load_trajectories(dirs: &[PathBuf]) -> Result<Vec<Trajectory>> {
    dirs.iter()
        .map(|d| read_trajectory(d).with_context(|| format!("loading trajectory {}", d.display())))
        .collect()
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Voxelize { stl, voxel_size, out } => {
            let mesh = parse_stl(&read_file(&stl)?).with_context(|| format!("parsing {}", stl.display()))?;
            let vox = voxelize(&mesh, voxel_size)?;
            if vox.ambiguous > 0 {
                log::warn!("{} voxels left empty on ambiguous rays", vox.ambiguous);
            }
            std::fs::write(&out, write_vox(&vox.grid)).with_context(|| format!("writing {}", out.display()))?;
            log::info!(
                "{} triangles -> {} occupied voxels ({:?} grid)",
                mesh.len(),
                vox.grid.occupied_count(),
                vox.grid.dims
            );
        }
        Command::GenData {
            vox,
            profile,
            out,
            part_id,
        } => {
            let grid = read_vox(&read_file(&vox)?).with_context(|| format!("parsing {}", vox.display()))?;
            let spec = match profile {
                Some(p) => ProfileSpec::load(&p)?,
                None => ProfileSpec::default(),
            };
            let id = part_id.unwrap_or_else(|| {
                vox.file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "part".into())
            });
            let traj = generate_trajectory(&grid, &spec.build()?, &id)?;
            write_trajectory(&out, &traj)?;
            log::info!("{}: {} nodes x {} frames", id, traj.num_nodes(), traj.num_frames());
        }
        Command::Train { data, val, config, out } => {
            let cfg: TrainConfig = match config {
                Some(p) => store::read_json(&p)?,
                None => TrainConfig::default(),
            };
            cfg.validate()?;
            let train_set = load_trajectories(&data)?;
            let val_set = load_trajectories(&val)?;
            let outcome = train(&train_set, &val_set, &cfg)?;
            save_checkpoint(
                &out,
                &outcome.params,
                &format!("seed{}-epoch{}", cfg.seed, outcome.best_epoch),
            )?;
            write_log(&out.join("train_log.jsonl"), &outcome.log)?;
            log::info!("best epoch {} written to {}", outcome.best_epoch, out.display());
        }
        Command::Rollout {
            ckpt,
            truth,
            steps,
            out,
        } => {
            let (params, manifest) = load_checkpoint(&ckpt)?;
            let traj = read_trajectory(&truth)?;
            let n = params.config.graph.history;
            if traj.num_frames() < n + 1 {
                bail!(
                    "truth has {} frames, the model needs {} seed frames",
                    traj.num_frames(),
                    n + 1
                );
            }
            let steps = steps.unwrap_or(traj.num_frames() - n - 1);
            let input = RolloutInput::from_trajectory(&traj, n);
            let res = rollout(
                &mut ModelPredictor { params: &params },
                &input,
                &RolloutConfig::steps(steps),
                None,
            )?;
            let pred = res.to_trajectory(&input, &traj.part_id, traj.voxel_size);
            let meta = RolloutMeta {
                seed_frames: n + 1,
                checkpoint_id: manifest.id,
                steps,
                consume_horizon: false,
                step_wall_ms: res.step_wall_ms.clone(),
                total_wall_ms: res.total_wall_ms,
            };
            write_rollout(&out, &pred, &meta)?;
            log::info!("{} steps in {:.0} ms", steps, res.total_wall_ms);
        }
        Command::Eval {
            pred,
            truth,
            report,
            ckpt,
        } => {
            let pred_traj = read_trajectory(&pred)?;
            let mut truth_traj = read_trajectory(&truth)?;
            if pred_traj.num_frames() < truth_traj.num_frames() {
                log::info!(
                    "comparing the first {} of {} truth frames",
                    pred_traj.num_frames(),
                    truth_traj.num_frames()
                );
                truth_traj.frames.truncate(pred_traj.num_frames());
                truth_traj.temperature.truncate(pred_traj.num_frames());
            }
            let metrics = rollout_metrics(&pred_traj, &truth_traj)?;
            let mut r = EvalReport::from_metrics(&truth_traj.part_id, &metrics);
            let meta_path = pred.join(sinter_gnn::rollout::ROLLOUT_META_FILE);
            if meta_path.exists() {
                let meta: RolloutMeta = store::read_json(&meta_path)?;
                r.inference_wall_ms = Some(meta.total_wall_ms);
            }
            if let Some(ckpt) = ckpt {
                let (params, _) = load_checkpoint(&ckpt)?;
                let one = one_step_mse(&params, std::slice::from_ref(&read_trajectory(&truth)?))?;
                r.one_step_mse_normalized = Some(one.normalized);
                r.one_step_mse_physical = Some(one.physical);
            }
            r.save(&report)?;
            println!("{}", serde_json::to_string_pretty(&r)?);
        }
        Command::Ablation { spec, out } => {
            let spec: AblationSpec = store::read_json(&spec)?;
            spec.base.validate()?;
            let to_paths = |v: &[String]| v.iter().map(PathBuf::from).collect::<Vec<_>>();
            let train_set = load_trajectories(&to_paths(&spec.train))?;
            let held_out = load_trajectories(&to_paths(&spec.held_out))?;
            let table = ablation_table(&TrainConfig::ablation_versions(&spec.base), &train_set, &held_out)?;
            let md = table.to_markdown();
            std::fs::write(&out, &md).with_context(|| format!("writing {}", out.display()))?;
            store::write_json(&out.with_extension("json"), &table)?;
            print!("{md}");
        }
    }
    Ok(())
}
