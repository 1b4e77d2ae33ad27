//! Experiment orchestration: world synthesis, trajectory proposals,
//! baseline and cousin training, evaluation and rendering, with every
//! artifact written atomically under one output directory.
//!
//! Layout of an output directory:
//!
//! ```text
//! config.json                     resolved configuration
//! world/                          ground-truth scene and metadata
//! ori/frame_NNNN.ppm              original-trajectory frames
//! ori/depth_NNNN.raw              sparse LiDAR depth
//! novel/<tag>/trajectory.json     proposed trajectory (ego-start frame)
//! novel/<tag>/conditions.jsonl    projected boxes and lanes
//! novel/<tag>/frame_NNNN.ppm      degraded oracle frames (training targets)
//! novel/<tag>/gt_NNNN.ppm         clean oracle frames (PSNR reference)
//! baseline/scene.sp4d, loss.csv
//! cdts/<tag>/scene.sp4d, loss.csv
//! eval/report.json, eval/<method>_<tag>.csv, eval/summary.txt
//! ```

mod config;

pub use config::{
    CameraConfig, DegradeConfig, ExperimentConfig, InitConfig, LaneChangeConfig, Maneuver,
    TrainVariants,
};

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cdts::{train, NovelFrame, OriFrame, TrainConfig, TrainData, TrainLog};
use crate::error::{Error, Result};
use crate::gauss4d::{read_checkpoint, write_checkpoint, GaussianScene};
use crate::geom::{CameraModel, Trajectory};
use crate::image::{write_atomic, Image};
use crate::metrics::{evaluate, EvalOptions, EvalReport};
use crate::ntgm::{
    build_conditions, conditions_from_jsonl, conditions_to_jsonl, propose_lane_change,
    propose_speed_change, ConditionFrame, SafetyContext,
};
use crate::raster::render_video;
use crate::worldgen::{lidar_depth, oracle_render, synth_scene, DegradeSpec, WorldScene};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Baseline,
    Cdts,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Mode::Baseline),
            "cdts" => Ok(Mode::Cdts),
            _ => Err(Error::Config(format!("unknown mode {s:?}; expected baseline or cdts"))),
        }
    }
}

// ---- in-memory building blocks ----

pub fn build_world(cfg: &ExperimentConfig) -> Result<WorldScene> {
    synth_scene(&cfg.scene, cfg.scene.seed)
}

/// Clean oracle frames and sparse LiDAR depth along the original drive.
pub fn original_frames(
    world: &WorldScene,
    cam: &CameraModel,
    cfg: &ExperimentConfig,
) -> Result<Vec<OriFrame>> {
    let traj = world.ego_start_traj();
    let renders = oracle_render(world, &traj, cam, None)?;
    let depth = lidar_depth(world, &traj, cam, cfg.lidar_dropout, cfg.lidar_seed())?;
    Ok(traj
        .frames()
        .iter()
        .zip(renders)
        .zip(depth)
        .map(|((f, r), d)| OriFrame {
            t: f.t,
            pose: f.pose,
            image: r.image,
            depth: d,
        })
        .collect())
}

/// Proposes the maneuver's trajectory in the ego-start frame.
pub fn propose(world: &WorldScene, m: &Maneuver, cfg: &ExperimentConfig) -> Result<Trajectory> {
    let ori = world.ego_start_traj();
    match m.speed_factor() {
        Some(f) => propose_speed_change(&ori, f),
        None => {
            let ctx = SafetyContext::from_world(world, cfg.lane_change.d_min)?;
            propose_lane_change(&ori, &ctx, cfg.lane_change.max_offset, cfg.proposal_seed(m))
        }
    }
}

pub fn degrade_spec(cfg: &ExperimentConfig, m: &Maneuver) -> DegradeSpec {
    DegradeSpec {
        blur_sigma: cfg.degrade.blur_sigma,
        noise_sigma: cfg.degrade.noise_sigma,
        seed: cfg.degrade_seed(m),
    }
}

/// Degraded oracle frames along `traj`: the stand-in for generated views.
pub fn novel_frames(
    world: &WorldScene,
    traj: &Trajectory,
    cam: &CameraModel,
    degrade: &DegradeSpec,
) -> Result<Vec<NovelFrame>> {
    let renders = oracle_render(world, traj, cam, Some(degrade))?;
    Ok(traj
        .frames()
        .iter()
        .zip(renders)
        .map(|(f, r)| NovelFrame {
            t: f.t,
            pose: f.pose,
            image: r.image,
            depth: None,
        })
        .collect())
}

pub fn init_scene(world: &WorldScene, cfg: &ExperimentConfig) -> Result<GaussianScene> {
    let n = cfg.init.primitives.min(world.gt_scene.len());
    GaussianScene::init_learnable(&world.gt_scene, n, cfg.init.position_noise, cfg.init_seed())
}

/// Renders `scene` along `traj` and scores it.
pub fn evaluate_scene(
    scene: &GaussianScene,
    traj: &Trajectory,
    cam: &CameraModel,
    conditions: &[ConditionFrame],
    reference: &[Image],
    ground_truth: Option<&[Image]>,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    let renders = render_video(scene, traj, cam)?;
    evaluate(&renders, conditions, reference, ground_truth, opts)
}

// ---- file layout ----

fn frame_path(dir: &Path, stem: &str, i: usize, ext: &str) -> PathBuf {
    dir.join(format!("{stem}_{i:04}.{ext}"))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn read_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn read_images(dir: &Path, stem: &str, n: usize) -> Result<Vec<Image>> {
    (0..n)
        .map(|i| Image::from_ppm(&read(&frame_path(dir, stem, i, "ppm"))?))
        .collect()
}

fn write_images(dir: &Path, stem: &str, images: &[&Image]) -> Result<()> {
    for (i, img) in images.iter().enumerate() {
        write_atomic(&frame_path(dir, stem, i, "ppm"), &img.to_ppm())?;
    }
    Ok(())
}

pub fn world_dir(out: &Path) -> PathBuf {
    out.join("world")
}

pub fn novel_dir(out: &Path, m: &Maneuver) -> PathBuf {
    out.join("novel").join(m.tag())
}

pub fn model_dir(out: &Path, mode: Mode, m: Option<&Maneuver>) -> PathBuf {
    match (mode, m) {
        (Mode::Baseline, _) => out.join("baseline"),
        (Mode::Cdts, Some(m)) => out.join("cdts").join(m.tag()),
        (Mode::Cdts, None) => out.join("cdts"),
    }
}

/// Loads the configuration echoed by an earlier command.
pub fn load_echo(out: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::from_json(&read_string(&out.join("config.json"))?)
}

pub fn write_echo(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    write_atomic(&out.join("config.json"), cfg.to_json().as_bytes())
}

fn load_ori(out: &Path, world: &WorldScene) -> Result<Vec<OriFrame>> {
    let traj = world.ego_start_traj();
    let dir = out.join("ori");
    traj.frames()
        .iter()
        .enumerate()
        .map(|(i, f)| {
            Ok(OriFrame {
                t: f.t,
                pose: f.pose,
                image: Image::from_ppm(&read(&frame_path(&dir, "frame", i, "ppm"))?)?,
                depth: Image::from_depth_raw(&read(&frame_path(&dir, "depth", i, "raw"))?)?,
            })
        })
        .collect()
}

fn load_trajectory(path: &Path) -> Result<Trajectory> {
    Trajectory::from_json(&read_string(path)?)
}

// ---- commands ----

/// Synthesizes the world, its original frames and sparse depth.
pub fn cmd_synth(cfg: &ExperimentConfig, out: &Path) -> Result<WorldScene> {
    let cam = cfg.camera.camera()?;
    let world = build_world(cfg)?;
    world.save(&world_dir(out))?;
    let frames = original_frames(&world, &cam, cfg)?;
    let dir = out.join("ori");
    write_atomic(&dir.join("trajectory.json"), world.ego_start_traj().to_json().as_bytes())?;
    write_images(&dir, "frame", &frames.iter().map(|f| &f.image).collect::<Vec<_>>())?;
    for (i, f) in frames.iter().enumerate() {
        write_atomic(&frame_path(&dir, "depth", i, "raw"), &f.depth.to_depth_raw())?;
    }
    Ok(world)
}

/// Proposes one maneuver and writes its trajectory, conditions and oracle
/// frames.
pub fn cmd_propose(cfg: &ExperimentConfig, out: &Path, m: &Maneuver) -> Result<Trajectory> {
    let cam = cfg.camera.camera()?;
    let world = WorldScene::load(&world_dir(out))?;
    let traj = propose(&world, m, cfg)?;
    let conditions = build_conditions(&traj, &world, &cam)?;
    let dir = novel_dir(out, m);
    write_atomic(&dir.join("trajectory.json"), traj.to_json().as_bytes())?;
    write_atomic(&dir.join("conditions.jsonl"), conditions_to_jsonl(&conditions).as_bytes())?;
    let degraded = novel_frames(&world, &traj, &cam, &degrade_spec(cfg, m))?;
    write_images(&dir, "frame", &degraded.iter().map(|f| &f.image).collect::<Vec<_>>())?;
    let clean = oracle_render(&world, &traj, &cam, None)?;
    write_images(&dir, "gt", &clean.iter().map(|r| &r.image).collect::<Vec<_>>())?;
    Ok(traj)
}

/// Trains one model. Cousin mode reads the maneuver's novel frames;
/// baseline mode never touches them.
pub fn cmd_train(
    cfg: &ExperimentConfig,
    out: &Path,
    mode: Mode,
    maneuver: Option<&Maneuver>,
) -> Result<(GaussianScene, TrainLog)> {
    let cam = cfg.camera.camera()?;
    let world = WorldScene::load(&world_dir(out))?;
    let ori = load_ori(out, &world)?;
    let (tc, novel, m): (&TrainConfig, _, _) = match mode {
        Mode::Baseline => (&cfg.train.baseline, None, None),
        Mode::Cdts => {
            let m = maneuver
                .or(cfg.maneuvers.first())
                .ok_or_else(|| Error::Config("cdts training needs a maneuver".into()))?;
            let dir = novel_dir(out, m);
            let traj = load_trajectory(&dir.join("trajectory.json"))?;
            let images = read_images(&dir, "frame", traj.len())?;
            let frames = traj
                .frames()
                .iter()
                .zip(images)
                .map(|(f, image)| NovelFrame {
                    t: f.t,
                    pose: f.pose,
                    image,
                    depth: None,
                })
                .collect();
            (&cfg.train.cdts, Some(frames), Some(m))
        }
    };
    let data = TrainData {
        camera: cam,
        ori,
        novel,
    };
    let dir = model_dir(out, mode, m);
    let provenance = |step: usize| {
        serde_json::json!({
            "mode": mode,
            "maneuver": m.map(|m| m.to_string()),
            "step": step,
            "seed": cfg.seed,
        })
    };
    let outcome = train(init_scene(&world, cfg)?, &data, tc, |step, scene| {
        write_checkpoint(&dir.join(format!("ckpt_{step:06}.sp4d")), scene, provenance(step))
    })?;
    write_checkpoint(&dir.join("scene.sp4d"), &outcome.scene, provenance(tc.iterations))?;
    write_atomic(&dir.join("loss.csv"), outcome.log.to_csv().as_bytes())?;
    Ok((outcome.scene, outcome.log))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub method: Mode,
    pub maneuver: Maneuver,
    pub report: EvalReport,
}

pub fn summary_table(rows: &[EvalRow]) -> String {
    let mut s = format!(
        "{:<10} {:<14} {:>8} {:>8} {:>9} {:>7}\n",
        "method", "maneuver", "NTA-IoU", "NTL-IoU", "FFD", "PSNR"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<10} {:<14} {:>8.3} {:>8.2} {:>9.3} {:>7.2}",
            match r.method {
                Mode::Baseline => "baseline",
                Mode::Cdts => "cdts",
            },
            r.maneuver.to_string(),
            r.report.nta_iou,
            r.report.ntl_iou,
            r.report.ffd,
            r.report.psnr.unwrap_or(f64::NAN)
        );
    }
    s
}

/// Evaluates every trained model on every configured maneuver it applies
/// to. The feature-Fréchet reference set is the original-trajectory frames.
pub fn cmd_eval(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<EvalRow>> {
    let cam = cfg.camera.camera()?;
    let world = WorldScene::load(&world_dir(out))?;
    let reference = read_images(&out.join("ori"), "frame", world.timestamps().len())?;
    let mut rows = Vec::new();
    for m in &cfg.maneuvers {
        let dir = novel_dir(out, m);
        let traj = load_trajectory(&dir.join("trajectory.json"))?;
        let conditions = conditions_from_jsonl(&read_string(&dir.join("conditions.jsonl"))?)?;
        let gt = read_images(&dir, "gt", traj.len())?;
        for mode in [Mode::Baseline, Mode::Cdts] {
            let ckpt = model_dir(out, mode, Some(m)).join("scene.sp4d");
            if !ckpt.exists() {
                continue;
            }
            let (scene, _) = read_checkpoint(&ckpt)?;
            let report =
                evaluate_scene(&scene, &traj, &cam, &conditions, &reference, Some(&gt), &cfg.eval)?;
            let name = format!("{}_{}.csv", if mode == Mode::Baseline { "baseline" } else { "cdts" }, m.tag());
            write_atomic(&out.join("eval").join(name), report.frames_csv().as_bytes())?;
            rows.push(EvalRow {
                method: mode,
                maneuver: *m,
                report,
            });
        }
    }
    write_atomic(
        &out.join("eval").join("report.json"),
        serde_json::to_string_pretty(&rows)?.as_bytes(),
    )?;
    write_atomic(&out.join("eval").join("summary.txt"), summary_table(&rows).as_bytes())?;
    Ok(rows)
}

/// Renders a checkpoint along a trajectory into `frame_NNNN.ppm` files.
pub fn cmd_render(
    checkpoint: &Path,
    trajectory: &Path,
    cam: &CameraModel,
    out: &Path,
) -> Result<usize> {
    let (scene, _) = read_checkpoint(checkpoint)?;
    let traj = load_trajectory(trajectory)?;
    let frames = render_video(&scene, &traj, cam)?;
    write_images(out, "frame", &frames.iter().map(|r| &r.image).collect::<Vec<_>>())?;
    Ok(frames.len())
}

/// The whole pipeline: synth, propose every maneuver, train the baseline
/// and one cousin model per maneuver, evaluate.
pub fn cmd_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<EvalRow>> {
    write_echo(cfg, out)?;
    cmd_synth(cfg, out)?;
    for m in &cfg.maneuvers {
        cmd_propose(cfg, out, m)?;
    }
    cmd_train(cfg, out, Mode::Baseline, None)?;
    for m in &cfg.maneuvers {
        cmd_train(cfg, out, Mode::Cdts, Some(m))?;
    }
    cmd_eval(cfg, out)
}
