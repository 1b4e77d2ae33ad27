//! Scores oracle renders of a lane-change trajectory with the novel-view
//! metrics, which gives the ceiling a reconstruction can reach.

use splat4d::metrics::{evaluate, EvalOptions};
use splat4d::ntgm::build_conditions;
use splat4d::pipeline::{build_world, propose, ExperimentConfig, Maneuver};
use splat4d::worldgen::oracle_render;

fn main() -> splat4d::Result<()> {
    let cfg = ExperimentConfig::default().resolved();
    let cam = cfg.camera.camera()?;
    let world = build_world(&cfg)?;
    let traj = propose(&world, &Maneuver::LaneChange, &cfg)?;
    let conditions = build_conditions(&traj, &world, &cam)?;
    let renders = oracle_render(&world, &traj, &cam, None)?;
    let original: Vec<_> = oracle_render(&world, &world.ego_start_traj(), &cam, None)?
        .into_iter()
        .map(|r| r.image)
        .collect();
    let report = evaluate(&renders, &conditions, &original, None, &EvalOptions::default())?;
    println!(
        "oracle: NTA-IoU {:.3}  NTL-IoU {:.1}  feature-Fréchet vs original {:.3}",
        report.nta_iou, report.ntl_iou, report.ffd
    );
    print!("{}", report.frames_csv().lines().take(6).collect::<Vec<_>>().join("\n"));
    println!();
    Ok(())
}
