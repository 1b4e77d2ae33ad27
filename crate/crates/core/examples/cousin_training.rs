//! Trains a baseline and a cousin-trajectory model on the same world and
//! compares them on a lane-change view.
//!
//! cargo run --release --example cousin_training -- [iterations]

use splat4d::cdts::{train, TrainConfig, TrainData};
use splat4d::ntgm::build_conditions;
use splat4d::pipeline::{
    build_world, degrade_spec, evaluate_scene, init_scene, novel_frames, original_frames, propose,
    ExperimentConfig, Maneuver,
};

fn main() -> splat4d::Result<()> {
    let iterations = std::env::args().nth(1).map_or(300, |s| s.parse().expect("iteration count"));
    let cfg = ExperimentConfig::default().resolved();
    let cam = cfg.camera.camera()?;
    let world = build_world(&cfg)?;
    let ori = original_frames(&world, &cam, &cfg)?;
    let m = Maneuver::LaneChange;
    let traj = propose(&world, &m, &cfg)?;
    let novel = novel_frames(&world, &traj, &cam, &degrade_spec(&cfg, &m))?;
    let conditions = build_conditions(&traj, &world, &cam)?;
    let reference: Vec<_> = ori.iter().map(|f| f.image.clone()).collect();

    for (name, base, novel) in [
        ("baseline", &cfg.train.baseline, None),
        ("cousin", &cfg.train.cdts, Some(novel)),
    ] {
        let tc = TrainConfig { iterations, ..base.clone() };
        let data = TrainData { camera: cam.clone(), ori: ori.clone(), novel };
        let scene = train(init_scene(&world, &cfg)?, &data, &tc, |_, _| Ok(()))?.scene;
        let r = evaluate_scene(&scene, &traj, &cam, &conditions, &reference, None, &cfg.eval)?;
        println!("{name:8} NTA-IoU {:.3}  NTL-IoU {:.1}  feature-Fréchet {:.3}", r.nta_iou, r.ntl_iou, r.ffd);
    }
    Ok(())
}
