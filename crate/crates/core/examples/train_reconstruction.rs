//! Fits a learnable scene to the original-trajectory frames of a synthetic
//! world and reports training-view PSNR before and after.
//!
//! cargo run --release --example train_reconstruction -- [iterations]

use splat4d::cdts::{train, TrainConfig, TrainData};
use splat4d::metrics::psnr;
use splat4d::pipeline::{build_world, init_scene, original_frames, ExperimentConfig};
use splat4d::raster::render_video;

fn main() -> splat4d::Result<()> {
    let iterations = std::env::args().nth(1).map_or(500, |s| s.parse().expect("iteration count"));
    let cfg = ExperimentConfig::default().resolved();
    let cam = cfg.camera.camera()?;
    let world = build_world(&cfg)?;
    let ori = original_frames(&world, &cam, &cfg)?;
    let traj = world.ego_start_traj();

    let mean_psnr = |scene: &splat4d::gauss4d::GaussianScene| -> splat4d::Result<f64> {
        let renders = render_video(scene, &traj, &cam)?;
        let total: f64 = renders
            .iter()
            .zip(&ori)
            .map(|(r, f)| psnr(&r.image, &f.image))
            .sum::<splat4d::Result<f64>>()?;
        Ok(total / ori.len() as f64)
    };

    let init = init_scene(&world, &cfg)?;
    println!("init: {:.2} dB", mean_psnr(&init)?);
    let tc = TrainConfig { iterations, ..cfg.train.baseline.clone() };
    let data = TrainData { camera: cam.clone(), ori: ori.clone(), novel: None };
    let outcome = train(init, &data, &tc, |_, _| Ok(()))?;
    println!("after {iterations} steps: {:.2} dB", mean_psnr(&outcome.scene)?);
    print!("{}", outcome.log.to_csv().lines().last().unwrap_or_default());
    println!();
    Ok(())
}
