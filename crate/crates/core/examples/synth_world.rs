//! Builds a synthetic driving world and writes a few oracle frames as PPM.
//!
//! cargo run --release --example synth_world -- [out_dir] [seed]

use std::path::PathBuf;

use splat4d::geom::CameraModel;
use splat4d::worldgen::{lidar_depth, oracle_render, synth_scene, SceneConfig};

fn main() -> splat4d::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "out/synth_world".into()));
    let seed: u64 = args.next().map_or(7, |s| s.parse().expect("seed is an integer"));

    let config = SceneConfig::default();
    let world = synth_scene(&config, seed)?;
    println!(
        "{} primitives, {} agents, {} lane lines",
        world.gt_scene.len(),
        world.agents.len(),
        world.lanes.len()
    );

    let cam = CameraModel::centered(192, 128, 120.0)?
        .with_mount_height(1.6)
        .with_near_clip(1.0);
    let traj = world.ego_start_traj();
    let frames = oracle_render(&world, &traj, &cam, None)?;
    let depth = lidar_depth(&world, &traj, &cam, 0.5, seed)?;
    std::fs::create_dir_all(&out).map_err(|e| splat4d::Error::Invalid(e.to_string()))?;
    for i in [0, frames.len() / 2, frames.len() - 1] {
        splat4d::image::write_atomic(&out.join(format!("frame_{i:03}.ppm")), &frames[i].image.to_ppm())?;
        let valid = depth[i].data.iter().filter(|z| **z > 0.0).count();
        println!("frame {i}: {valid} LiDAR returns");
    }
    world.save(&out.join("world"))?;
    println!("wrote {}", out.display());
    Ok(())
}
