//! Writes a scene checkpoint with its JSON sidecar, reads it back and
//! compares renders. Parameters are stored as `f32`, so the reloaded scene
//! differs from the original by rounding only.

use splat4d::gauss4d::{read_checkpoint, write_checkpoint};
use splat4d::geom::{CameraModel, Pose};
use splat4d::raster::splat_forward;
use splat4d::worldgen::{synth_scene, SceneConfig};

fn main() -> splat4d::Result<()> {
    let world = synth_scene(&SceneConfig::default(), 5)?;
    let dir = std::env::temp_dir().join("splat4d_checkpoint_example");
    let path = dir.join("scene.sp4d");
    write_checkpoint(&path, &world.gt_scene, serde_json::json!({ "source": "worldgen", "seed": 5 }))?;
    let (scene, meta) = read_checkpoint(&path)?;
    println!("{} primitives, degree {}, t0 {:.2}", meta.count, meta.degree, meta.t0);

    let cam = CameraModel::centered(96, 64, 60.0)?.with_mount_height(1.6);
    let t = meta.t0;
    let a = splat_forward(&world.gt_scene, t, &Pose::identity(), &cam)?;
    let b = splat_forward(&scene, t, &Pose::identity(), &cam)?;
    let diff = a.image.data.iter().zip(&b.image.data).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    println!("largest pixel difference after reload: {diff:.2e}");
    Ok(())
}
