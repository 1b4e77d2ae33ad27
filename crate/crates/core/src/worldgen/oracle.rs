use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::WorldScene;
use crate::error::{Error, Result};
use crate::geom::{CameraModel, FrameId, Trajectory};
use crate::image::Image;
use crate::raster::{render_video, RenderOutput};
use crate::seed::derive_seed;

/// Image degradation applied to oracle renders of novel trajectories.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradeSpec {
    /// Gaussian blur sigma (px).
    pub blur_sigma: f64,
    /// Additive noise sigma in [0, 1] channel units.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl DegradeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.blur_sigma >= 0.0 && self.noise_sigma >= 0.0 {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "degradation sigmas must be >= 0: {self:?}"
            )))
        }
    }

    pub fn apply(&self, image: &Image, frame: usize) -> Image {
        image
            .gaussian_blur(self.blur_sigma)
            .add_noise(self.noise_sigma, derive_seed(self.seed, &format!("degrade/{frame}")))
    }
}

fn scene_frame(world: &WorldScene, traj: &Trajectory) -> Result<Trajectory> {
    match traj.frame_id() {
        FrameId::EgoStart => Ok(traj.clone()),
        FrameId::World => traj.to_ego_start(&world.m0),
    }
}

/// Renders the ground-truth scene along `traj` (either frame), optionally
/// degraded. Only the RGB image is degraded.
pub fn oracle_render(
    world: &WorldScene,
    traj: &Trajectory,
    cam: &CameraModel,
    degrade: Option<&DegradeSpec>,
) -> Result<Vec<RenderOutput>> {
    let traj = scene_frame(world, traj)?;
    let mut frames = render_video(&world.gt_scene, &traj, cam)?;
    if let Some(d) = degrade {
        d.validate()?;
        for (i, f) in frames.iter_mut().enumerate() {
            f.image = d.apply(&f.image, i);
        }
    }
    Ok(frames)
}

/// Sparse depth: oracle depth where alpha ≥ 0.5 and depth is within the
/// scene's LiDAR range, thinned by a seeded mask that keeps `1 - dropout`.
pub fn lidar_depth(
    world: &WorldScene,
    traj: &Trajectory,
    cam: &CameraModel,
    dropout: f64,
    seed: u64,
) -> Result<Vec<Image>> {
    if !(0.0..1.0).contains(&dropout) {
        return Err(Error::Config(format!("dropout must lie in [0, 1), got {dropout}")));
    }
    let renders = oracle_render(world, traj, cam, None)?;
    let range = world.config.lidar_range;
    Ok(renders
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("lidar/{i}")));
            let mut out = Image::new(cam.width, cam.height, 1);
            for (k, o) in out.data.iter_mut().enumerate() {
                let keep = rng.random::<f64>() >= dropout;
                let z = r.depth.data[k];
                if keep && r.alpha.data[k] >= 0.5 && z <= range {
                    *o = z;
                }
            }
            out
        })
        .collect())
}

/// Splats sparse depth maps captured along `from` into the cameras of `to`
/// (same timestamps), keeping the nearest point per pixel. Surfaces never
/// seen from `from` stay empty, so the result is occlusion-incomplete.
pub fn reproject_depth(
    depth: &[Image],
    from: &Trajectory,
    to: &Trajectory,
    cam: &CameraModel,
) -> Result<Vec<Image>> {
    if depth.len() != from.len() || from.len() != to.len() {
        return Err(Error::Shape(format!(
            "{} depth maps for trajectories of {} and {} frames",
            depth.len(),
            from.len(),
            to.len()
        )));
    }
    if from.frame_id() != to.frame_id() {
        return Err(Error::FrameMismatch {
            expected: from.frame_id(),
            found: to.frame_id(),
        });
    }
    let mut out = Vec::with_capacity(depth.len());
    for ((d, f), g) in depth.iter().zip(from.frames()).zip(to.frames()) {
        if f.t != g.t {
            return Err(Error::TimestampMismatch(format!("{} vs {}", f.t, g.t)));
        }
        let back = cam.view(&f.pose).inverse();
        let fwd = cam.view(&g.pose);
        let rel = fwd.compose(&back);
        let mut img = Image::new(cam.width, cam.height, 1);
        for y in 0..d.height {
            for x in 0..d.width {
                let z = d.at(x, y, 0);
                if z <= 0.0 {
                    continue;
                }
                let p = Vector3::new(
                    (x as f64 + 0.5 - cam.cx) / cam.fx * z,
                    (y as f64 + 0.5 - cam.cy) / cam.fy * z,
                    z,
                );
                let q = rel.transform_point(&p);
                let Some(uv) = cam.project_point(&q) else {
                    continue;
                };
                let (u, v) = (uv.x.floor(), uv.y.floor());
                if u < 0.0 || v < 0.0 || u >= cam.width as f64 || v >= cam.height as f64 {
                    continue;
                }
                let px = img.at_mut(u as usize, v as usize, 0);
                if *px == 0.0 || q.z < *px {
                    *px = q.z;
                }
            }
        }
        out.push(img);
    }
    Ok(out)
}
