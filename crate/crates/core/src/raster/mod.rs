//! Differentiable tile-based splatting: forward alpha blending of depth-sorted
//! splats and the matching analytic backward pass.
//!
//! Per pixel, contributions are composited front to back with
//! `C = Σ T_i α_i c_i`, `T_i = Π_{j<i} (1 - α_j)`. Each tile sorts its splats by
//! camera depth; pixels evaluate every splat within 3.5σ exactly.

mod backward;
mod forward;
mod project;

use std::collections::BTreeMap;

pub use project::{project_gaussian, Splat2D};

use crate::error::{Error, Result};
use crate::gauss4d::GaussianScene;
use crate::geom::{CameraModel, Pose, Trajectory};
use crate::image::Image;

pub const TILE: usize = 16;
pub const ALPHA_MAX: f64 = 0.99;
/// Added to every projected covariance (px²).
pub const BLUR_FLOOR: f64 = 0.3;
/// Compositing stops once transmittance drops below this.
pub const T_MIN: f64 = 1e-4;
/// Depth is reported only where accumulated alpha reaches this.
pub const DEPTH_ALPHA_EPS: f64 = 1e-3;
pub const CULL_SIGMA: f64 = 3.5;
/// Covariance Jacobians are evaluated with view-ray slopes clamped to this
/// multiple of the image half-extent, which keeps far off-axis splats from
/// blowing up under the linearization.
pub const FRUSTUM_SLACK: f64 = 1.3;
/// Mahalanobis radius of the 99% ellipse, sqrt(-2 ln 0.01).
pub const EXTENT_99: f64 = 3.034_854_258_770_293;

#[derive(Clone, Debug, PartialEq)]
pub struct RenderOutput {
    /// RGB on a black background.
    pub image: Image,
    /// Alpha-normalized expected depth; 0 where alpha < [`DEPTH_ALPHA_EPS`].
    pub depth: Image,
    pub alpha: Image,
    /// Accumulated blend weight per foreground agent (id ≠ 0).
    pub agent_weights: BTreeMap<u32, Image>,
}

pub fn splat_forward(
    scene: &GaussianScene,
    t: f64,
    ego_pose: &Pose,
    cam: &CameraModel,
) -> Result<RenderOutput> {
    Ok(splat_forward_traced(scene, t, ego_pose, cam)?.0)
}

/// Forward render plus a hash of the discrete blending decisions (which
/// splats touched which pixel, α clamping, early termination, depth
/// validity). Two parameter settings with the same signature lie in the same
/// smooth piece of the render function.
pub fn splat_forward_traced(
    scene: &GaussianScene,
    t: f64,
    ego_pose: &Pose,
    cam: &CameraModel,
) -> Result<(RenderOutput, u64)> {
    let prep = forward::prepare(scene, t, ego_pose, cam)?;
    Ok(forward::render_prepared(&prep, cam))
}

/// A forward render that keeps its projected splats so the backward pass
/// does not have to redo projection and binning.
pub struct TracedRender {
    pub output: RenderOutput,
    pub signature: u64,
    prep: forward::Prepared,
    tau: f64,
}

pub fn render_traced(
    scene: &GaussianScene,
    t: f64,
    ego_pose: &Pose,
    cam: &CameraModel,
) -> Result<TracedRender> {
    let prep = forward::prepare(scene, t, ego_pose, cam)?;
    let (output, signature) = forward::render_prepared(&prep, cam);
    Ok(TracedRender {
        output,
        signature,
        prep,
        tau: t - scene.t0(),
    })
}

impl TracedRender {
    /// Adds d(loss)/d(params) to `grads` (layout of
    /// [`GaussianScene::params`]). `scene` must be the one that was rendered.
    pub fn backward_into(
        &self,
        scene: &GaussianScene,
        cam: &CameraModel,
        d_image: &Image,
        d_depth: Option<&Image>,
        grads: &mut [f64],
    ) -> Result<()> {
        let want = (cam.width, cam.height);
        if (d_image.width, d_image.height, d_image.channels) != (want.0, want.1, 3) {
            return Err(Error::Shape("image gradient does not match camera".into()));
        }
        if let Some(d) = d_depth {
            if (d.width, d.height, d.channels) != (want.0, want.1, 1) {
                return Err(Error::Shape("depth gradient does not match camera".into()));
            }
        }
        if grads.len() != scene.len() * scene.block_len() || self.prep.deformed.len() != scene.len() {
            return Err(Error::Shape("gradient buffer does not match scene".into()));
        }
        backward::backward_prepared(scene, self.tau, &self.prep, cam, d_image, d_depth, grads);
        Ok(())
    }
}

/// Adds d(loss)/d(params) for one render to `grads` (layout of
/// [`GaussianScene::params`]). `d_depth` may be omitted when the loss does not
/// read depth.
pub fn splat_backward_into(
    scene: &GaussianScene,
    t: f64,
    ego_pose: &Pose,
    cam: &CameraModel,
    d_image: &Image,
    d_depth: Option<&Image>,
    grads: &mut [f64],
) -> Result<()> {
    render_traced(scene, t, ego_pose, cam)?.backward_into(scene, cam, d_image, d_depth, grads)
}

pub fn splat_backward(
    scene: &GaussianScene,
    t: f64,
    ego_pose: &Pose,
    cam: &CameraModel,
    d_image: &Image,
    d_depth: Option<&Image>,
) -> Result<Vec<f64>> {
    let mut grads = vec![0.0; scene.len() * scene.block_len()];
    splat_backward_into(scene, t, ego_pose, cam, d_image, d_depth, &mut grads)?;
    Ok(grads)
}

/// One independent render per trajectory frame.
pub fn render_video(
    scene: &GaussianScene,
    traj: &Trajectory,
    cam: &CameraModel,
) -> Result<Vec<RenderOutput>> {
    for f in traj.frames() {
        scene.check_time(f.t)?;
    }
    traj.frames()
        .iter()
        .map(|f| splat_forward(scene, f.t, &f.pose, cam))
        .collect()
}
