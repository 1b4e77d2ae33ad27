use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};

use super::{BLUR_FLOOR, CULL_SIGMA, EXTENT_99, FRUSTUM_SLACK};
use crate::gauss4d::Deformed;
use crate::geom::{CameraModel, Pose};

/// A Gaussian projected to the image plane.
#[derive(Clone, Debug, PartialEq)]
pub struct Splat2D {
    pub mean: Vector2<f64>,
    pub cov2d: Matrix2<f64>,
    /// Inverse of `cov2d`.
    pub conic: Matrix2<f64>,
    /// Camera-space depth (m).
    pub depth: f64,
    pub color: Vector3<f64>,
    pub opacity: f64,
    pub agent_id: u32,
    /// Index of the primitive in its scene.
    pub source: usize,
    pub(crate) p_cam: Vector3<f64>,
    /// Projection Jacobian at the center (drives the mean).
    pub(crate) jacobian: Matrix2x3<f64>,
    /// Jacobian used for the covariance: evaluated at the center with its
    /// view-ray slopes clamped to [`FRUSTUM_SLACK`] times the image half-extent.
    pub(crate) cov_jacobian: Matrix2x3<f64>,
    /// Clamped slopes x/z, y/z and whether each one hit its limit.
    pub(crate) slopes: Vector2<f64>,
    pub(crate) slope_clamped: [bool; 2],
}

impl Splat2D {
    /// Pixel-space half extents of the per-pixel evaluation cull.
    pub fn cull_radius(&self) -> Vector2<f64> {
        Vector2::new(self.cov2d[(0, 0)].sqrt(), self.cov2d[(1, 1)].sqrt()) * CULL_SIGMA
    }
}

/// Projects a deformed Gaussian seen from an ego vehicle at `ego_pose`.
///
/// Absent when the center is not beyond the near plane or the 99% ellipse
/// falls entirely outside the image.
pub fn project_gaussian(
    g: &Deformed,
    source: usize,
    ego_pose: &Pose,
    cam: &CameraModel,
) -> Option<Splat2D> {
    project_with_view(g, source, &cam.view(ego_pose), cam)
}

pub(crate) fn project_with_view(
    g: &Deformed,
    source: usize,
    view: &Pose,
    cam: &CameraModel,
) -> Option<Splat2D> {
    let p_cam = view.transform_point(&g.position);
    if p_cam.z <= cam.near_clip {
        return None;
    }
    let mean = cam.project_unchecked(&p_cam);
    let jacobian = cam.jacobian_unchecked(&p_cam);
    let (w, h) = (cam.width as f64, cam.height as f64);
    let lim_x = FRUSTUM_SLACK * cam.cx.max(w - cam.cx) / cam.fx;
    let lim_y = FRUSTUM_SLACK * cam.cy.max(h - cam.cy) / cam.fy;
    let (sx, sy) = (p_cam.x / p_cam.z, p_cam.y / p_cam.z);
    let slopes = Vector2::new(sx.clamp(-lim_x, lim_x), sy.clamp(-lim_y, lim_y));
    let slope_clamped = [slopes.x != sx, slopes.y != sy];
    let iz = 1.0 / p_cam.z;
    let cov_jacobian = Matrix2x3::new(
        cam.fx * iz,
        0.0,
        -cam.fx * slopes.x * iz,
        0.0,
        cam.fy * iz,
        -cam.fy * slopes.y * iz,
    );
    let t = cov_jacobian * view.rotation_matrix();
    let sigma: Matrix3<f64> = g.covariance();
    let cov2d = t * sigma * t.transpose() + Matrix2::identity() * BLUR_FLOOR;
    let (sx, sy) = (cov2d[(0, 0)].sqrt(), cov2d[(1, 1)].sqrt());
    if mean.x + EXTENT_99 * sx < 0.0
        || mean.x - EXTENT_99 * sx > w
        || mean.y + EXTENT_99 * sy < 0.0
        || mean.y - EXTENT_99 * sy > h
    {
        return None;
    }
    let conic = cov2d.try_inverse()?;
    Some(Splat2D {
        mean,
        cov2d,
        conic,
        depth: p_cam.z,
        color: g.color(),
        opacity: g.opacity(),
        agent_id: g.agent_id,
        source,
        p_cam,
        jacobian,
        cov_jacobian,
        slopes,
        slope_clamped,
    })
}
