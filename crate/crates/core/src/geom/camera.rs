use nalgebra::{Matrix2x3, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::{Box2D, Box3D, Pose};
use crate::error::{Error, Result};

pub const DEFAULT_NEAR_CLIP: f64 = 0.1;

/// Pinhole camera rigidly mounted on the ego vehicle.
///
/// Ego frame is x forward, y left, z up. Camera frame is x right, y down,
/// z forward.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(rename = "w")]
    pub width: usize,
    #[serde(rename = "h")]
    pub height: usize,
    /// Maps ego-frame points into the camera frame.
    pub ego_to_camera: Pose,
    #[serde(default = "default_near_clip")]
    pub near_clip: f64,
}

fn default_near_clip() -> f64 {
    DEFAULT_NEAR_CLIP
}

/// Rotation taking ego (x fwd, y left, z up) to camera (x right, y down, z fwd).
pub fn ego_to_camera_rotation() -> Matrix3<f64> {
    Matrix3::new(
        0.0, -1.0, 0.0, //
        0.0, 0.0, -1.0, //
        1.0, 0.0, 0.0,
    )
}

impl CameraModel {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let rot = nalgebra::Rotation3::from_matrix_unchecked(ego_to_camera_rotation());
        let cam = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            ego_to_camera: Pose::new(
                nalgebra::UnitQuaternion::from_rotation_matrix(&rot),
                Vector3::zeros(),
            ),
            near_clip: DEFAULT_NEAR_CLIP,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Centered pinhole with square pixels and the given horizontal focal length.
    pub fn centered(width: usize, height: usize, focal: f64) -> Result<Self> {
        Self::new(
            focal,
            focal,
            width as f64 / 2.0,
            height as f64 / 2.0,
            width,
            height,
        )
    }

    /// Raises the camera `height` meters above the ego origin.
    pub fn with_mount_height(mut self, height: f64) -> Self {
        let r = self.ego_to_camera.rotation_matrix();
        let t = -(r * Vector3::new(0.0, 0.0, height));
        self.ego_to_camera = Pose::new(*self.ego_to_camera.rotation(), t);
        self
    }

    /// Points at or closer than `near` (camera z, m) are not rendered.
    pub fn with_near_clip(mut self, near: f64) -> Self {
        self.near_clip = near;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.width > 0
            && self.height > 0
            && self.near_clip > 0.0
            && self.cx.is_finite()
            && self.cy.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!("bad camera intrinsics: {self:?}")))
        }
    }

    /// Scene-to-camera transform for an ego vehicle at `ego_pose` (ego to scene).
    pub fn view(&self, ego_pose: &Pose) -> Pose {
        self.ego_to_camera.compose(&ego_pose.inverse())
    }

    /// Pinhole projection; `None` when the point is at or in front of the near plane.
    pub fn project_point(&self, p_cam: &Vector3<f64>) -> Option<Vector2<f64>> {
        if p_cam.z <= self.near_clip {
            return None;
        }
        Some(self.project_unchecked(p_cam))
    }

    pub(crate) fn project_unchecked(&self, p: &Vector3<f64>) -> Vector2<f64> {
        Vector2::new(
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
        )
    }

    /// Jacobian of [`project_point`](Self::project_point) w.r.t. the camera-space point.
    pub fn projection_jacobian(&self, p_cam: &Vector3<f64>) -> Result<Matrix2x3<f64>> {
        if p_cam.z <= self.near_clip {
            return Err(Error::Invalid(format!(
                "point z = {} inside near clip {}",
                p_cam.z, self.near_clip
            )));
        }
        Ok(self.jacobian_unchecked(p_cam))
    }

    pub(crate) fn jacobian_unchecked(&self, p: &Vector3<f64>) -> Matrix2x3<f64> {
        let iz = 1.0 / p.z;
        let iz2 = iz * iz;
        Matrix2x3::new(
            self.fx * iz,
            0.0,
            -self.fx * p.x * iz2,
            0.0,
            self.fy * iz,
            -self.fy * p.y * iz2,
        )
    }

    /// Tight image-space bounds of a 3D box seen from `ego_pose`.
    ///
    /// Box edges crossing the near plane are clipped there before projection,
    /// so the result is the exact hull of the visible part. Returns `None`
    /// when nothing lies in front of the camera or the clamped bounds are
    /// thinner than one pixel.
    pub fn project_box(&self, bx: &Box3D, ego_pose: &Pose) -> Option<Box2D> {
        let view = self.view(ego_pose);
        let corners: Vec<Vector3<f64>> = bx
            .corners()
            .iter()
            .map(|c| view.transform_point(c))
            .collect();
        let mut pts = Vec::with_capacity(24);
        for c in &corners {
            if c.z > self.near_clip {
                pts.push(self.project_unchecked(c));
            }
        }
        if pts.len() < corners.len() {
            for (a, b) in Box3D::EDGES {
                if let Some((a, b)) = clip_segment_near(&corners[a], &corners[b], self.near_clip) {
                    pts.push(self.project_unchecked(&a));
                    pts.push(self.project_unchecked(&b));
                }
            }
        }
        if pts.is_empty() {
            return None;
        }
        let (mut lo, mut hi) = (pts[0], pts[0]);
        for p in &pts[1..] {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let w = self.width as f64;
        let h = self.height as f64;
        let lo = Vector2::new(lo.x.clamp(0.0, w), lo.y.clamp(0.0, h));
        let hi = Vector2::new(hi.x.clamp(0.0, w), hi.y.clamp(0.0, h));
        if hi.x - lo.x < 1.0 || hi.y - lo.y < 1.0 {
            return None;
        }
        Some(Box2D::new(lo, hi, bx.agent_id))
    }

    /// Projects each consecutive pair of a 3D polyline, clipping at the near plane.
    pub fn project_polyline(
        &self,
        points: &[Vector3<f64>],
        ego_pose: &Pose,
    ) -> Vec<[Vector2<f64>; 2]> {
        let view = self.view(ego_pose);
        let cam: Vec<_> = points.iter().map(|p| view.transform_point(p)).collect();
        cam.windows(2)
            .filter_map(|w| clip_segment_near(&w[0], &w[1], self.near_clip))
            .map(|(a, b)| [self.project_unchecked(&a), self.project_unchecked(&b)])
            .collect()
    }
}

/// Clips a camera-space segment to `z >= near`. The clipped endpoint lies
/// exactly on the plane. `None` when the whole segment is behind.
pub fn clip_segment_near(
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    near: f64,
) -> Option<(Vector3<f64>, Vector3<f64>)> {
    let a_in = a.z >= near;
    let b_in = b.z >= near;
    match (a_in, b_in) {
        (true, true) => Some((*a, *b)),
        (false, false) => None,
        _ => {
            let s = (near - a.z) / (b.z - a.z);
            let mut hit = a + (b - a) * s;
            hit.z = near;
            if a_in {
                Some((*a, hit))
            } else {
                Some((hit, *b))
            }
        }
    }
}
