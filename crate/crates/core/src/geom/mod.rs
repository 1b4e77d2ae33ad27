//! Rigid poses, the pinhole camera and every projection the other modules share.

mod boxes;
mod camera;
mod pose;
mod trajectory;

pub use boxes::{Box2D, Box3D};
pub use camera::{clip_segment_near, ego_to_camera_rotation, CameraModel, DEFAULT_NEAR_CLIP};
pub use pose::Pose;
pub use trajectory::{FrameId, Trajectory, TrajectoryFrame};

/// 2D segment in pixel coordinates.
pub type Segment2 = [nalgebra::Vector2<f64>; 2];

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Vector2, Vector3};

    fn cam() -> CameraModel {
        CameraModel::new(100.0, 100.0, 50.0, 50.0, 100, 100).unwrap()
    }

    #[test]
    fn centered_cube_is_symmetric() {
        let bx = Box3D::new(Vector3::new(10.0, 0.0, 0.0), Vector3::repeat(1.0), 0.0, 1);
        let b = cam().project_box(&bx, &Pose::identity()).unwrap();
        let c = b.center();
        assert!((c - Vector2::new(50.0, 50.0)).norm() < 1e-9);
        assert!(((b.max.x - b.min.x) - (b.max.y - b.min.y)).abs() < 1e-9);
    }

    #[test]
    fn box_behind_is_absent() {
        let bx = Box3D::new(Vector3::new(-10.0, 0.0, 0.0), Vector3::repeat(1.0), 0.0, 1);
        assert!(cam().project_box(&bx, &Pose::identity()).is_none());
    }

    #[test]
    fn box_clamped_by_border() {
        // box spanning the left image border: ego y in [1.5, 3.5] at x = 5
        let bx = Box3D::new(
            Vector3::new(5.0, 2.5, 0.0),
            Vector3::new(1.0, 2.0, 1.0),
            0.0,
            1,
        );
        let b = cam().project_box(&bx, &Pose::identity()).unwrap();
        // corner oracle: u = 100 * (-y) / x + 50, v = 100 * (-z) / x + 50
        let mut umax = f64::MIN;
        let mut vmin = f64::MAX;
        let mut vmax = f64::MIN;
        for c in bx.corners() {
            umax = umax.max(-100.0 * c.y / c.x + 50.0);
            vmin = vmin.min(-100.0 * c.z / c.x + 50.0);
            vmax = vmax.max(-100.0 * c.z / c.x + 50.0);
        }
        assert_eq!(b.min.x, 0.0);
        assert!((b.max.x - umax).abs() < 1e-9);
        assert!((b.min.y - vmin.max(0.0)).abs() < 1e-9);
        assert!((b.max.y - vmax.min(100.0)).abs() < 1e-9);
    }

    #[test]
    fn box_straddling_near_plane_uses_clipped_edges() {
        let bx = Box3D::new(Vector3::new(1.0, 0.0, 0.0), Vector3::new(4.0, 1.0, 1.0), 0.0, 3);
        let b = cam().project_box(&bx, &Pose::identity()).unwrap();
        // front face near the camera overflows the image
        assert_eq!(b.min.x, 0.0);
        assert_eq!(b.max.x, 100.0);
    }

    #[test]
    fn polyline_visible_and_hidden() {
        let c = cam();
        let visible = [Vector3::new(5.0, 0.0, -1.0), Vector3::new(10.0, 0.0, -1.0)];
        assert_eq!(c.project_polyline(&visible, &Pose::identity()).len(), 1);
        let hidden = [Vector3::new(-5.0, 0.0, -1.0), Vector3::new(-10.0, 0.0, -1.0)];
        assert!(c.project_polyline(&hidden, &Pose::identity()).is_empty());
    }

    #[test]
    fn polyline_crossing_near_plane() {
        let c = cam();
        let lane = [Vector3::new(-2.0, 1.0, -1.0), Vector3::new(8.0, 1.0, -1.0)];
        let segs = c.project_polyline(&lane, &Pose::identity());
        assert_eq!(segs.len(), 1);
        // line-plane oracle: ego x = near_clip, y = 1, z = -1
        let hit = Vector3::new(0.0 - 1.0, 1.0, 0.1);
        let expect = Vector2::new(100.0 * hit.x / hit.z + 50.0, 100.0 * hit.y / hit.z + 50.0);
        assert!((segs[0][0] - expect).norm() < 1e-6);
    }
}
