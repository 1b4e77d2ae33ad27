use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

/// Oriented 3D box (yaw only). `size` is (length, width, height).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Box3D {
    pub center: Vector3<f64>,
    pub size: Vector3<f64>,
    pub heading: f64,
    pub agent_id: u32,
}

impl Box3D {
    /// Corner index pairs forming the 12 edges of [`corners`](Self::corners).
    pub const EDGES: [(usize, usize); 12] = [
        (0, 1),
        (1, 3),
        (3, 2),
        (2, 0),
        (4, 5),
        (5, 7),
        (7, 6),
        (6, 4),
        (0, 4),
        (1, 5),
        (2, 6),
        (3, 7),
    ];

    pub fn new(center: Vector3<f64>, size: Vector3<f64>, heading: f64, agent_id: u32) -> Self {
        assert!(
            size.iter().all(|s| *s > 0.0),
            "box size must be positive: {size:?}"
        );
        Self {
            center,
            size,
            heading,
            agent_id,
        }
    }

    /// Corners ordered by bit pattern (x: bit 2, y: bit 1, z: bit 0).
    pub fn corners(&self) -> [Vector3<f64>; 8] {
        let (s, c) = self.heading.sin_cos();
        let half = self.size * 0.5;
        std::array::from_fn(|i| {
            let lx = if i & 4 != 0 { half.x } else { -half.x };
            let ly = if i & 2 != 0 { half.y } else { -half.y };
            let lz = if i & 1 != 0 { half.z } else { -half.z };
            self.center + Vector3::new(c * lx - s * ly, s * lx + c * ly, lz)
        })
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        let d = p - self.center;
        let (s, c) = self.heading.sin_cos();
        let lx = c * d.x + s * d.y;
        let ly = -s * d.x + c * d.y;
        let half = self.size * 0.5 + Vector3::repeat(1e-9);
        lx.abs() <= half.x && ly.abs() <= half.y && d.z.abs() <= half.z
    }
}

/// Axis-aligned pixel-space box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Box2D {
    pub min: Vector2<f64>,
    pub max: Vector2<f64>,
    pub agent_id: u32,
}

impl Box2D {
    pub fn new(min: Vector2<f64>, max: Vector2<f64>, agent_id: u32) -> Self {
        debug_assert!(min.x <= max.x && min.y <= max.y);
        Self { min, max, agent_id }
    }

    pub fn center(&self) -> Vector2<f64> {
        (self.min + self.max) * 0.5
    }

    pub fn area(&self) -> f64 {
        (self.max.x - self.min.x).max(0.0) * (self.max.y - self.min.y).max(0.0)
    }

    pub fn diagonal(&self) -> f64 {
        (self.max - self.min).norm()
    }

    pub fn contains(&self, p: &Vector2<f64>) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }
}
