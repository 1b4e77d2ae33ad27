use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::Pose;
use crate::error::{Error, Result};

/// Coordinate frame a trajectory is expressed in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameId {
    World,
    EgoStart,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFrame {
    pub t: f64,
    #[serde(flatten)]
    pub pose: Pose,
}

/// Time-stamped ego poses (ego to `frame_id`). At least two frames with
/// strictly increasing timestamps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TrajectoryRepr")]
pub struct Trajectory {
    frame_id: FrameId,
    frames: Vec<TrajectoryFrame>,
}

impl Trajectory {
    pub fn new(frame_id: FrameId, frames: Vec<TrajectoryFrame>) -> Result<Self> {
        if frames.len() < 2 {
            return Err(Error::Invalid(format!(
                "trajectory needs at least 2 frames, got {}",
                frames.len()
            )));
        }
        if let Some(w) = frames.windows(2).find(|w| !(w[1].t > w[0].t)) {
            return Err(Error::Invalid(format!(
                "timestamps not strictly increasing at t = {}",
                w[1].t
            )));
        }
        Ok(Self { frame_id, frames })
    }

    #[cfg(test)]
    pub(crate) fn new_unchecked(frame_id: FrameId, frames: Vec<TrajectoryFrame>) -> Self {
        Self { frame_id, frames }
    }

    pub fn frame_id(&self) -> FrameId {
        self.frame_id
    }

    pub fn frames(&self) -> &[TrajectoryFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn timestamps(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.t).collect()
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.frames.iter().map(|f| *f.pose.translation()).collect()
    }

    /// Re-expresses a world trajectory in the ego frame at its first pose:
    /// every pose becomes `m0⁻¹ ∘ pose`.
    pub fn to_ego_start(&self, m0: &Pose) -> Result<Trajectory> {
        if self.frame_id != FrameId::World {
            return Err(Error::FrameMismatch {
                expected: FrameId::World,
                found: self.frame_id,
            });
        }
        let inv = m0.inverse();
        let frames = self
            .frames
            .iter()
            .map(|f| TrajectoryFrame {
                t: f.t,
                pose: inv.compose(&f.pose),
            })
            .collect();
        Ok(Trajectory {
            frame_id: FrameId::EgoStart,
            frames,
        })
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trajectory serializes")
    }
}

#[derive(Deserialize)]
struct TrajectoryRepr {
    frame_id: FrameId,
    frames: Vec<TrajectoryFrame>,
}

impl TryFrom<TrajectoryRepr> for Trajectory {
    type Error = Error;

    fn try_from(r: TrajectoryRepr) -> Result<Self> {
        Trajectory::new(r.frame_id, r.frames)
    }
}
