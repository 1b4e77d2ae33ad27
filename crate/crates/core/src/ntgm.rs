//! Novel trajectory proposals (lane change, speed change) with waypoint
//! safety checks, and projection of the world's structure (agent boxes,
//! lane lines) into the cameras of a proposed trajectory.

use nalgebra::{UnitQuaternion, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Box2D, CameraModel, FrameId, Pose, Segment2, Trajectory, TrajectoryFrame};
use crate::worldgen::WorldScene;

pub const DEFAULT_D_MIN: f64 = 2.0;
pub const DEFAULT_MAX_OFFSET: f64 = 0.1;
/// Halvings of the offset range tried per frame before giving up.
pub const MAX_HALVINGS: u32 = 32;

/// Drivable area and agent positions, all on the ego-start ground plane.
#[derive(Clone, Debug, PartialEq)]
pub struct SafetyContext {
    drivable_area: Vec<Vector2<f64>>,
    agent_positions: Vec<Vec<(u32, Vector2<f64>)>>,
    d_min: f64,
}

impl SafetyContext {
    pub fn new(
        drivable_area: Vec<Vector2<f64>>,
        agent_positions: Vec<Vec<(u32, Vector2<f64>)>>,
        d_min: f64,
    ) -> Result<Self> {
        if !(d_min > 0.0 && d_min.is_finite()) {
            return Err(Error::Config(format!("d_min must be positive, got {d_min}")));
        }
        if drivable_area.len() < 3 || !is_simple_polygon(&drivable_area) {
            return Err(Error::Invalid(
                "drivable area must be a simple polygon with at least 3 vertices".into(),
            ));
        }
        Ok(Self {
            drivable_area,
            agent_positions,
            d_min,
        })
    }

    pub fn from_world(world: &WorldScene, d_min: f64) -> Result<Self> {
        Self::new(world.drivable_area.clone(), world.agent_positions(), d_min)
    }

    pub fn drivable_area(&self) -> &[Vector2<f64>] {
        &self.drivable_area
    }

    pub fn agent_positions(&self) -> &[Vec<(u32, Vector2<f64>)>] {
        &self.agent_positions
    }

    pub fn d_min(&self) -> f64 {
        self.d_min
    }
}

fn cross(a: Vector2<f64>, b: Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

fn on_segment(p: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> bool {
    let ab = b - a;
    let ap = p - a;
    cross(ab, ap) == 0.0
        && ap.dot(&ab) >= 0.0
        && (p - b).dot(&(a - b)) >= 0.0
}

fn segments_intersect(a: &Vector2<f64>, b: &Vector2<f64>, c: &Vector2<f64>, d: &Vector2<f64>) -> bool {
    let d1 = cross(b - a, c - a);
    let d2 = cross(b - a, d - a);
    let d3 = cross(d - c, a - c);
    let d4 = cross(d - c, b - c);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    on_segment(c, a, b) || on_segment(d, a, b) || on_segment(a, c, d) || on_segment(b, c, d)
}

/// True when no two non-adjacent edges touch and no edge is degenerate.
pub fn is_simple_polygon(poly: &[Vector2<f64>]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    let edge = |i: usize| (poly[i], poly[(i + 1) % n]);
    if (0..n).any(|i| edge(i).0 == edge(i).1) {
        return false;
    }
    for i in 0..n {
        for j in i + 1..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            let (a, b) = edge(i);
            let (c, d) = edge(j);
            if segments_intersect(&a, &b, &c, &d) {
                return false;
            }
        }
    }
    true
}

/// Point-in-polygon with the boundary counted as inside.
pub fn point_in_polygon(p: &Vector2<f64>, poly: &[Vector2<f64>]) -> bool {
    let n = poly.len();
    let mut inside = false;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        if on_segment(p, &a, &b) {
            return true;
        }
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Inside the drivable area and at least `d_min` from every agent present at
/// `frame`.
pub fn safe_check(p: &Vector2<f64>, frame: usize, ctx: &SafetyContext) -> bool {
    if !point_in_polygon(p, &ctx.drivable_area) {
        return false;
    }
    ctx.agent_positions
        .get(frame)
        .map_or(true, |agents| agents.iter().all(|(_, o)| (p - o).norm() >= ctx.d_min))
}

fn require_ego_start(traj: &Trajectory) -> Result<()> {
    if traj.frame_id() != FrameId::EgoStart {
        return Err(Error::FrameMismatch {
            expected: FrameId::EgoStart,
            found: traj.frame_id(),
        });
    }
    Ok(())
}

/// Re-aims each pose along the finite-difference tangent of the positions,
/// keeping the original pitch and roll. Stationary stretches keep their yaw.
fn reheading(frames: &[TrajectoryFrame], positions: &[Vector3<f64>]) -> Vec<TrajectoryFrame> {
    let n = positions.len();
    (0..n)
        .map(|i| {
            let (a, b) = (positions[i.saturating_sub(1)], positions[(i + 1).min(n - 1)]);
            let d = (b - a).xy();
            let orig = frames[i].pose;
            let rotation = if d.norm() > 1e-9 {
                let delta = d.y.atan2(d.x) - orig.yaw();
                UnitQuaternion::from_axis_angle(&Vector3::z_axis(), delta) * orig.rotation()
            } else {
                *orig.rotation()
            };
            TrajectoryFrame {
                t: frames[i].t,
                pose: Pose::new(rotation, positions[i]),
            }
        })
        .collect()
}

/// Lane-change proposal: accumulates random non-negative lateral offsets per
/// frame, halving the offset range whenever a candidate waypoint fails
/// [`safe_check`].
pub fn propose_lane_change(
    traj: &Trajectory,
    ctx: &SafetyContext,
    max_offset_init: f64,
    seed: u64,
) -> Result<Trajectory> {
    require_ego_start(traj)?;
    if !(max_offset_init > 0.0 && max_offset_init.is_finite()) {
        return Err(Error::Config(format!(
            "initial offset range must be positive, got {max_offset_init}"
        )));
    }
    let frames = traj.frames();
    if frames[0].pose.translation().norm() > 1e-9 {
        return Err(Error::Invalid("trajectory does not start at the ego origin".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions = vec![Vector3::zeros()];
    if !safe_check(&Vector2::zeros(), 0, ctx) {
        return Err(Error::Infeasible { frame: 0 });
    }
    let mut offset = 0.0;
    for (i, f) in frames.iter().enumerate().skip(1) {
        let p = *f.pose.translation();
        let mut max_offset = max_offset_init;
        let mut halvings = 0;
        loop {
            let candidate_offset = offset + rng.random_range(0.0..=max_offset);
            let candidate = p + Vector3::new(0.0, candidate_offset, 0.0);
            if safe_check(&candidate.xy(), i, ctx) {
                positions.push(candidate);
                offset = candidate_offset;
                break;
            }
            if halvings == MAX_HALVINGS {
                return Err(Error::Infeasible { frame: i });
            }
            max_offset *= 0.5;
            halvings += 1;
        }
    }
    debug_assert!(positions
        .iter()
        .enumerate()
        .all(|(i, p)| safe_check(&p.xy(), i, ctx)));
    Trajectory::new(FrameId::EgoStart, reheading(frames, &positions))
}

/// Scales the forward (x) displacement from the first frame by `factor`;
/// y, z, orientation and timestamps are kept.
pub fn propose_speed_change(traj: &Trajectory, factor: f64) -> Result<Trajectory> {
    require_ego_start(traj)?;
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(Error::Config(format!("speed factor must be positive, got {factor}")));
    }
    let x0 = traj.frames()[0].pose.translation().x;
    let frames = traj
        .frames()
        .iter()
        .map(|f| {
            let mut p = *f.pose.translation();
            p.x = x0 + factor * (p.x - x0);
            TrajectoryFrame {
                t: f.t,
                pose: Pose::new(*f.pose.rotation(), p),
            }
        })
        .collect();
    Trajectory::new(FrameId::EgoStart, frames)
}

/// Structured conditions seen from one frame of a trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionFrame {
    pub t: f64,
    pub boxes2d: Vec<Box2D>,
    pub lanes2d: Vec<Segment2>,
}

/// Projects agent boxes and lane lines into each camera of `traj`.
pub fn build_conditions(
    traj: &Trajectory,
    world: &WorldScene,
    cam: &CameraModel,
) -> Result<Vec<ConditionFrame>> {
    let traj = match traj.frame_id() {
        FrameId::EgoStart => traj.clone(),
        FrameId::World => traj.to_ego_start(&world.m0)?,
    };
    let times = world.timestamps();
    if times.len() != traj.len()
        || times
            .iter()
            .zip(traj.frames())
            .any(|(a, f)| (a - f.t).abs() > 1e-9)
    {
        return Err(Error::TimestampMismatch(format!(
            "trajectory has {} frames, world tracks have {}",
            traj.len(),
            times.len()
        )));
    }
    Ok(traj
        .frames()
        .iter()
        .enumerate()
        .map(|(i, f)| ConditionFrame {
            t: f.t,
            boxes2d: world
                .agents
                .values()
                .filter_map(|track| cam.project_box(&track[i], &f.pose))
                .collect(),
            lanes2d: world
                .lanes
                .iter()
                .flat_map(|l| cam.project_polyline(&l.points, &f.pose))
                .collect(),
        })
        .collect())
}

#[derive(Serialize, Deserialize)]
struct BoxLine {
    id: u32,
    min: [f64; 2],
    max: [f64; 2],
}

#[derive(Serialize, Deserialize)]
struct ConditionLine {
    t: f64,
    boxes: Vec<BoxLine>,
    lanes: Vec<[[f64; 2]; 2]>,
}

/// One JSON object per line.
pub fn conditions_to_jsonl(frames: &[ConditionFrame]) -> String {
    let mut out = String::new();
    for f in frames {
        let line = ConditionLine {
            t: f.t,
            boxes: f
                .boxes2d
                .iter()
                .map(|b| BoxLine {
                    id: b.agent_id,
                    min: [b.min.x, b.min.y],
                    max: [b.max.x, b.max.y],
                })
                .collect(),
            lanes: f
                .lanes2d
                .iter()
                .map(|[a, b]| [[a.x, a.y], [b.x, b.y]])
                .collect(),
        };
        out.push_str(&serde_json::to_string(&line).expect("condition serializes"));
        out.push('\n');
    }
    out
}

pub fn conditions_from_jsonl(s: &str) -> Result<Vec<ConditionFrame>> {
    s.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let c: ConditionLine = serde_json::from_str(l)?;
            Ok(ConditionFrame {
                t: c.t,
                boxes2d: c
                    .boxes
                    .into_iter()
                    .map(|b| {
                        Box2D::new(Vector2::new(b.min[0], b.min[1]), Vector2::new(b.max[0], b.max[1]), b.id)
                    })
                    .collect(),
                lanes2d: c
                    .lanes
                    .into_iter()
                    .map(|[a, b]| [Vector2::new(a[0], a[1]), Vector2::new(b[0], b[1])])
                    .collect(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::worldgen::{synth_scene, SceneConfig};

    fn square(h: f64) -> Vec<Vector2<f64>> {
        vec![
            Vector2::new(-h, -h),
            Vector2::new(h, -h),
            Vector2::new(h, h),
            Vector2::new(-h, h),
        ]
    }

    fn straight(n: usize) -> Trajectory {
        let frames = (0..n)
            .map(|i| TrajectoryFrame {
                t: i as f64 * 0.1,
                pose: Pose::from_translation(Vector3::new(i as f64, 0.0, 0.0)),
            })
            .collect();
        Trajectory::new(FrameId::EgoStart, frames).unwrap()
    }

    #[test]
    fn polygon_predicates() {
        let sq = square(1.0);
        assert!(is_simple_polygon(&sq));
        let bow = vec![
            Vector2::new(0.0, 0.0),
            Vector2::new(1.0, 1.0),
            Vector2::new(1.0, 0.0),
            Vector2::new(0.0, 1.0),
        ];
        assert!(!is_simple_polygon(&bow));
        assert!(point_in_polygon(&Vector2::zeros(), &sq));
        assert!(point_in_polygon(&Vector2::new(1.0, 0.3), &sq));
        assert!(point_in_polygon(&Vector2::new(1.0, 1.0), &sq));
        assert!(!point_in_polygon(&Vector2::new(1.0 + 1e-9, 0.0), &sq));
        assert!(SafetyContext::new(bow, vec![], 2.0).is_err());
        assert!(SafetyContext::new(sq.clone(), vec![], 0.0).is_err());
    }

    #[test]
    fn safe_check_distance_boundary() {
        let ctx = |d: f64| {
            SafetyContext::new(square(50.0), vec![vec![(1, Vector2::new(d, 0.0))]], 2.0).unwrap()
        };
        assert!(safe_check(&Vector2::zeros(), 0, &SafetyContext::new(square(5.0), vec![], 2.0).unwrap()));
        assert!(!safe_check(&Vector2::new(60.0, 0.0), 0, &ctx(10.0)));
        assert!(!safe_check(&Vector2::zeros(), 0, &ctx(1.99)));
        assert!(safe_check(&Vector2::zeros(), 0, &ctx(2.01)));
    }

    #[test]
    fn unbounded_offsets_monotone_and_small() {
        let ctx = SafetyContext::new(square(1e6), vec![], 2.0).unwrap();
        let out = propose_lane_change(&straight(40), &ctx, 0.1, 5).unwrap();
        assert_eq!(*out.frames()[0].pose.translation(), Vector3::zeros());
        let ys: Vec<f64> = out.positions().iter().map(|p| p.y).collect();
        for w in ys.windows(2) {
            assert!((0.0..=0.1).contains(&(w[1] - w[0])));
        }
        let again = propose_lane_change(&straight(40), &ctx, 0.1, 5).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn zero_slack_lane_is_infeasible_at_frame_one() {
        // the original path runs along the polygon's left edge
        let lane = vec![
            Vector2::new(-5.0, -1.75),
            Vector2::new(100.0, -1.75),
            Vector2::new(100.0, 0.0),
            Vector2::new(-5.0, 0.0),
        ];
        let ctx = SafetyContext::new(lane, vec![], 2.0).unwrap();
        match propose_lane_change(&straight(10), &ctx, 0.1, 1) {
            Err(Error::Infeasible { frame }) => assert_eq!(frame, 1),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    /// Re-runs the proposal loop step by step with its own random stream.
    fn replay(traj: &Trajectory, ctx: &SafetyContext, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut offs = vec![0.0];
        let mut off = 0.0;
        for (i, f) in traj.frames().iter().enumerate().skip(1) {
            let mut m: f64 = 0.1;
            loop {
                let c = off + rng.random_range(0.0..=m);
                let p = f.pose.translation().xy() + Vector2::new(0.0, c);
                if safe_check(&p, i, ctx) {
                    off = c;
                    break;
                }
                m /= 2.0;
            }
            offs.push(off);
        }
        offs
    }

    #[test]
    fn two_lane_world_proposal_replays() {
        let cfg = SceneConfig {
            agents: 2,
            ..SceneConfig::default()
        };
        let world = synth_scene(&cfg, 3).unwrap();
        let ctx = SafetyContext::from_world(&world, DEFAULT_D_MIN).unwrap();
        let ori = world.ego_start_traj();
        let novel = propose_lane_change(&ori, &ctx, 0.1, 3).unwrap();
        let want = replay(&ori, &ctx, 3);
        for ((n, o), w) in novel.positions().iter().zip(ori.positions()).zip(&want) {
            assert!(((n.y - o.y) - w).abs() < 1e-12);
        }
        let last = want.last().unwrap();
        assert!((0.0..=4.0).contains(last));
        for (i, p) in novel.positions().iter().enumerate() {
            assert!(safe_check(&p.xy(), i, &ctx));
        }
    }

    #[test]
    fn speed_change_scales_x() {
        let t = straight(4);
        assert_eq!(propose_speed_change(&t, 1.0).unwrap(), t);
        let xs: Vec<f64> = propose_speed_change(&t, 2.0)
            .unwrap()
            .positions()
            .iter()
            .map(|p| p.x)
            .collect();
        assert_eq!(xs, vec![0.0, 2.0, 4.0, 6.0]);
        assert!(propose_speed_change(&t, 0.0).is_err());
        assert!(propose_speed_change(&t, -1.0).is_err());
    }

    #[test]
    fn conditions_identity_and_shift() {
        let cfg = SceneConfig {
            agents: 3,
            frames: 8,
            ..SceneConfig::default()
        };
        let world = synth_scene(&cfg, 21).unwrap();
        let cam = CameraModel::centered(96, 64, 60.0).unwrap().with_mount_height(1.6);
        let ori = world.ego_start_traj();
        let c0 = build_conditions(&ori, &world, &cam).unwrap();
        let cw = build_conditions(&world.ego_traj, &world, &cam).unwrap();
        assert_eq!(c0.len(), 8);
        for (a, b) in c0.iter().zip(&cw) {
            assert_eq!(a.boxes2d.len(), b.boxes2d.len());
        }
        let shifted = |dy: f64| {
            let frames = ori
                .frames()
                .iter()
                .map(|f| TrajectoryFrame {
                    t: f.t,
                    pose: Pose::new(*f.pose.rotation(), f.pose.translation() + Vector3::new(0.0, dy, 0.0)),
                })
                .collect();
            build_conditions(&Trajectory::new(FrameId::EgoStart, frames).unwrap(), &world, &cam).unwrap()
        };
        let (s1, s3) = (shifted(1.0), shifted(3.0));
        for ((a, b), c) in c0.iter().zip(&s1).zip(&s3) {
            for bx in &a.boxes2d {
                let find = |f: &ConditionFrame| f.boxes2d.iter().find(|q| q.agent_id == bx.agent_id).copied();
                if let (Some(b1), Some(b3)) = (find(b), find(c)) {
                    // ego moves left, so the image content moves right
                    if b3.min.x > 0.0 && b3.max.x < 96.0 {
                        assert!(b1.center().x > bx.center().x);
                        assert!(b3.center().x > b1.center().x);
                    }
                }
            }
        }
        let bad = straight(5);
        assert!(matches!(
            build_conditions(&propose_speed_change(&bad, 1.0).unwrap(), &world, &cam),
            Err(Error::TimestampMismatch(_))
        ));
    }

    #[test]
    fn jsonl_round_trip() {
        let f = ConditionFrame {
            t: 0.3,
            boxes2d: vec![Box2D::new(Vector2::new(1.0, 2.0), Vector2::new(3.5, 4.25), 7)],
            lanes2d: vec![[Vector2::new(0.5, 1.0), Vector2::new(9.0, -2.0)]],
        };
        let s = conditions_to_jsonl(&[f.clone(), f.clone()]);
        assert_eq!(s.lines().count(), 2);
        assert!(s.starts_with(r#"{"t":0.3,"boxes":[{"id":7,"min":[1.0,2.0],"max":[3.5,4.25]}]"#));
        assert_eq!(conditions_from_jsonl(&s).unwrap(), vec![f.clone(), f]);
    }
}
