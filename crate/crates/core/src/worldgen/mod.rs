//! Synthetic driving worlds: a dense ground-truth Gaussian scene with
//! scripted agents, lane markings and a drivable area, plus the oracle
//! renderer and LiDAR-style depth that stand in for sensor logs and for the
//! generative model on novel trajectories.
//!
//! Everything is built in the ego-start frame (x forward, y left, z up, ground
//! at z = 0). The world trajectory is that frame mapped through a seeded `M0`.

mod oracle;

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use oracle::{lidar_depth, oracle_render, reproject_depth, DegradeSpec};

use crate::error::{Error, Result};
use crate::gauss4d::{
    read_checkpoint, write_checkpoint, GaussianPrimitive, GaussianScene, DEFAULT_DEGREE,
};
use crate::geom::{Box3D, FrameId, Pose, Trajectory, TrajectoryFrame};
use crate::image::write_atomic;

pub const LANE_WIDTH: f64 = 3.5;
/// Road extends this far behind the ego start.
const ROAD_BEHIND: f64 = 5.0;
/// Road length ahead of the farthest point a doubled-speed ego could reach.
const ROAD_AHEAD: f64 = 60.0;
const GRASS_WIDTH: f64 = 12.0;
const FACADE_SETBACK: f64 = 13.0;
const SKY_RADIUS: f64 = 250.0;
const LANE_SAMPLE: f64 = 2.0;
/// Longitudinal gap every agent keeps to the ego and to same-lane agents.
const MIN_GAP: f64 = 9.0;
const MAX_AHEAD: f64 = 40.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoadKind {
    Straight,
    Arc,
}

fn default_ego_speed() -> f64 {
    10.0
}

fn default_arc_radius() -> f64 {
    150.0
}

fn default_lidar_range() -> f64 {
    80.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub kind: RoadKind,
    pub lanes: usize,
    pub agents: usize,
    pub frames: usize,
    pub hz: f64,
    pub seed: u64,
    #[serde(default = "default_ego_speed")]
    pub ego_speed: f64,
    /// How many of `agents` cross the road instead of following a lane.
    #[serde(default)]
    pub crossing: usize,
    /// Radius of the lane-0 centerline for arc roads (m).
    #[serde(default = "default_arc_radius")]
    pub arc_radius: f64,
    /// LiDAR returns beyond this camera depth are dropped (m).
    #[serde(default = "default_lidar_range")]
    pub lidar_range: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            kind: RoadKind::Straight,
            lanes: 2,
            agents: 3,
            frames: 40,
            hz: 10.0,
            seed: 7,
            ego_speed: default_ego_speed(),
            crossing: 0,
            arc_radius: default_arc_radius(),
            lidar_range: default_lidar_range(),
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.lanes == 0 {
            return bad("lane count must be at least 1".into());
        }
        if self.frames < 2 {
            return bad(format!("need at least 2 frames, got {}", self.frames));
        }
        if !(self.hz > 0.0 && self.hz.is_finite()) {
            return bad(format!("frame rate must be positive, got {}", self.hz));
        }
        if !(self.ego_speed >= 0.0 && self.ego_speed.is_finite()) {
            return bad(format!("ego speed must be >= 0, got {}", self.ego_speed));
        }
        if self.crossing > self.agents {
            return bad("more crossing agents than agents".into());
        }
        if self.kind == RoadKind::Arc && self.arc_radius <= self.lanes as f64 * LANE_WIDTH + 40.0 {
            return bad(format!("arc radius {} too tight", self.arc_radius));
        }
        if !(self.lidar_range > 0.0) {
            return bad("lidar range must be positive".into());
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: SceneConfig = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    fn duration(&self) -> f64 {
        (self.frames - 1) as f64 / self.hz
    }
}

/// Road centerline geometry. `s` is arc length along the lane-0 center and
/// `lat` the signed offset to the left of it.
#[derive(Clone, Copy, Debug)]
struct Road {
    kind: RoadKind,
    radius: f64,
}

impl Road {
    fn point(&self, s: f64, lat: f64) -> Vector2<f64> {
        match self.kind {
            RoadKind::Straight => Vector2::new(s, lat),
            RoadKind::Arc => {
                let a = s / self.radius;
                let r = self.radius - lat;
                Vector2::new(r * a.sin(), self.radius - r * a.cos())
            }
        }
    }

    fn heading(&self, s: f64) -> f64 {
        match self.kind {
            RoadKind::Straight => 0.0,
            RoadKind::Arc => s / self.radius,
        }
    }

    /// Rate of `s` for a vehicle moving at `speed` along offset `lat`.
    fn s_rate(&self, speed: f64, lat: f64) -> f64 {
        match self.kind {
            RoadKind::Straight => speed,
            RoadKind::Arc => speed * self.radius / (self.radius - lat),
        }
    }

    fn at(&self, s: f64, lat: f64, z: f64) -> Vector3<f64> {
        let p = self.point(s, lat);
        Vector3::new(p.x, p.y, z)
    }
}

#[derive(Clone, Copy, Debug)]
enum Script {
    Lane { lat: f64, s0: f64, rate: f64 },
    Cross { s: f64, lat0: f64, speed: f64 },
}

impl Script {
    fn state(&self, road: &Road, t: f64) -> (Vector2<f64>, f64) {
        match *self {
            Script::Lane { lat, s0, rate } => {
                let s = s0 + rate * t;
                (road.point(s, lat), road.heading(s))
            }
            Script::Cross { s, lat0, speed } => {
                let turn = std::f64::consts::FRAC_PI_2.copysign(speed);
                (road.point(s, lat0 + speed * t), road.heading(s) + turn)
            }
        }
    }

    fn s_at(&self, t: f64) -> f64 {
        match *self {
            Script::Lane { s0, rate, .. } => s0 + rate * t,
            Script::Cross { s, .. } => s,
        }
    }
}

/// A 3D polyline tagged with the color it is painted in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LanePolyline {
    pub points: Vec<Vector3<f64>>,
    pub color: [f64; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorldScene {
    pub config: SceneConfig,
    pub gt_scene: GaussianScene,
    /// Per-agent boxes, one per trajectory timestamp.
    pub agents: BTreeMap<u32, Vec<Box3D>>,
    pub lanes: Vec<LanePolyline>,
    /// Counter-clockwise polygon on the ego-start ground plane.
    pub drivable_area: Vec<Vector2<f64>>,
    pub ego_traj: Trajectory,
    pub m0: Pose,
}

#[derive(Serialize, Deserialize)]
struct WorldMeta {
    config: SceneConfig,
    agents: BTreeMap<u32, Vec<Box3D>>,
    lanes: Vec<LanePolyline>,
    drivable_area: Vec<Vector2<f64>>,
    ego_traj: Trajectory,
    m0: Pose,
}

impl WorldScene {
    pub fn timestamps(&self) -> Vec<f64> {
        self.ego_traj.timestamps()
    }

    /// The original ego trajectory in the ego-start frame.
    pub fn ego_start_traj(&self) -> Trajectory {
        self.ego_traj
            .to_ego_start(&self.m0)
            .expect("world trajectory converts")
    }

    /// Agent ground-plane centers, one list per frame.
    pub fn agent_positions(&self) -> Vec<Vec<(u32, Vector2<f64>)>> {
        (0..self.ego_traj.len())
            .map(|i| {
                self.agents
                    .iter()
                    .map(|(id, track)| (*id, track[i].center.xy()))
                    .collect()
            })
            .collect()
    }

    /// Writes `gt.sp4d` (+ sidecar) and `world.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_checkpoint(
            &dir.join("gt.sp4d"),
            &self.gt_scene,
            serde_json::json!({ "source": "worldgen", "seed": self.config.seed }),
        )?;
        let meta = WorldMeta {
            config: self.config.clone(),
            agents: self.agents.clone(),
            lanes: self.lanes.clone(),
            drivable_area: self.drivable_area.clone(),
            ego_traj: self.ego_traj.clone(),
            m0: self.m0,
        };
        write_atomic(
            &dir.join("world.json"),
            serde_json::to_string_pretty(&meta)?.as_bytes(),
        )
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let (gt_scene, _) = read_checkpoint(&dir.join("gt.sp4d"))?;
        let path = dir.join("world.json");
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let meta: WorldMeta = serde_json::from_slice(&bytes)?;
        Ok(Self {
            config: meta.config,
            gt_scene,
            agents: meta.agents,
            lanes: meta.lanes,
            drivable_area: meta.drivable_area,
            ego_traj: meta.ego_traj,
            m0: meta.m0,
        })
    }
}

fn yaw_quat(yaw: f64) -> [f64; 4] {
    let (s, c) = (0.5 * yaw).sin_cos();
    [c, 0.0, 0.0, s]
}

fn ln3(x: f64, y: f64, z: f64) -> Vector3<f64> {
    Vector3::new(x.ln(), y.ln(), z.ln())
}

fn jitter(rng: &mut ChaCha8Rng, base: [f64; 3], amount: f64) -> Vector3<f64> {
    let d = rng.random_range(-amount..=amount);
    Vector3::from_fn(|i, _| (base[i] + d + rng.random_range(-0.3 * amount..=0.3 * amount)).clamp(0.02, 0.98))
}

/// HSV with full saturation to RGB.
fn hue_rgb(h: f64, v: f64) -> [f64; 3] {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let x = 1.0 - (h6 % 2.0 - 1.0).abs();
    let (r, g, b) = match h6 as usize {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    [r * v, g * v, b * v]
}

struct Builder {
    road: Road,
    degree: usize,
    prims: Vec<GaussianPrimitive>,
}

impl Builder {
    fn add(&mut self, pos: Vector3<f64>, log_scale: Vector3<f64>, yaw: f64, opacity: f64, color: Vector3<f64>) {
        self.prims.push(GaussianPrimitive::new(
            pos,
            log_scale,
            yaw_quat(yaw),
            opacity,
            color,
            0,
            self.degree,
        ));
    }
}

/// Builds a deterministic world from `config`, seeded by `seed`.
pub fn synth_scene(config: &SceneConfig, seed: u64) -> Result<WorldScene> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let road = Road {
        kind: config.kind,
        radius: config.arc_radius,
    };
    let n_lanes = config.lanes;
    let duration = config.duration();
    let times: Vec<f64> = (0..config.frames).map(|i| i as f64 / config.hz).collect();
    let t0 = 0.5 * duration;
    let s_end = 2.0 * config.ego_speed * duration + ROAD_AHEAD;
    let right_edge = -0.5 * LANE_WIDTH;
    let left_edge = right_edge + n_lanes as f64 * LANE_WIDTH;

    let mut b = Builder {
        road,
        degree: DEFAULT_DEGREE,
        prims: Vec::new(),
    };
    build_ground(&mut b, &mut rng, s_end, right_edge, left_edge, n_lanes);
    let lanes = build_lanes(&mut b, s_end, right_edge, n_lanes);
    build_backdrop(&mut b, &mut rng, s_end, right_edge, left_edge);

    let scripts = place_agents(config, &road, &times, &mut rng)?;
    let mut agents = BTreeMap::new();
    for (k, script) in scripts.iter().enumerate() {
        let id = k as u32 + 1;
        let hue = (k as f64 * 0.381_966 + rng.random_range(0.0..0.08)).fract();
        let color = hue_rgb(hue, 0.92);
        let size = Vector3::new(
            4.4 * rng.random_range(0.9..1.1),
            1.9 * rng.random_range(0.95..1.05),
            1.5 * rng.random_range(0.9..1.1),
        );
        let track: Vec<Box3D> = times
            .iter()
            .map(|&t| {
                let (c, h) = script.state(&road, t);
                Box3D::new(Vector3::new(c.x, c.y, 0.5 * size.z), size, h, id)
            })
            .collect();
        build_agent(&mut b, &mut rng, script, &road, id, size, color, &times, t0);
        agents.insert(id, track);
    }

    let mut polygon = Vec::new();
    let steps = ((s_end + ROAD_BEHIND) / LANE_SAMPLE).ceil() as usize;
    let s_of = |i: usize| -ROAD_BEHIND + (s_end + ROAD_BEHIND) * i as f64 / steps as f64;
    for i in 0..=steps {
        polygon.push(road.point(s_of(i), right_edge));
    }
    for i in (0..=steps).rev() {
        polygon.push(road.point(s_of(i), left_edge));
    }

    let m0 = Pose::from_yaw(
        rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
        Vector3::new(
            rng.random_range(-500.0..500.0),
            rng.random_range(-500.0..500.0),
            rng.random_range(0.0..20.0),
        ),
    );
    let frames: Vec<TrajectoryFrame> = times
        .iter()
        .map(|&t| {
            let s = config.ego_speed * t;
            let p = road.at(s, 0.0, 0.0);
            TrajectoryFrame {
                t,
                pose: m0.compose(&Pose::from_yaw(road.heading(s), p)),
            }
        })
        .collect();
    let ego_traj = Trajectory::new(FrameId::World, frames)?;

    let gt_scene = GaussianScene::new(b.prims, t0, (times[0], duration))?;
    Ok(WorldScene {
        config: config.clone(),
        gt_scene,
        agents,
        lanes,
        drivable_area: polygon,
        ego_traj,
        m0,
    })
}

fn build_ground(
    b: &mut Builder,
    rng: &mut ChaCha8Rng,
    s_end: f64,
    right_edge: f64,
    left_edge: f64,
    n_lanes: usize,
) {
    let road = b.road;
    // asphalt: four rows per lane kept clear of the painted lines
    let mut s = -ROAD_BEHIND;
    while s <= s_end {
        let h = road.heading(s);
        for lane in 0..n_lanes {
            for off in [-1.25, -0.42, 0.42, 1.25] {
                let lat = lane as f64 * LANE_WIDTH + off;
                let shade = 0.30 + 0.03 * (0.13 * s + lane as f64).sin();
                let c = jitter(rng, [shade, shade, shade + 0.02], 0.015);
                b.add(road.at(s, lat, 0.0), ln3(0.5, 0.3, 0.03), h, 0.95, c);
            }
        }
        s += 0.8;
    }
    // grass shoulders
    let mut s = -ROAD_BEHIND;
    while s <= s_end {
        let h = road.heading(s);
        let mut d = 0.6;
        while d <= GRASS_WIDTH {
            for lat in [right_edge - d, left_edge + d] {
                let g = 0.42 + 0.05 * (0.21 * s + 0.7 * lat).sin();
                let c = jitter(rng, [0.22, g, 0.16], 0.02);
                b.add(road.at(s, lat, 0.0), ln3(0.75, 0.7, 0.03), h, 0.95, c);
            }
            d += 1.1;
        }
        s += 1.2;
    }
}

fn build_lanes(b: &mut Builder, s_end: f64, right_edge: f64, n_lanes: usize) -> Vec<LanePolyline> {
    let road = b.road;
    let mut lanes = Vec::new();
    for k in 0..=n_lanes {
        let lat = right_edge + k as f64 * LANE_WIDTH;
        let mut s = -ROAD_BEHIND;
        while s <= s_end {
            b.add(
                road.at(s, lat, 0.03),
                ln3(0.25, 0.07, 0.02),
                road.heading(s),
                0.98,
                Vector3::new(0.97, 0.97, 0.96),
            );
            s += 0.4;
        }
        let steps = ((s_end + ROAD_BEHIND) / LANE_SAMPLE).ceil() as usize;
        let points = (0..=steps)
            .map(|i| {
                let s = -ROAD_BEHIND + (s_end + ROAD_BEHIND) * i as f64 / steps as f64;
                road.at(s, lat, 0.0)
            })
            .collect();
        lanes.push(LanePolyline {
            points,
            color: [1.0, 1.0, 1.0],
        });
    }
    lanes
}

fn build_backdrop(b: &mut Builder, rng: &mut ChaCha8Rng, s_end: f64, right_edge: f64, left_edge: f64) {
    let road = b.road;
    // building facades along both sides
    for lat in [right_edge - FACADE_SETBACK, left_edge + FACADE_SETBACK] {
        let mut s = -ROAD_BEHIND;
        while s < s_end + 10.0 {
            let len: f64 = rng.random_range(8.0..20.0);
            let height: f64 = rng.random_range(5.0..14.0);
            let base = [
                rng.random_range(0.35..0.75),
                rng.random_range(0.3..0.65),
                rng.random_range(0.3..0.6),
            ];
            let mut u = 0.6;
            while u < len {
                let ss = s + u;
                let mut z = 0.6;
                while z < height {
                    let c = jitter(rng, base, 0.02);
                    b.add(road.at(ss, lat, z), ln3(0.7, 0.06, 0.7), road.heading(ss), 0.97, c);
                    z += 1.2;
                }
                u += 1.2;
            }
            s += len + rng.random_range(2.0..6.0);
        }
    }
    // closing wall at the far end of the road
    let wall_s = s_end + 8.0;
    let mut lat = right_edge - FACADE_SETBACK;
    while lat <= left_edge + FACADE_SETBACK {
        let mut z = 0.75;
        while z < 12.0 {
            let c = jitter(rng, [0.55, 0.5, 0.45], 0.02);
            b.add(road.at(wall_s, lat, z), ln3(0.06, 0.9, 0.9), road.heading(wall_s), 0.97, c);
            z += 1.5;
        }
        lat += 1.5;
    }
    // sky: a vertical cylinder band far away, centered on the mid-road point
    let s_mid = 0.5 * s_end;
    let center = road.point(s_mid, 0.5 * (right_edge + left_edge));
    let h0 = road.heading(s_mid);
    let spacing = 16.0;
    // primitives far off the view axis project to huge ellipses, so the band
    // only covers directions the cameras can see
    let turn = (road.heading(s_end) - road.heading(-ROAD_BEHIND)).abs();
    let span = 55f64.to_radians() + 0.5 * turn;
    let n_ang = (2.0 * span * SKY_RADIUS / spacing).ceil() as usize;
    for i in 0..=n_ang {
        let a = h0 - span + 2.0 * span * i as f64 / n_ang as f64;
        let mut z: f64 = -5.0;
        while z < 260.0 {
            let up = (z / 260.0).clamp(0.0, 1.0);
            let base = [0.72 - 0.25 * up, 0.82 - 0.18 * up, 0.96 - 0.04 * up];
            let c = jitter(rng, base, 0.01);
            let p = Vector3::new(center.x + SKY_RADIUS * a.cos(), center.y + SKY_RADIUS * a.sin(), z);
            b.add(p, ln3(2.0, 10.0, 10.0), a, 0.99, c);
            z += spacing;
        }
    }
}

/// Samples agent scripts that keep clear of the ego and of each other.
fn place_agents(config: &SceneConfig, road: &Road, times: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<Script>> {
    let n_lane = config.agents - config.crossing;
    let ego_s = |t: f64| config.ego_speed * t;
    let mut scripts: Vec<(usize, Script)> = Vec::new();
    for _ in 0..n_lane {
        let mut placed = None;
        for _ in 0..2000 {
            let lane = rng.random_range(0..config.lanes);
            let lat = lane as f64 * LANE_WIDTH;
            let speed = rng.random_range(5.0..15.0);
            let s0 = rng.random_range(MIN_GAP..MAX_AHEAD);
            let cand = Script::Lane {
                lat,
                s0,
                rate: road.s_rate(speed, lat),
            };
            let ok = times.iter().all(|&t| {
                let gap = cand.s_at(t) - ego_s(t);
                (MIN_GAP..=MAX_AHEAD).contains(&gap)
                    && scripts
                        .iter()
                        .filter(|(l, _)| *l == lane)
                        .all(|(_, o)| (o.s_at(t) - cand.s_at(t)).abs() >= MIN_GAP)
            });
            if ok {
                placed = Some((lane, cand));
                break;
            }
        }
        scripts.push(placed.ok_or_else(|| {
            Error::Config(format!("cannot place {n_lane} lane-keeping agents without conflicts"))
        })?);
    }
    let road_mid = 0.5 * (config.lanes as f64 - 1.0) * LANE_WIDTH;
    let duration = config.duration();
    let far = 2.0 * config.ego_speed * duration;
    for _ in 0..config.crossing {
        let speed: f64 = rng.random_range(5.0..8.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let s = far + rng.random_range(10.0..30.0);
        let lat0 = road_mid - speed * 0.5 * duration;
        scripts.push((usize::MAX, Script::Cross { s, lat0, speed }));
    }
    Ok(scripts.into_iter().map(|(_, s)| s).collect())
}

/// Box-surface primitives for one agent. Each primitive's trajectory is the
/// rigid motion of its box-local offset, fitted by a polynomial in `t - t0`.
#[allow(clippy::too_many_arguments)]
fn build_agent(
    b: &mut Builder,
    rng: &mut ChaCha8Rng,
    script: &Script,
    road: &Road,
    id: u32,
    size: Vector3<f64>,
    color: [f64; 3],
    times: &[f64],
    t0: f64,
) {
    let inset = 0.06;
    let half = size * 0.5 - Vector3::repeat(inset);
    let spacing = 0.33;
    let grid = |len: f64| -> Vec<f64> {
        let n = (len / spacing).ceil().max(1.0) as usize + 1;
        (0..n).map(|i| -0.5 * len + len * i as f64 / (n - 1) as f64).collect()
    };
    // (local offset from box center, local log-scale)
    let mut surface: Vec<(Vector3<f64>, Vector3<f64>)> = Vec::new();
    let body_z = |z: f64| z.max(-half.z + 0.25);
    for &y in &grid(2.0 * half.y) {
        for &z in &grid(2.0 * half.z) {
            for x in [-half.x, half.x] {
                surface.push((Vector3::new(x, y, body_z(z)), ln3(0.04, 0.2, 0.2)));
            }
        }
    }
    for &x in &grid(2.0 * half.x) {
        for &z in &grid(2.0 * half.z) {
            for y in [-half.y, half.y] {
                surface.push((Vector3::new(x, y, body_z(z)), ln3(0.2, 0.04, 0.2)));
            }
        }
        for &y in &grid(2.0 * half.y) {
            surface.push((Vector3::new(x, y, half.z), ln3(0.2, 0.2, 0.04)));
        }
    }

    let taus: Vec<f64> = times.iter().map(|t| t - t0).collect();
    let states: Vec<(Vector2<f64>, f64)> = times.iter().map(|&t| script.state(road, t)).collect();
    let (c0, h0) = script.state(road, t0);
    let yaw_rate = match *script {
        Script::Lane { rate, .. } => road.heading(rate) - road.heading(0.0),
        Script::Cross { .. } => 0.0,
    };
    for (local, log_scale) in surface {
        let world = |c: Vector2<f64>, h: f64| {
            let (s, co) = h.sin_cos();
            Vector3::new(
                c.x + co * local.x - s * local.y,
                c.y + s * local.x + co * local.y,
                half.z + inset + local.z,
            )
        };
        let p0 = world(c0, h0);
        let samples: Vec<Vector3<f64>> = states.iter().map(|(c, h)| world(*c, *h) - p0).collect();
        let coeffs = fit_polynomial(&taus, &samples, b.degree);
        let shade = rng.random_range(-0.05..0.05);
        let c = Vector3::from_fn(|i, _| (color[i] + shade).clamp(0.03, 0.97));
        let mut g = GaussianPrimitive::new(p0, log_scale, yaw_quat(h0), 0.97, c, id, b.degree);
        g.temporal.position = coeffs;
        if b.degree > 0 {
            g.temporal.rotation[0] = Vector3::new(0.0, 0.0, yaw_rate);
        }
        b.prims.push(g);
    }
}

/// Least-squares coefficients `c_k` (k = 1..=degree) of `Σ c_k τ^k ≈ y(τ)`.
fn fit_polynomial(taus: &[f64], ys: &[Vector3<f64>], degree: usize) -> Vec<Vector3<f64>> {
    if degree == 0 {
        return Vec::new();
    }
    let a = nalgebra::DMatrix::from_fn(taus.len(), degree, |i, k| taus[i].powi(k as i32 + 1));
    let ata = a.transpose() * &a;
    let chol = ata.cholesky().expect("distinct sample times");
    let mut out = vec![Vector3::zeros(); degree];
    for axis in 0..3 {
        let y = nalgebra::DVector::from_fn(ys.len(), |i, _| ys[i][axis]);
        let c = chol.solve(&(a.transpose() * y));
        for k in 0..degree {
            out[k][axis] = c[k];
        }
    }
    out
}
