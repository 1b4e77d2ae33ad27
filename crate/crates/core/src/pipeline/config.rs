use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cdts::TrainConfig;
use crate::error::{Error, Result};
use crate::geom::CameraModel;
use crate::metrics::EvalOptions;
use crate::ntgm::{DEFAULT_D_MIN, DEFAULT_MAX_OFFSET};
use crate::seed::derive_seed;
use crate::worldgen::SceneConfig;

/// A novel-trajectory edit of the original drive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Maneuver {
    LaneChange,
    /// Forward progress multiplied by the factor.
    Accel(f64),
    /// Forward progress divided by the factor.
    Decel(f64),
}

impl Maneuver {
    /// Forward-progress multiplier for speed changes.
    pub fn speed_factor(&self) -> Option<f64> {
        match *self {
            Maneuver::LaneChange => None,
            Maneuver::Accel(f) => Some(f),
            Maneuver::Decel(f) => Some(1.0 / f),
        }
    }

    /// File-system friendly name.
    pub fn tag(&self) -> String {
        match self {
            Maneuver::LaneChange => "lane_change".into(),
            Maneuver::Accel(f) => format!("accel_{f}"),
            Maneuver::Decel(f) => format!("decel_{f}"),
        }
    }
}

impl fmt::Display for Maneuver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Maneuver::LaneChange => write!(f, "lane_change"),
            Maneuver::Accel(x) => write!(f, "accel:{x}"),
            Maneuver::Decel(x) => write!(f, "decel:{x}"),
        }
    }
}

impl FromStr for Maneuver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let factor = |v: &str| -> Result<f64> {
            let f: f64 = v
                .parse()
                .map_err(|_| Error::Config(format!("bad maneuver factor in {s:?}")))?;
            if f > 0.0 && f.is_finite() {
                Ok(f)
            } else {
                Err(Error::Config(format!("maneuver factor must be > 0 in {s:?}")))
            }
        };
        match s.split_once(':') {
            None if s == "lane_change" => Ok(Maneuver::LaneChange),
            Some(("accel", v)) => Ok(Maneuver::Accel(factor(v)?)),
            Some(("decel", v)) => Ok(Maneuver::Decel(factor(v)?)),
            _ => Err(Error::Config(format!(
                "unknown maneuver {s:?}; expected lane_change, accel:F or decel:F"
            ))),
        }
    }
}

impl TryFrom<String> for Maneuver {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Maneuver> for String {
    fn from(m: Maneuver) -> String {
        m.to_string()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraConfig {
    pub width: usize,
    pub height: usize,
    pub focal: f64,
    /// Camera height above the ego origin (m).
    pub mount_height: f64,
    pub near_clip: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            width: 96,
            height: 64,
            focal: 60.0,
            mount_height: 1.6,
            near_clip: 1.0,
        }
    }
}

impl CameraConfig {
    pub fn camera(&self) -> Result<CameraModel> {
        let cam = CameraModel::centered(self.width, self.height, self.focal)
            .map_err(|e| Error::Config(e.to_string()))?
            .with_mount_height(self.mount_height)
            .with_near_clip(self.near_clip);
        cam.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(cam)
    }
}

/// Degradation of the oracle frames that stand in for generated novel views.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DegradeConfig {
    pub blur_sigma: f64,
    pub noise_sigma: f64,
}

impl Default for DegradeConfig {
    fn default() -> Self {
        Self {
            blur_sigma: 0.7,
            noise_sigma: 0.02,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitConfig {
    pub primitives: usize,
    /// Position jitter (m, per axis).
    pub position_noise: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            primitives: 2000,
            position_noise: 0.05,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LaneChangeConfig {
    pub d_min: f64,
    /// Initial per-frame lateral offset range (m).
    pub max_offset: f64,
}

impl Default for LaneChangeConfig {
    fn default() -> Self {
        Self {
            d_min: DEFAULT_D_MIN,
            max_offset: DEFAULT_MAX_OFFSET,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainVariants {
    pub baseline: TrainConfig,
    pub cdts: TrainConfig,
}

impl Default for TrainVariants {
    fn default() -> Self {
        let base = TrainConfig {
            iterations: 3000,
            ..TrainConfig::default()
        };
        Self {
            cdts: TrainConfig {
                cdts_enabled: true,
                ..base.clone()
            },
            baseline: base,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub scene: SceneConfig,
    pub camera: CameraConfig,
    pub maneuvers: Vec<Maneuver>,
    pub degrade: DegradeConfig,
    pub lidar_dropout: f64,
    pub lane_change: LaneChangeConfig,
    pub init: InitConfig,
    pub train: TrainVariants,
    pub eval: EvalOptions,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scene: SceneConfig::default(),
            camera: CameraConfig::default(),
            maneuvers: vec![
                Maneuver::LaneChange,
                Maneuver::Accel(1.5),
                Maneuver::Decel(2.0),
            ],
            degrade: DegradeConfig::default(),
            lidar_dropout: 0.5,
            lane_change: LaneChangeConfig::default(),
            init: InitConfig::default(),
            train: TrainVariants::default(),
            eval: EvalOptions::default(),
            output_dir: PathBuf::from("out"),
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.camera.camera()?;
        self.train.baseline.validate()?;
        self.train.cdts.validate()?;
        let d = &self.degrade;
        if !(d.blur_sigma >= 0.0 && d.noise_sigma >= 0.0) {
            return Err(Error::Config(format!("degradation sigmas must be >= 0: {d:?}")));
        }
        if !(0.0..1.0).contains(&self.lidar_dropout) {
            return Err(Error::Config("lidar_dropout must lie in [0, 1)".into()));
        }
        let lc = &self.lane_change;
        if !(lc.d_min >= 0.0 && lc.max_offset > 0.0) {
            return Err(Error::Config(format!("bad lane change settings: {lc:?}")));
        }
        if self.init.primitives == 0 || !(self.init.position_noise >= 0.0) {
            return Err(Error::Config(format!("bad init settings: {:?}", self.init)));
        }
        let e = &self.eval;
        if !(e.stroke > 0.0 && (0.0..=1.0).contains(&e.weight_threshold)) {
            return Err(Error::Config(format!("bad eval settings: {e:?}")));
        }
        Ok(())
    }

    /// Replaces every subsystem seed with one derived from `self.seed`, and
    /// forces each training variant's mode flag.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        c.scene.seed = derive_seed(c.seed, "worldgen");
        let train_seed = derive_seed(c.seed, "train");
        c.train.baseline.seed = train_seed;
        c.train.baseline.cdts_enabled = false;
        c.train.cdts.seed = train_seed;
        c.train.cdts.cdts_enabled = true;
        c
    }

    pub fn lidar_seed(&self) -> u64 {
        derive_seed(self.seed, "lidar")
    }

    pub fn init_seed(&self) -> u64 {
        derive_seed(self.seed, "init")
    }

    pub fn proposal_seed(&self, m: &Maneuver) -> u64 {
        derive_seed(self.seed, &format!("ntgm/{}", m.tag()))
    }

    pub fn degrade_seed(&self, m: &Maneuver) -> u64 {
        derive_seed(self.seed, &format!("degrade/{}", m.tag()))
    }
}
