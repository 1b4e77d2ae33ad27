use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{
    batch_stack, epoch_order, loss_ori, total_loss, CousinBatch, LossWeights, NovelFrame,
    OriFrame,
};
use crate::error::{Error, Result};
use crate::gauss4d::{is_temporal_position, GaussianScene, ParamGroup, BASE_PARAMS};
use crate::geom::CameraModel;
use crate::raster::render_traced;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearningRates {
    /// Position rate at the first step; decays log-linearly to `position_final`.
    pub position_init: f64,
    pub position_final: f64,
    pub rotation: f64,
    pub scale: f64,
    pub opacity: f64,
    pub color: f64,
    pub temporal: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            position_init: 1.6e-4,
            position_final: 1.6e-6,
            rotation: 1e-3,
            scale: 1e-3,
            opacity: 1e-3,
            color: 2.5e-3,
            temporal: 1e-3,
        }
    }
}

impl LearningRates {
    fn all(&self) -> [f64; 7] {
        [
            self.position_init,
            self.position_final,
            self.rotation,
            self.scale,
            self.opacity,
            self.color,
            self.temporal,
        ]
    }

    /// Position rate at `step` of `iterations`.
    pub fn position_at(&self, step: usize, iterations: usize) -> f64 {
        let s = if iterations > 1 {
            step as f64 / (iterations - 1) as f64
        } else {
            0.0
        };
        (self.position_init.ln() * (1.0 - s) + self.position_final.ln() * s).exp()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub iterations: usize,
    pub lr: LearningRates,
    pub seed: u64,
    pub cdts_enabled: bool,
    pub weights: LossWeights,
    /// Multiplies the position and temporal-position rates (scene extent, m).
    pub spatial_lr_scale: f64,
    /// Keep all temporal coefficients at their initial values.
    pub freeze_temporal: bool,
    /// Checkpoint callback period in steps; 0 disables it.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            lr: LearningRates::default(),
            seed: 0,
            cdts_enabled: false,
            weights: LossWeights::default(),
            spatial_lr_scale: 1.0,
            freeze_temporal: false,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be > 0".into()));
        }
        if !self.lr.all().iter().all(|r| r.is_finite() && *r > 0.0) {
            return Err(Error::Config(format!("learning rates must be > 0: {:?}", self.lr)));
        }
        if !(self.spatial_lr_scale.is_finite() && self.spatial_lr_scale > 0.0) {
            return Err(Error::Config("spatial_lr_scale must be > 0".into()));
        }
        self.weights.validate()
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Rate for entry `j` of a primitive block at `step`.
    fn rate(&self, j: usize, degree: usize, pos_rate: f64) -> f64 {
        match ParamGroup::of(j) {
            ParamGroup::Position => pos_rate,
            ParamGroup::Rotation => self.lr.rotation,
            ParamGroup::Scale => self.lr.scale,
            ParamGroup::Opacity => self.lr.opacity,
            ParamGroup::Color => self.lr.color,
            ParamGroup::Temporal if is_temporal_position(j, degree) => {
                self.lr.temporal * self.spatial_lr_scale
            }
            ParamGroup::Temporal => self.lr.temporal,
        }
    }
}

/// Adam with per-entry learning rates.
#[derive(Clone, Debug)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    steps: i32,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            steps: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-15,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], rate: impl Fn(usize) -> f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.steps += 1;
        let c1 = 1.0 - self.beta1.powi(self.steps);
        let c2 = 1.0 - self.beta2.powi(self.steps);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= rate(i) * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Supervision for one training run. Poses are in the scene frame.
#[derive(Clone, Debug)]
pub struct TrainData {
    pub camera: CameraModel,
    pub ori: Vec<OriFrame>,
    /// Cousin frames, required when `cdts_enabled`.
    pub novel: Option<Vec<NovelFrame>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: usize,
    pub loss_ori: f64,
    pub loss_novel: f64,
    pub loss_reg: f64,
    pub total: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,loss_ori,loss_novel,loss_reg,total\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.step, r.loss_ori, r.loss_novel, r.loss_reg, r.total
            );
        }
        s
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub scene: GaussianScene,
    pub log: TrainLog,
}

/// Optimizes `scene` against `data`. Baseline steps render one original
/// frame; cousin steps render both views of one pair. Both modes visit
/// frames in the same seeded order. `on_checkpoint` receives the scene every
/// `checkpoint_every` steps (counted from 1).
pub fn train(
    mut scene: GaussianScene,
    data: &TrainData,
    cfg: &TrainConfig,
    mut on_checkpoint: impl FnMut(usize, &GaussianScene) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    data.camera.validate()?;
    if data.ori.is_empty() {
        return Err(Error::Invalid("no training frames".into()));
    }
    let batches: Option<Vec<CousinBatch>> = if cfg.cdts_enabled {
        let novel = data
            .novel
            .as_ref()
            .ok_or_else(|| Error::Config("cdts training needs novel frames".into()))?;
        Some(batch_stack(&data.ori, novel)?)
    } else {
        None
    };
    let mut ori: Vec<&OriFrame> = data.ori.iter().collect();
    ori.sort_by(|a, b| a.t.total_cmp(&b.t));
    let cam = &data.camera;
    let w = &cfg.weights;
    let n = ori.len();
    let block = scene.block_len();
    let degree = scene.degree();
    let mut params = scene.params();
    let mut adam = Adam::new(params.len());
    let mut grads = vec![0.0; params.len()];
    let mut log = TrainLog::default();
    let mut order = Vec::new();

    for step in 0..cfg.iterations {
        if step % n == 0 {
            order = epoch_order(n, cfg.seed, step / n);
        }
        let k = order[step % n];
        grads.iter_mut().for_each(|g| *g = 0.0);
        let frame = ori[k];
        let ori_render = render_traced(&scene, frame.t, &frame.pose, cam)?;
        let row = match batches.as_ref().filter(|_| w.uses_novel()) {
            Some(b) => {
                let batch = &b[k];
                let novel_render = render_traced(&scene, batch.t, &batch.novel.pose, cam)?;
                let l = total_loss(batch, &ori_render.output, &novel_render.output, w)?;
                ori_render.backward_into(
                    &scene,
                    cam,
                    &l.d_ori.d_image,
                    l.d_ori.d_depth.as_ref(),
                    &mut grads,
                )?;
                novel_render.backward_into(
                    &scene,
                    cam,
                    &l.d_novel.d_image,
                    l.d_novel.d_depth.as_ref(),
                    &mut grads,
                )?;
                LogRow {
                    step,
                    loss_ori: l.ori,
                    loss_novel: l.novel,
                    loss_reg: l.reg,
                    total: l.total,
                }
            }
            None => {
                let l = loss_ori(&ori_render.output, &frame.image, &frame.depth, w)?;
                ori_render.backward_into(&scene, cam, &l.d_image, l.d_depth.as_ref(), &mut grads)?;
                LogRow {
                    step,
                    loss_ori: l.value,
                    loss_novel: 0.0,
                    loss_reg: 0.0,
                    total: l.value,
                }
            }
        };
        if !row.total.is_finite() {
            return Err(Error::Divergence { step });
        }
        log.rows.push(row);

        if cfg.freeze_temporal {
            for b in grads.chunks_exact_mut(block) {
                b[BASE_PARAMS..].iter_mut().for_each(|g| *g = 0.0);
            }
        }
        let pos_rate = cfg.lr.position_at(step, cfg.iterations) * cfg.spatial_lr_scale;
        let rates: Vec<f64> = (0..block).map(|j| cfg.rate(j, degree, pos_rate)).collect();
        adam.step(&mut params, &grads, |i| rates[i % block]);
        scene.set_params(&params);
        scene.project_to_valid();
        params = scene.params();

        if cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 {
            on_checkpoint(step + 1, &scene)?;
        }
    }
    Ok(TrainOutcome { scene, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauss4d::{quat, GaussianPrimitive};
    use crate::geom::Pose;
    use crate::image::Image;
    use crate::raster::splat_forward;
    use nalgebra::Vector3;

    #[test]
    fn adam_zero_gradient_is_identity() {
        let mut a = Adam::new(3);
        let mut p = vec![1.0, -2.0, 3.5];
        a.step(&mut p, &[0.0; 3], |_| 0.1);
        assert_eq!(p, vec![1.0, -2.0, 3.5]);
    }

    #[test]
    fn adam_first_step_moves_by_rate() {
        let mut a = Adam::new(2);
        let mut p = vec![0.0, 0.0];
        a.step(&mut p, &[3.0, -0.5], |_| 0.01);
        assert!((p[0] + 0.01).abs() < 1e-12);
        assert!((p[1] - 0.01).abs() < 1e-12);
    }

    #[test]
    fn position_schedule_endpoints() {
        let lr = LearningRates::default();
        assert!((lr.position_at(0, 100) - 1.6e-4).abs() < 1e-18);
        assert!((lr.position_at(99, 100) - 1.6e-6).abs() < 1e-18);
        assert!((lr.position_at(49, 99) - 1.6e-5).abs() < 1e-15);
    }

    #[test]
    fn config_json() {
        let c = TrainConfig::from_json(r#"{"iterations": 5, "cdts_enabled": true}"#).unwrap();
        assert_eq!(c.iterations, 5);
        assert_eq!(c.weights.lambda_reg, 1e-3);
        assert!(TrainConfig::from_json(r#"{"iterations": 0}"#).is_err());
        assert!(TrainConfig::from_json(r#"{"bogus": 1}"#).is_err());
        let back = TrainConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    fn toy() -> (GaussianScene, TrainData) {
        let cam = CameraModel::centered(24, 16, 20.0).unwrap();
        let prim = |y: f64, c: [f64; 3]| {
            GaussianPrimitive::new(
                Vector3::new(6.0, y, 0.0),
                Vector3::repeat(-0.7),
                quat::IDENTITY,
                0.8,
                Vector3::from(c),
                0,
                2,
            )
        };
        let target = GaussianScene::new(
            vec![prim(1.0, [0.9, 0.2, 0.1]), prim(-1.0, [0.1, 0.3, 0.9])],
            0.5,
            (0.0, 1.0),
        )
        .unwrap();
        let frames: Vec<OriFrame> = [0.0, 0.5, 1.0]
            .iter()
            .map(|&t| {
                let r = splat_forward(&target, t, &Pose::identity(), &cam).unwrap();
                OriFrame {
                    t,
                    pose: Pose::identity(),
                    image: r.image,
                    depth: r.depth,
                }
            })
            .collect();
        let mut start = target.clone();
        for p in &mut start.primitives {
            p.color_logit = Vector3::zeros();
            p.position.y *= 0.8;
        }
        (
            start,
            TrainData {
                camera: cam,
                ori: frames,
                novel: None,
            },
        )
    }

    fn train_l1(scene: &GaussianScene, data: &TrainData) -> f64 {
        data.ori
            .iter()
            .map(|f| {
                let r = splat_forward(scene, f.t, &f.pose, &data.camera).unwrap();
                r.image.data.iter().zip(&f.image.data).map(|(a, b)| (a - b).abs()).sum::<f64>()
            })
            .sum()
    }

    #[test]
    fn static_scene_improves_and_replays() {
        let (start, data) = toy();
        let cfg = TrainConfig {
            iterations: 200,
            freeze_temporal: true,
            lr: LearningRates {
                position_init: 1e-2,
                position_final: 1e-3,
                color: 2e-2,
                ..LearningRates::default()
            },
            ..TrainConfig::default()
        };
        let a = train(start.clone(), &data, &cfg, |_, _| Ok(())).unwrap();
        assert!(train_l1(&a.scene, &data) < train_l1(&start, &data));
        assert_eq!(a.log.rows.len(), 200);
        assert!(a.log.to_csv().starts_with("step,loss_ori,loss_novel,loss_reg,total\n0,"));
        let b = train(start, &data, &cfg, |_, _| Ok(())).unwrap();
        assert_eq!(a.scene.params(), b.scene.params());
        assert!(a.scene.primitives.iter().all(|p| p.temporal.is_zero()));
    }

    #[test]
    fn zero_cousin_weights_match_baseline() {
        let (start, mut data) = toy();
        data.novel = Some(
            data.ori
                .iter()
                .map(|f| NovelFrame {
                    t: f.t,
                    pose: Pose::from_yaw(0.0, Vector3::new(0.0, 0.5, 0.0)),
                    image: Image::filled(24, 16, 3, 0.3),
                    depth: None,
                })
                .collect(),
        );
        let base = TrainConfig {
            iterations: 12,
            ..TrainConfig::default()
        };
        let cousin = TrainConfig {
            cdts_enabled: true,
            weights: LossWeights {
                lambda_novel: 0.0,
                lambda_reg: 0.0,
                ..LossWeights::default()
            },
            ..base.clone()
        };
        let a = train(start.clone(), &data, &base, |_, _| Ok(())).unwrap();
        let b = train(start.clone(), &data, &cousin, |_, _| Ok(())).unwrap();
        assert_eq!(a.scene.params(), b.scene.params());
        // with the cousin terms on, the novel targets change the result
        let on = TrainConfig {
            cdts_enabled: true,
            ..base
        };
        let c = train(start, &data, &on, |_, _| Ok(())).unwrap();
        assert_ne!(a.scene.params(), c.scene.params());
        assert!(c.log.rows.iter().all(|r| r.loss_novel > 0.0));
    }

    #[test]
    fn checkpoints_and_divergence() {
        let (start, data) = toy();
        let cfg = TrainConfig {
            iterations: 6,
            checkpoint_every: 2,
            ..TrainConfig::default()
        };
        let mut seen = Vec::new();
        train(start.clone(), &data, &cfg, |s, _| {
            seen.push(s);
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, vec![2, 4, 6]);

        let mut bad = data.clone();
        bad.ori[0].image.data[0] = f64::NAN;
        bad.ori[1].image.data[0] = f64::NAN;
        bad.ori[2].image.data[0] = f64::NAN;
        let err = train(start, &bad, &cfg, |_, _| Ok(())).unwrap_err();
        assert!(matches!(err, Error::Divergence { step: 0 }));
    }
}
