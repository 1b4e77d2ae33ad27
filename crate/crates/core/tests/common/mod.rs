//! Shared fixtures and independent oracles for the integration suites.
#![allow(dead_code)]

pub mod oracle;

use std::collections::BTreeMap;

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use splat4d::cdts::{total_loss, CousinBatch, LossWeights, NovelFrame, OriFrame};
use splat4d::gauss4d::{GaussianPrimitive, GaussianScene};
use splat4d::geom::{CameraModel, FrameId, Pose, Trajectory, TrajectoryFrame};
use splat4d::ntgm::SafetyContext;
use splat4d::image::Image;
use splat4d::raster::{
    project_gaussian, render_traced, splat_forward, RenderOutput, ALPHA_MAX, CULL_SIGMA,
    DEPTH_ALPHA_EPS, T_MIN,
};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn camera32() -> CameraModel {
    CameraModel::centered(32, 32, 30.0).unwrap()
}

/// Up to `max_n` random primitives a few meters ahead of an ego at the
/// origin, with random temporal coefficients. When `off_axis` is set, every
/// other center sits outside the field of view, where the footprint
/// Jacobian is clamped.
pub fn random_scene(r: &mut ChaCha8Rng, max_n: usize, off_axis: bool) -> GaussianScene {
    let n = r.random_range(1..=max_n);
    let prims = (0..n)
        .map(|i| {
            let depth = r.random_range(3.0..10.0);
            let wide = off_axis && i % 2 == 0;
            let lateral = if wide {
                // just past the footprint clamp of `camera32`, large enough to reach the image
                let side = if r.random::<bool>() { 1.0 } else { -1.0 };
                side * r.random_range(0.75..1.1)
            } else {
                r.random_range(-0.35..0.35)
            };
            let pos = Vector3::new(depth, lateral * depth, r.random_range(-0.3..0.3) * depth);
            let log_scale = if wide {
                Vector3::from_fn(|_, _| r.random_range(-0.3..0.4))
            } else {
                Vector3::from_fn(|_, _| r.random_range(-1.6..-0.2))
            };
            let q = [
                r.random_range(-1.0..1.0),
                r.random_range(-1.0..1.0),
                r.random_range(-1.0..1.0),
                r.random_range(-1.0..1.0),
            ];
            let color = Vector3::from_fn(|_, _| r.random_range(0.05..0.95));
            let mut g = GaussianPrimitive::new(
                pos,
                log_scale,
                q,
                r.random_range(0.1..0.95),
                color,
                r.random_range(0..3),
                2,
            );
            let mut v = |s: f64| Vector3::from_fn(|_, _| r.random_range(-s..s));
            g.temporal.position = vec![v(0.5), v(0.2)];
            g.temporal.scale = vec![v(0.2), v(0.1)];
            g.temporal.rotation = vec![v(0.3), v(0.1)];
            g.temporal.color = vec![v(0.3), v(0.1)];
            g.temporal.opacity = vec![r.random_range(-0.3..0.3), r.random_range(-0.1..0.1)];
            g
        })
        .collect();
    GaussianScene::new(prims, 0.5, (0.0, 1.0)).unwrap()
}

/// Per-pixel sequential compositing over every projected splat, sorted by
/// (depth, index), with no tiling.
pub fn reference_render(scene: &GaussianScene, t: f64, pose: &Pose, cam: &CameraModel) -> RenderOutput {
    let deformed = scene.deformed(t).unwrap();
    let mut splats: Vec<_> = deformed
        .iter()
        .enumerate()
        .filter_map(|(i, g)| project_gaussian(g, i, pose, cam))
        .collect();
    splats.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.source.cmp(&b.source)));
    let (w, h) = (cam.width, cam.height);
    let mut image = Image::new(w, h, 3);
    let mut depth = Image::new(w, h, 1);
    let mut alpha = Image::new(w, h, 1);
    let mut agents: BTreeMap<u32, Image> = BTreeMap::new();
    for y in 0..h {
        for x in 0..w {
            let px = Vector2::new(x as f64 + 0.5, y as f64 + 0.5);
            let mut trans = 1.0;
            let (mut acc, mut zsum) = (0.0, 0.0);
            for s in &splats {
                let d = px - s.mean;
                let m = (s.conic * d).dot(&d);
                if m > CULL_SIGMA * CULL_SIGMA {
                    continue;
                }
                let a = (s.opacity * (-0.5 * m).exp()).min(ALPHA_MAX);
                let wgt = trans * a;
                for c in 0..3 {
                    *image.at_mut(x, y, c) += wgt * s.color[c];
                }
                acc += wgt;
                zsum += wgt * s.depth;
                if s.agent_id != 0 {
                    *agents
                        .entry(s.agent_id)
                        .or_insert_with(|| Image::new(w, h, 1))
                        .at_mut(x, y, 0) += wgt;
                }
                trans *= 1.0 - a;
                if trans < T_MIN {
                    break;
                }
            }
            *alpha.at_mut(x, y, 0) = acc;
            *depth.at_mut(x, y, 0) = if acc >= DEPTH_ALPHA_EPS { zsum / acc } else { 0.0 };
        }
    }
    RenderOutput {
        image,
        depth,
        alpha,
        agent_weights: agents,
    }
}

pub fn max_abs_diff(a: &Image, b: &Image) -> f64 {
    assert_eq!((a.width, a.height, a.channels), (b.width, b.height, b.channels));
    a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Largest per-channel difference between two renders, over image, depth,
/// alpha and every agent weight map (a map missing on one side counts as
/// all zeros).
pub fn render_diff(a: &RenderOutput, b: &RenderOutput) -> f64 {
    let mut d = max_abs_diff(&a.image, &b.image)
        .max(max_abs_diff(&a.depth, &b.depth))
        .max(max_abs_diff(&a.alpha, &b.alpha));
    let zero = Image::new(a.alpha.width, a.alpha.height, 1);
    for id in a.agent_weights.keys().chain(b.agent_weights.keys()) {
        let x = a.agent_weights.get(id).unwrap_or(&zero);
        let y = b.agent_weights.get(id).unwrap_or(&zero);
        d = d.max(max_abs_diff(x, y));
    }
    d
}

pub fn random_image(r: &mut ChaCha8Rng, w: usize, h: usize) -> Image {
    Image::from_data(w, h, 3, (0..w * h * 3).map(|_| r.random::<f64>()).collect())
}

/// A cousin batch at a random time: targets are renders of a perturbed copy
/// of `scene` plus noise; sparse depth keeps about half of the pixels.
pub fn random_batch(r: &mut ChaCha8Rng, scene: &GaussianScene, cam: &CameraModel) -> CousinBatch {
    let t = r.random_range(0.0..1.0);
    let ori_pose = Pose::from_yaw(r.random_range(-0.05..0.05), Vector3::new(0.0, 0.0, 0.0));
    let novel_pose = Pose::from_yaw(
        r.random_range(-0.1..0.1),
        Vector3::new(r.random_range(-0.5..0.5), r.random_range(-1.0..1.0), 0.0),
    );
    let mut other = scene.clone();
    for p in &mut other.primitives {
        p.position += Vector3::from_fn(|_, _| r.random_range(-0.2..0.2));
        p.color_logit += Vector3::from_fn(|_, _| r.random_range(-0.5..0.5));
    }
    let mut target = |pose: &Pose| {
        let mut img = splat_forward(&other, t, pose, cam).unwrap().image;
        img.data.iter_mut().for_each(|v| *v = (*v + r.random_range(-0.05..0.05)).clamp(0.0, 1.0));
        img
    };
    let ori_img = target(&ori_pose);
    let novel_img = target(&novel_pose);
    let mut depth = splat_forward(&other, t, &ori_pose, cam).unwrap().depth;
    for z in depth.data.iter_mut() {
        if r.random::<f64>() < 0.5 {
            *z = 0.0;
        } else if *z > 0.0 {
            *z += r.random_range(-0.3..0.3);
        }
    }
    CousinBatch {
        t,
        ori: OriFrame {
            t,
            pose: ori_pose,
            image: ori_img,
            depth,
        },
        novel: NovelFrame {
            t,
            pose: novel_pose,
            image: novel_img,
            depth: None,
        },
    }
}

/// Total loss, its gradient over scene parameters, and the render
/// signatures of both views.
pub fn total_with_grad(
    scene: &GaussianScene,
    batch: &CousinBatch,
    cam: &CameraModel,
    w: &LossWeights,
) -> (f64, Vec<f64>, (u64, u64)) {
    let ro = render_traced(scene, batch.t, &batch.ori.pose, cam).unwrap();
    let rn = render_traced(scene, batch.t, &batch.novel.pose, cam).unwrap();
    let l = total_loss(batch, &ro.output, &rn.output, w).unwrap();
    let mut g = vec![0.0; scene.len() * scene.block_len()];
    ro.backward_into(scene, cam, &l.d_ori.d_image, l.d_ori.d_depth.as_ref(), &mut g)
        .unwrap();
    rn.backward_into(scene, cam, &l.d_novel.d_image, l.d_novel.d_depth.as_ref(), &mut g)
        .unwrap();
    (l.total, g, (ro.signature, rn.signature))
}

pub fn total_value(
    scene: &GaussianScene,
    batch: &CousinBatch,
    cam: &CameraModel,
    w: &LossWeights,
) -> (f64, (u64, u64)) {
    let ro = render_traced(scene, batch.t, &batch.ori.pose, cam).unwrap();
    let rn = render_traced(scene, batch.t, &batch.novel.pose, cam).unwrap();
    let l = total_loss(batch, &ro.output, &rn.output, w).unwrap();
    (l.total, (ro.signature, rn.signature))
}

/// Central difference of the total loss along parameter `k`, shrinking the
/// step until both perturbed renders keep the base signature and two step
/// sizes agree.
pub fn fd_entry(
    scene: &GaussianScene,
    batch: &CousinBatch,
    cam: &CameraModel,
    w: &LossWeights,
    base_sig: (u64, u64),
    k: usize,
) -> Option<f64> {
    let params = scene.params();
    let eval = |h: f64| -> Option<f64> {
        let mut s = scene.clone();
        let mut p = params.clone();
        p[k] += h;
        s.set_params(&p);
        let (fp, sp) = total_value(&s, batch, cam, w);
        p[k] = params[k] - h;
        s.set_params(&p);
        let (fm, sm) = total_value(&s, batch, cam, w);
        (sp == base_sig && sm == base_sig).then(|| (fp - fm) / (2.0 * h))
    };
    let mut h = 1e-5 * params[k].abs().max(1.0);
    for _ in 0..4 {
        if let (Some(a), Some(b)) = (eval(h), eval(0.5 * h)) {
            if (a - b).abs() <= 1e-7 + 1e-4 * a.abs().max(b.abs()) {
                return Some(b);
            }
        }
        h *= 0.1;
    }
    None
}

/// `|a - n| <= atol + rtol * |n|`.
pub fn close(analytic: f64, numeric: f64, rtol: f64, atol: f64) -> bool {
    (analytic - numeric).abs() <= atol + rtol * numeric.abs()
}

/// Projected splats whose view-ray slope exceeds the footprint clamp.
pub fn clamped_visible(scene: &GaussianScene, t: f64, pose: &Pose, cam: &CameraModel) -> usize {
    let lim_x = splat4d::raster::FRUSTUM_SLACK * cam.cx.max(cam.width as f64 - cam.cx) / cam.fx;
    let lim_y = splat4d::raster::FRUSTUM_SLACK * cam.cy.max(cam.height as f64 - cam.cy) / cam.fy;
    scene
        .deformed(t)
        .unwrap()
        .iter()
        .enumerate()
        .filter_map(|(i, g)| project_gaussian(g, i, pose, cam))
        .filter(|s| {
            ((s.mean.x - cam.cx) / cam.fx).abs() > lim_x || ((s.mean.y - cam.cy) / cam.fy).abs() > lim_y
        })
        .count()
}

/// A configuration small enough to run the whole pipeline in seconds.
pub fn tiny_config() -> splat4d::pipeline::ExperimentConfig {
    use splat4d::pipeline::{ExperimentConfig, Maneuver};
    let mut cfg = ExperimentConfig::default();
    cfg.scene.frames = 6;
    cfg.camera.width = 32;
    cfg.camera.height = 24;
    cfg.camera.focal = 20.0;
    cfg.init.primitives = 150;
    cfg.maneuvers = vec![Maneuver::LaneChange, Maneuver::Accel(1.5)];
    for t in [&mut cfg.train.baseline, &mut cfg.train.cdts] {
        t.iterations = 4;
        t.checkpoint_every = 2;
    }
    cfg
}

/// Every file under `root`, keyed by its relative path.
pub fn tree_bytes(root: &std::path::Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(dir: &std::path::Path, root: &std::path::Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(&path, root, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

/// Straight drive along +x from the origin, `n` frames at 10 Hz.
pub fn straight(n: usize, speed: f64) -> Trajectory {
    let frames = (0..n)
        .map(|i| TrajectoryFrame {
            t: i as f64 * 0.1,
            pose: Pose::from_yaw(0.0, Vector3::new(speed * 0.1 * i as f64, 0.0, 0.0)),
        })
        .collect();
    Trajectory::new(FrameId::EgoStart, frames).unwrap()
}

/// Road polygon around the drive plus agents that keep clear of the
/// original path by more than `d_min`.
pub fn random_context(r: &mut ChaCha8Rng, n: usize, speed: f64) -> SafetyContext {
    let right = -r.random_range(1.0..4.0);
    let left = r.random_range(0.5..6.0);
    let end = speed * 0.1 * n as f64 + 5.0;
    let area = vec![
        Vector2::new(-5.0, right),
        Vector2::new(end, right),
        Vector2::new(end, left),
        Vector2::new(-5.0, left),
    ];
    let d_min = r.random_range(0.5..3.0);
    let agents = (0..n)
        .map(|i| {
            let x = speed * 0.1 * i as f64;
            (0..r.random_range(0..3))
                .map(|k| {
                    let side = if r.random::<bool>() { 1.0 } else { -1.0 };
                    let y = side * (d_min + r.random_range(0.1..4.0));
                    (k as u32 + 1, Vector2::new(x + r.random_range(-8.0..8.0), y))
                })
                .collect()
        })
        .collect();
    SafetyContext::new(area, agents, d_min).unwrap()
}
