//! Novel-view evaluation: agent box IoU, lane mask IoU, feature-Fréchet
//! distance and PSNR, with detections read off the render itself.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen, Vector2};
use serde::{Deserialize, Serialize};

use crate::cdts::perceptual_features;
use crate::error::{Error, Result};
use crate::geom::{Box2D, Segment2};
use crate::image::Image;
use crate::ntgm::ConditionFrame;
use crate::raster::RenderOutput;

pub const DEFAULT_WEIGHT_THRESHOLD: f64 = 0.3;
pub const DEFAULT_STROKE: f64 = 3.0;
pub const LANE_KEY: f64 = 0.75;
pub const PSNR_CAP: f64 = 99.0;

/// Tight pixel bounds of each agent whose weight reaches `threshold`
/// somewhere. Pixel (x, y) spans [x, x+1) × [y, y+1).
pub fn detect_agent_boxes(render: &RenderOutput, threshold: f64) -> Vec<Box2D> {
    render
        .agent_weights
        .iter()
        .filter_map(|(&id, wmap)| {
            let mut lo = (usize::MAX, usize::MAX);
            let mut hi = (0, 0);
            for y in 0..wmap.height {
                for x in 0..wmap.width {
                    if wmap.at(x, y, 0) >= threshold {
                        lo = (lo.0.min(x), lo.1.min(y));
                        hi = (hi.0.max(x), hi.1.max(y));
                    }
                }
            }
            (lo.0 != usize::MAX).then(|| {
                Box2D::new(
                    Vector2::new(lo.0 as f64, lo.1 as f64),
                    Vector2::new(hi.0 as f64 + 1.0, hi.1 as f64 + 1.0),
                    id,
                )
            })
        })
        .collect()
}

pub fn iou(a: &Box2D, b: &Box2D) -> f64 {
    let lo = a.min.sup(&b.min);
    let hi = a.max.inf(&b.max);
    let inter = (hi.x - lo.x).max(0.0) * (hi.y - lo.y).max(0.0);
    let union = a.area() + b.area() - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

/// Center-distance gate for matching a projected box to a detection.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceGate {
    /// The projected box's diagonal.
    #[default]
    Diagonal,
    Pixels(f64),
}

/// Mean over projected boxes of the IoU with the detection whose center is
/// nearest, zeroed when that center is not closer than the gate. `None` when
/// there are no projected boxes.
pub fn nta_iou_frame(projected: &[Box2D], detected: &[Box2D], gate: DistanceGate) -> Option<f64> {
    if projected.is_empty() {
        return None;
    }
    let total: f64 = projected
        .iter()
        .map(|p| {
            let nearest = detected
                .iter()
                .map(|d| ((d.center() - p.center()).norm(), iou(p, d)))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
            let limit = match gate {
                DistanceGate::Diagonal => p.diagonal(),
                DistanceGate::Pixels(px) => px,
            };
            match nearest {
                Some((dist, v)) if dist < limit => v,
                _ => 0.0,
            }
        })
        .sum();
    Some(total / projected.len() as f64)
}

/// Frame average of [`nta_iou_frame`] over frames that have projected
/// boxes; 1.0 when none do.
pub fn nta_iou(frames: &[(Vec<Box2D>, Vec<Box2D>)], gate: DistanceGate) -> f64 {
    let scores: Vec<f64> = frames
        .iter()
        .filter_map(|(p, d)| nta_iou_frame(p, d, gate))
        .collect();
    if scores.is_empty() {
        1.0
    } else {
        scores.iter().sum::<f64>() / scores.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|v| **v).count()
    }
}

fn point_segment_distance(p: &Vector2<f64>, s: &Segment2) -> f64 {
    let d = s[1] - s[0];
    let len2 = d.norm_squared();
    let u = if len2 > 0.0 {
        ((p - s[0]).dot(&d) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p - (s[0] + d * u)).norm()
}

/// Marks pixels whose center lies within `stroke / 2` of any segment.
pub fn rasterize_lanes(lanes: &[Segment2], stroke: f64, width: usize, height: usize) -> Mask {
    let mut m = Mask::new(width, height);
    let r = stroke / 2.0;
    for s in lanes {
        let lo = s[0].inf(&s[1]).add_scalar(-r).map(|v| v.floor().max(0.0));
        let hi = s[0].sup(&s[1]).add_scalar(r).map(|v| v.ceil());
        if hi.x < 0.0 || hi.y < 0.0 || !lo.x.is_finite() || !hi.x.is_finite() {
            continue;
        }
        let (x1, y1) = ((hi.x as usize).min(width), (hi.y as usize).min(height));
        for y in lo.y as usize..y1 {
            for x in lo.x as usize..x1 {
                let c = Vector2::new(x as f64 + 0.5, y as f64 + 0.5);
                if point_segment_distance(&c, s) <= r {
                    m.data[y * width + x] = true;
                }
            }
        }
    }
    m
}

/// Lane pixels: every RGB channel at least [`LANE_KEY`].
pub fn detect_lane_mask(image: &Image) -> Mask {
    let mut m = Mask::new(image.width, image.height);
    for (i, px) in image.data.chunks_exact(image.channels).enumerate() {
        m.data[i] = px.iter().take(3).all(|v| *v >= LANE_KEY);
    }
    m
}

/// 100 × mean of the lane-class and background-class IoU. A class absent
/// from both masks scores 1.
pub fn ntl_iou(gt: &Mask, det: &Mask) -> Result<f64> {
    if (gt.width, gt.height) != (det.width, det.height) {
        return Err(Error::Shape(format!(
            "lane masks differ: {}x{} vs {}x{}",
            gt.width, gt.height, det.width, det.height
        )));
    }
    let class_iou = |want: bool| {
        let (mut inter, mut union) = (0usize, 0usize);
        for (a, b) in gt.data.iter().zip(&det.data) {
            let (a, b) = (*a == want, *b == want);
            inter += (a && b) as usize;
            union += (a || b) as usize;
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    };
    Ok(50.0 * (class_iou(true) + class_iou(false)))
}

fn mean_cov(features: &[Vec<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let n = features.len();
    let dim = features[0].len();
    let x = DMatrix::from_fn(n, dim, |i, j| features[i][j]);
    let mu = DVector::from_fn(dim, |j, _| x.column(j).mean());
    let centered = DMatrix::from_fn(n, dim, |i, j| x[(i, j)] - mu[j]);
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    (mu, cov)
}

fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let d = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

/// Fréchet distance between Gaussian fits of two feature sets.
pub fn frechet_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Shape(format!(
            "feature-Fréchet needs at least 2 samples per set, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let dim = a[0].len();
    if a.iter().chain(b).any(|f| f.len() != dim) {
        return Err(Error::Shape("feature vectors differ in length".into()));
    }
    let (mu_a, ca) = mean_cov(a);
    let (mu_b, cb) = mean_cov(b);
    // Tr((Ca Cb)^½) = Tr((Ca^½ Cb Ca^½)^½), which is symmetric
    let ra = sym_sqrt(&ca);
    let cross = sym_sqrt(&(&ra * &cb * &ra)).trace();
    let d2 = (mu_a - mu_b).norm_squared() + ca.trace() + cb.trace() - 2.0 * cross;
    Ok(d2.max(0.0).sqrt())
}

/// [`frechet_distance`] over perceptual features of two frame sets.
pub fn feature_frechet(set_a: &[Image], set_b: &[Image]) -> Result<f64> {
    let fa = set_a.iter().map(perceptual_features).collect::<Result<Vec<_>>>()?;
    let fb = set_b.iter().map(perceptual_features).collect::<Result<Vec<_>>>()?;
    frechet_distance(&fa, &fb)
}

/// Peak signal-to-noise ratio for unit dynamic range; [`PSNR_CAP`] when the
/// images are effectively identical.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    a.check_shape(b, "psnr")?;
    let mse = a.data.iter().zip(&b.data).map(|(x, y)| (x - y).powi(2)).sum::<f64>()
        / a.data.len() as f64;
    Ok(if mse < 1e-10 {
        PSNR_CAP
    } else {
        10.0 * (1.0 / mse).log10()
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalOptions {
    pub weight_threshold: f64,
    pub stroke: f64,
    pub gate: DistanceGate,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            weight_threshold: DEFAULT_WEIGHT_THRESHOLD,
            stroke: DEFAULT_STROKE,
            gate: DistanceGate::Diagonal,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameEval {
    pub t: f64,
    /// Absent when no agent projects into the frame.
    pub nta_iou: Option<f64>,
    pub ntl_iou: f64,
    pub psnr: Option<f64>,
    pub projected: usize,
    pub detected: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub nta_iou: f64,
    pub ntl_iou: f64,
    pub ffd: f64,
    pub psnr: Option<f64>,
    pub frames: Vec<FrameEval>,
}

impl EvalReport {
    pub fn frames_csv(&self) -> String {
        let mut s = String::from("t,nta_iou,ntl_iou,psnr,projected,detected\n");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for f in &self.frames {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                f.t,
                opt(f.nta_iou),
                f.ntl_iou,
                opt(f.psnr),
                f.projected,
                f.detected
            );
        }
        s
    }
}

/// Scores renders along a novel trajectory. `reference` is the frame set
/// the feature distribution is compared with; `ground_truth`, when given,
/// holds per-frame targets for PSNR.
pub fn evaluate(
    renders: &[RenderOutput],
    conditions: &[ConditionFrame],
    reference: &[Image],
    ground_truth: Option<&[Image]>,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    if renders.len() != conditions.len() {
        return Err(Error::Shape(format!(
            "{} renders for {} condition frames",
            renders.len(),
            conditions.len()
        )));
    }
    if let Some(gt) = ground_truth {
        if gt.len() != renders.len() {
            return Err(Error::Shape(format!(
                "{} ground-truth frames for {} renders",
                gt.len(),
                renders.len()
            )));
        }
    }
    let mut frames = Vec::with_capacity(renders.len());
    let mut pairs = Vec::with_capacity(renders.len());
    for (i, (r, c)) in renders.iter().zip(conditions).enumerate() {
        let det = detect_agent_boxes(r, opts.weight_threshold);
        let gt_lanes = rasterize_lanes(&c.lanes2d, opts.stroke, r.image.width, r.image.height);
        let lane = ntl_iou(&gt_lanes, &detect_lane_mask(&r.image))?;
        let p = ground_truth.map(|gt| psnr(&r.image, &gt[i])).transpose()?;
        frames.push(FrameEval {
            t: c.t,
            nta_iou: nta_iou_frame(&c.boxes2d, &det, opts.gate),
            ntl_iou: lane,
            psnr: p,
            projected: c.boxes2d.len(),
            detected: det.len(),
        });
        pairs.push((c.boxes2d.clone(), det));
    }
    let n = frames.len().max(1) as f64;
    let images: Vec<Image> = renders.iter().map(|r| r.image.clone()).collect();
    Ok(EvalReport {
        nta_iou: nta_iou(&pairs, opts.gate),
        ntl_iou: frames.iter().map(|f| f.ntl_iou).sum::<f64>() / n,
        ffd: feature_frechet(&images, reference)?,
        psnr: ground_truth.map(|_| frames.iter().filter_map(|f| f.psnr).sum::<f64>() / n),
        frames,
    })
}
