//! Training losses, cousin-pair batching and the optimization loop.

mod features;
mod ssim;
mod train;

pub use features::{perceptual_features, perceptual_features_vjp, FEATURE_DIM, MIN_SIDE};
pub use ssim::{ssim, ssim_with_grad};
pub use train::{
    train, Adam, LearningRates, LogRow, TrainConfig, TrainData, TrainLog, TrainOutcome,
};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Pose;
use crate::image::Image;
use crate::raster::RenderOutput;
use crate::seed::derive_seed;

/// Timestamps closer than this are the same frame.
pub const TIME_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    /// Image L1.
    pub lambda1: f64,
    /// Sparse depth L1 on original views.
    pub lambda2: f64,
    /// 1 - SSIM.
    pub lambda3: f64,
    pub lambda_novel: f64,
    pub lambda_reg: f64,
    /// Depth L1 against reprojected depth on novel views. Only used for the
    /// depth ablation; 0 disables it.
    pub novel_depth: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 0.8,
            lambda2: 0.1,
            lambda3: 0.2,
            lambda_novel: 1.0,
            lambda_reg: 1e-3,
            novel_depth: 0.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.lambda1,
            self.lambda2,
            self.lambda3,
            self.lambda_novel,
            self.lambda_reg,
            self.novel_depth,
        ];
        if all.iter().all(|v| v.is_finite() && *v >= 0.0) {
            Ok(())
        } else {
            Err(Error::Config(format!("loss weights must be finite and >= 0: {self:?}")))
        }
    }

    /// Whether a cousin step needs the novel render at all.
    pub fn uses_novel(&self) -> bool {
        self.lambda_novel > 0.0 || self.lambda_reg > 0.0 || self.novel_depth > 0.0
    }
}

/// A loss value with its gradient with respect to the rendered image and,
/// when the loss reads it, the rendered depth.
#[derive(Clone, Debug)]
pub struct ImageLoss {
    pub value: f64,
    pub d_image: Image,
    pub d_depth: Option<Image>,
}

fn l1_mean(pred: &Image, target: &Image, weight: f64, grad: &mut Image) -> f64 {
    let n = pred.data.len() as f64;
    let mut sum = 0.0;
    for ((p, t), g) in pred.data.iter().zip(&target.data).zip(grad.data.iter_mut()) {
        let d = p - t;
        sum += d.abs();
        *g += weight * sign(d) / n;
    }
    weight * sum / n
}

/// Mean L1 over pixels where the target is positive; 0 when none are.
fn sparse_l1(pred: &Image, target: &Image, weight: f64, grad: &mut Image) -> f64 {
    let count = target.data.iter().filter(|z| **z > 0.0).count();
    if count == 0 {
        return 0.0;
    }
    let n = count as f64;
    let mut sum = 0.0;
    for ((p, t), g) in pred.data.iter().zip(&target.data).zip(grad.data.iter_mut()) {
        if *t > 0.0 {
            let d = p - t;
            sum += d.abs();
            *g += weight * sign(d) / n;
        }
    }
    weight * sum / n
}

fn sign(d: f64) -> f64 {
    if d > 0.0 {
        1.0
    } else if d < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn photometric(render: &Image, target: &Image, w: &LossWeights) -> Result<(f64, Image)> {
    render.check_shape(target, "image target")?;
    let mut grad = Image::new(render.width, render.height, render.channels);
    let mut value = l1_mean(render, target, w.lambda1, &mut grad);
    if w.lambda3 > 0.0 {
        let (s, ds) = ssim_with_grad(render, target)?;
        value += w.lambda3 * (1.0 - s);
        for (g, d) in grad.data.iter_mut().zip(&ds.data) {
            *g -= w.lambda3 * d;
        }
    }
    Ok((value, grad))
}

/// Original-view loss: image L1, sparse depth L1 and 1 - SSIM.
pub fn loss_ori(
    render: &RenderOutput,
    target: &Image,
    depth: &Image,
    w: &LossWeights,
) -> Result<ImageLoss> {
    render.depth.check_shape(depth, "depth target")?;
    let (mut value, d_image) = photometric(&render.image, target, w)?;
    let mut d_depth = Image::new(depth.width, depth.height, 1);
    value += sparse_l1(&render.depth, depth, w.lambda2, &mut d_depth);
    Ok(ImageLoss {
        value,
        d_image,
        d_depth: Some(d_depth),
    })
}

/// Novel-view loss: image L1 and 1 - SSIM. Depth is never read.
pub fn loss_novel(render: &RenderOutput, target: &Image, w: &LossWeights) -> Result<ImageLoss> {
    let (value, d_image) = photometric(&render.image, target, w)?;
    Ok(ImageLoss {
        value,
        d_image,
        d_depth: None,
    })
}

/// L1 distance between the perceptual features of two renders, with the
/// gradient for each.
pub fn loss_reg(a: &Image, b: &Image) -> Result<(f64, Image, Image)> {
    let fa = perceptual_features(a)?;
    let fb = perceptual_features(b)?;
    let d: Vec<f64> = fa.iter().zip(&fb).map(|(x, y)| sign(x - y)).collect();
    let value = fa.iter().zip(&fb).map(|(x, y)| (x - y).abs()).sum();
    let (_, ga) = perceptual_features_vjp(a, &d)?;
    let neg: Vec<f64> = d.iter().map(|v| -v).collect();
    let (_, gb) = perceptual_features_vjp(b, &neg)?;
    Ok((value, ga, gb))
}

#[derive(Clone, Debug, PartialEq)]
pub struct OriFrame {
    pub t: f64,
    pub pose: Pose,
    pub image: Image,
    /// Sparse depth; 0 marks pixels without a return.
    pub depth: Image,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NovelFrame {
    pub t: f64,
    pub pose: Pose,
    pub image: Image,
    /// Depth reprojected from the original views, for the depth ablation.
    pub depth: Option<Image>,
}

/// Temporally aligned (original, novel) training pair.
#[derive(Clone, Debug, PartialEq)]
pub struct CousinBatch {
    pub t: f64,
    pub ori: OriFrame,
    pub novel: NovelFrame,
}

/// Pairs the two streams by timestamp, ascending in time.
pub fn batch_stack(ori: &[OriFrame], novel: &[NovelFrame]) -> Result<Vec<CousinBatch>> {
    let mut ori: Vec<&OriFrame> = ori.iter().collect();
    let mut novel: Vec<&NovelFrame> = novel.iter().collect();
    ori.sort_by(|a, b| a.t.total_cmp(&b.t));
    novel.sort_by(|a, b| a.t.total_cmp(&b.t));
    if ori.len() != novel.len() {
        return Err(Error::TimestampMismatch(format!(
            "{} original frames vs {} novel frames",
            ori.len(),
            novel.len()
        )));
    }
    ori.iter()
        .zip(&novel)
        .map(|(o, n)| {
            if (o.t - n.t).abs() > TIME_EPS {
                return Err(Error::TimestampMismatch(format!(
                    "original t = {} has no novel counterpart (next novel t = {})",
                    o.t, n.t
                )));
            }
            Ok(CousinBatch {
                t: o.t,
                ori: (*o).clone(),
                novel: (*n).clone(),
            })
        })
        .collect()
}

/// Visiting order of `n` time-sorted batches in `epoch`.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("epoch/{epoch}")));
    order.shuffle(&mut rng);
    order
}

#[derive(Clone, Debug)]
pub struct TotalLoss {
    pub ori: f64,
    pub novel: f64,
    pub reg: f64,
    pub total: f64,
    pub d_ori: ImageLoss,
    pub d_novel: ImageLoss,
}

/// ori + λ_novel·novel + λ_reg·reg, plus the optional novel-view depth term
/// (counted inside `novel`).
pub fn total_loss(
    batch: &CousinBatch,
    ori_render: &RenderOutput,
    novel_render: &RenderOutput,
    w: &LossWeights,
) -> Result<TotalLoss> {
    let mut ori = loss_ori(ori_render, &batch.ori.image, &batch.ori.depth, w)?;
    let mut novel = loss_novel(novel_render, &batch.novel.image, w)?;
    let mut novel_value = novel.value;
    if w.novel_depth > 0.0 {
        if let Some(d) = &batch.novel.depth {
            novel_render.depth.check_shape(d, "novel depth target")?;
            let mut g = Image::new(d.width, d.height, 1);
            novel_value += sparse_l1(&novel_render.depth, d, w.novel_depth, &mut g);
            novel.d_depth = Some(g);
        }
    }
    let (reg, ga, gb) = if w.lambda_reg > 0.0 {
        loss_reg(&ori_render.image, &novel_render.image)?
    } else {
        let z = Image::new(ori_render.image.width, ori_render.image.height, 3);
        (0.0, z.clone(), z)
    };
    for (g, r) in ori.d_image.data.iter_mut().zip(&ga.data) {
        *g += w.lambda_reg * r;
    }
    for (g, r) in novel.d_image.data.iter_mut().zip(&gb.data) {
        *g = w.lambda_novel * *g + w.lambda_reg * r;
    }
    if let Some(d) = novel.d_depth.as_mut() {
        d.data.iter_mut().for_each(|g| *g *= w.lambda_novel);
    }
    Ok(TotalLoss {
        ori: ori.value,
        novel: novel_value,
        reg,
        total: ori.value + w.lambda_novel * novel_value + w.lambda_reg * reg,
        d_ori: ori,
        d_novel: novel,
    })
}
