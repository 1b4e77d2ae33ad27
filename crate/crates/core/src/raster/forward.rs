use std::collections::BTreeMap;

use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;

use super::project::{project_with_view, Splat2D};
use super::{RenderOutput, ALPHA_MAX, CULL_SIGMA, DEPTH_ALPHA_EPS, TILE, T_MIN};
use crate::error::Result;
use crate::gauss4d::{Deformed, GaussianScene};
use crate::geom::{CameraModel, Pose};
use crate::image::Image;

/// Projected splats binned into depth-ordered tile lists.
pub(crate) struct Prepared {
    pub deformed: Vec<Deformed>,
    /// Sorted by (depth, source index).
    pub splats: Vec<Splat2D>,
    pub tiles: Vec<Vec<u32>>,
    pub tiles_x: usize,
    pub view: Pose,
}

pub(crate) fn prepare(
    scene: &GaussianScene,
    t: f64,
    ego_pose: &Pose,
    cam: &CameraModel,
) -> Result<Prepared> {
    let deformed = scene.deformed(t)?;
    let view = cam.view(ego_pose);
    let mut splats: Vec<Splat2D> = deformed
        .iter()
        .enumerate()
        .filter_map(|(i, g)| project_with_view(g, i, &view, cam))
        .collect();
    splats.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.source.cmp(&b.source)));

    let tiles_x = cam.width.div_ceil(TILE);
    let tiles_y = cam.height.div_ceil(TILE);
    let mut tiles = vec![Vec::new(); tiles_x * tiles_y];
    for (k, s) in splats.iter().enumerate() {
        let r = s.cull_radius();
        // pixel centers sit at integer + 0.5
        let x0 = (s.mean.x - r.x - 0.5).ceil().max(0.0);
        let x1 = (s.mean.x + r.x - 0.5).floor().min(cam.width as f64 - 1.0);
        let y0 = (s.mean.y - r.y - 0.5).ceil().max(0.0);
        let y1 = (s.mean.y + r.y - 0.5).floor().min(cam.height as f64 - 1.0);
        if x1 < x0 || y1 < y0 {
            continue;
        }
        let (tx0, tx1) = (x0 as usize / TILE, x1 as usize / TILE);
        let (ty0, ty1) = (y0 as usize / TILE, y1 as usize / TILE);
        for ty in ty0..=ty1 {
            for tx in tx0..=tx1 {
                tiles[ty * tiles_x + tx].push(k as u32);
            }
        }
    }
    Ok(Prepared {
        deformed,
        splats,
        tiles,
        tiles_x,
        view,
    })
}

/// One splat's contribution at one pixel.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Contribution {
    pub splat: u32,
    pub alpha: f64,
    /// exp(-½ dᵀ Q d)
    pub gauss: f64,
    pub clamped: bool,
    pub offset: Vector2<f64>,
    /// Transmittance before this contribution.
    pub transmittance: f64,
}

/// Front-to-back compositing of one pixel; fills `out` with the
/// contributions that were blended, in order.
pub(crate) fn blend_pixel(
    splats: &[Splat2D],
    list: &[u32],
    center: Vector2<f64>,
    out: &mut Vec<Contribution>,
) {
    out.clear();
    let cull = CULL_SIGMA * CULL_SIGMA;
    let mut t = 1.0;
    for &k in list {
        let s = &splats[k as usize];
        let d = center - s.mean;
        let m = (s.conic * d).dot(&d);
        if m > cull {
            continue;
        }
        let gauss = (-0.5 * m).exp();
        let raw = s.opacity * gauss;
        let (alpha, clamped) = if raw > ALPHA_MAX {
            (ALPHA_MAX, true)
        } else {
            (raw, false)
        };
        out.push(Contribution {
            splat: k,
            alpha,
            gauss,
            clamped,
            offset: d,
            transmittance: t,
        });
        t *= 1.0 - alpha;
        if t < T_MIN {
            break;
        }
    }
}

pub(crate) fn tile_pixels(
    tile: usize,
    tiles_x: usize,
    cam: &CameraModel,
) -> impl Iterator<Item = (usize, usize)> {
    let (tx, ty) = (tile % tiles_x, tile / tiles_x);
    let x0 = tx * TILE;
    let y0 = ty * TILE;
    let x1 = (x0 + TILE).min(cam.width);
    let y1 = (y0 + TILE).min(cam.height);
    (y0..y1).flat_map(move |y| (x0..x1).map(move |x| (x, y)))
}

struct PixelOut {
    x: usize,
    y: usize,
    color: Vector3<f64>,
    alpha: f64,
    depth: f64,
    agents: Vec<(u32, f64)>,
}

fn mix(h: u64, v: u64) -> u64 {
    let mut z = h ^ v.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) fn render_prepared(prep: &Prepared, cam: &CameraModel) -> (RenderOutput, u64) {
    let tiles: Vec<(Vec<PixelOut>, u64)> = (0..prep.tiles.len())
        .into_par_iter()
        .map(|tile| {
            let list = &prep.tiles[tile];
            let mut buf = Vec::new();
            let mut sig = tile as u64;
            let pixels = tile_pixels(tile, prep.tiles_x, cam)
                .map(|(x, y)| {
                    let center = Vector2::new(x as f64 + 0.5, y as f64 + 0.5);
                    blend_pixel(&prep.splats, list, center, &mut buf);
                    let mut color = Vector3::zeros();
                    let mut alpha = 0.0;
                    let mut zsum = 0.0;
                    let mut agents: Vec<(u32, f64)> = Vec::new();
                    for c in &buf {
                        let s = &prep.splats[c.splat as usize];
                        let w = c.transmittance * c.alpha;
                        color += s.color * w;
                        alpha += w;
                        zsum += s.depth * w;
                        if s.agent_id != 0 {
                            match agents.iter_mut().find(|(a, _)| *a == s.agent_id) {
                                Some((_, acc)) => *acc += w,
                                None => agents.push((s.agent_id, w)),
                            }
                        }
                        sig = mix(sig, (s.source as u64) << 1 | c.clamped as u64);
                    }
                    let depth_valid = alpha >= DEPTH_ALPHA_EPS;
                    sig = mix(sig, buf.len() as u64 * 2 + depth_valid as u64);
                    PixelOut {
                        x,
                        y,
                        color,
                        alpha,
                        depth: if depth_valid { zsum / alpha } else { 0.0 },
                        agents,
                    }
                })
                .collect();
            (pixels, sig)
        })
        .collect();

    let (w, h) = (cam.width, cam.height);
    let mut image = Image::new(w, h, 3);
    let mut depth = Image::new(w, h, 1);
    let mut alpha = Image::new(w, h, 1);
    let mut agent_weights: BTreeMap<u32, Image> = BTreeMap::new();
    let mut signature = 0u64;
    for (pixels, sig) in tiles {
        signature = mix(signature, sig);
        for p in pixels {
            for c in 0..3 {
                *image.at_mut(p.x, p.y, c) = p.color[c];
            }
            *depth.at_mut(p.x, p.y, 0) = p.depth;
            *alpha.at_mut(p.x, p.y, 0) = p.alpha;
            for (a, v) in p.agents {
                *agent_weights
                    .entry(a)
                    .or_insert_with(|| Image::new(w, h, 1))
                    .at_mut(p.x, p.y, 0) = v;
            }
        }
    }
    (
        RenderOutput {
            image,
            depth,
            alpha,
            agent_weights,
        },
        signature,
    )
}
