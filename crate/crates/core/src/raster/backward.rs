use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};
use rayon::prelude::*;

use super::forward::{blend_pixel, tile_pixels, Prepared};
use super::DEPTH_ALPHA_EPS;
use crate::gauss4d::{covariance_vjp, DeformedGrad, GaussianScene};
use crate::geom::CameraModel;
use crate::image::Image;

/// Gradient of the loss w.r.t. one projected splat.
#[derive(Clone, Copy, Debug, Default)]
struct SplatGrad {
    mean: Vector2<f64>,
    /// Full-matrix gradient w.r.t. the conic (inverse 2D covariance).
    conic: Matrix2<f64>,
    opacity: f64,
    color: Vector3<f64>,
    depth: f64,
}

impl SplatGrad {
    fn add(&mut self, o: &SplatGrad) {
        self.mean += o.mean;
        self.conic += o.conic;
        self.opacity += o.opacity;
        self.color += o.color;
        self.depth += o.depth;
    }
}

/// Accumulates per-tile splat gradients; tiles are reduced in index order
/// so the result does not depend on scheduling.
fn splat_gradients(
    prep: &Prepared,
    cam: &CameraModel,
    d_image: &Image,
    d_depth: Option<&Image>,
) -> Vec<SplatGrad> {
    let partials: Vec<Vec<(u32, SplatGrad)>> = (0..prep.tiles.len())
        .into_par_iter()
        .map(|tile| {
            let list = &prep.tiles[tile];
            if list.is_empty() {
                return Vec::new();
            }
            // local slot per splat in this tile's list
            let mut local = vec![SplatGrad::default(); list.len()];
            let slot_of = |k: u32| list.binary_search(&k).expect("splat in tile list");
            let mut buf = Vec::new();
            let mut values = Vec::new();
            for (x, y) in tile_pixels(tile, prep.tiles_x, cam) {
                let g_c = Vector3::new(d_image.at(x, y, 0), d_image.at(x, y, 1), d_image.at(x, y, 2));
                let g_d = d_depth.map_or(0.0, |d| d.at(x, y, 0));
                if g_c == Vector3::zeros() && g_d == 0.0 {
                    continue;
                }
                let center = Vector2::new(x as f64 + 0.5, y as f64 + 0.5);
                blend_pixel(&prep.splats, list, center, &mut buf);
                if buf.is_empty() {
                    continue;
                }
                let mut a_sum = 0.0;
                let mut z_sum = 0.0;
                for c in &buf {
                    let w = c.transmittance * c.alpha;
                    a_sum += w;
                    z_sum += w * prep.splats[c.splat as usize].depth;
                }
                let depth_active = a_sum >= DEPTH_ALPHA_EPS && g_d != 0.0;
                let depth = if depth_active { z_sum / a_sum } else { 0.0 };

                // v_i: loss sensitivity to the blend weight w_i = T_i α_i
                values.clear();
                for c in &buf {
                    let s = &prep.splats[c.splat as usize];
                    let mut v = g_c.dot(&s.color);
                    if depth_active {
                        v += g_d * (s.depth - depth) / a_sum;
                    }
                    values.push(v);
                }
                let mut suffix = 0.0;
                for (c, v) in buf.iter().zip(&values).rev() {
                    let s = &prep.splats[c.splat as usize];
                    let w = c.transmittance * c.alpha;
                    let d_alpha = c.transmittance * v - suffix / (1.0 - c.alpha);
                    suffix += v * w;

                    let g = &mut local[slot_of(c.splat)];
                    g.color += g_c * w;
                    if depth_active {
                        g.depth += g_d * w / a_sum;
                    }
                    if c.clamped {
                        continue;
                    }
                    g.opacity += d_alpha * c.gauss;
                    // α = o·exp(-½ m), m = dᵀ Q d, d = center - mean
                    let d_m = -0.5 * d_alpha * s.opacity * c.gauss;
                    g.mean += -2.0 * d_m * (s.conic * c.offset);
                    g.conic += d_m * c.offset * c.offset.transpose();
                }
            }
            list.iter().copied().zip(local).collect()
        })
        .collect();

    let mut grads = vec![SplatGrad::default(); prep.splats.len()];
    for tile in partials {
        for (k, g) in tile {
            grads[k as usize].add(&g);
        }
    }
    grads
}

/// Back-propagates image and depth gradients of one render into the
/// scene's flat parameter gradient (`out`, same layout as `scene.params()`).
pub(crate) fn backward_prepared(
    scene: &GaussianScene,
    tau: f64,
    prep: &Prepared,
    cam: &CameraModel,
    d_image: &Image,
    d_depth: Option<&Image>,
    out: &mut [f64],
) {
    let grads = splat_gradients(prep, cam, d_image, d_depth);
    let w_rot: Matrix3<f64> = prep.view.rotation_matrix();
    let block = scene.block_len();
    for (s, g) in prep.splats.iter().zip(&grads) {
        let d = &prep.deformed[s.source];
        let q = d.unit_rotation();
        let sigma = d.covariance();

        // conic = cov2d⁻¹
        let d_cov2d = -(s.conic * g.conic * s.conic);
        let t: Matrix2x3<f64> = s.cov_jacobian * w_rot;
        let d_sigma = t.transpose() * d_cov2d * t;
        let d_t = (d_cov2d + d_cov2d.transpose()) * t * sigma;
        let d_j = d_t * w_rot.transpose();

        // cov Jacobian entries: fx/z, -fx·u/z with u = clamp(x/z) (same in y)
        let p = &s.p_cam;
        let iz = 1.0 / p.z;
        let iz2 = iz * iz;
        let mut d_pcam = s.jacobian.transpose() * g.mean;
        d_pcam.z += d_j[(0, 0)] * (-cam.fx * iz2) + d_j[(1, 1)] * (-cam.fy * iz2) + g.depth;
        for (axis, f) in [(0usize, cam.fx), (1, cam.fy)] {
            let u = s.slopes[axis];
            let d = d_j[(axis, 2)];
            if s.slope_clamped[axis] {
                d_pcam.z += d * f * u * iz2;
            } else {
                d_pcam[axis] += d * (-f * iz2);
                d_pcam.z += d * 2.0 * f * u * iz2;
            }
        }

        let (d_log, d_q) = covariance_vjp(&d.log_scale, &q, &d_sigma);
        let o = s.opacity;
        let dg = DeformedGrad {
            position: w_rot.transpose() * d_pcam,
            opacity_logit: g.opacity * o * (1.0 - o),
            log_scale: d_log,
            rotation: d_q,
            color_logit: g.color.component_mul(&s.color.map(|c| c * (1.0 - c))),
        };
        let range = s.source * block..(s.source + 1) * block;
        scene.primitives[s.source].deform_vjp(tau, &dg, &mut out[range]);
    }
}
