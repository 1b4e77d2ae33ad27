//! Time-varying Gaussian scene: primitives, the polynomial temporal field
//! and learnable-scene initialization.
//!
//! Parameters live in "raw" space (opacity and color as logits, scale as
//! log-scale, rotation as an unnormalized quaternion). Every primitive
//! flattens to a fixed-size block so the optimizer and gradient code can
//! work on plain `f64` slices:
//!
//! ```text
//! [ position(3) | opacity(1) | log_scale(3) | rotation(4) | color(3)
//!   | dx(3D) | dopacity(D) | dscale(3D) | drot(3D) | dcolor(3D) ]
//! ```
//!
//! Temporal offsets are polynomials over the basis `(t - t0)^k`, `k = 1..=D`,
//! so every attribute is exactly its canonical value at `t0`.

mod checkpoint;
pub mod quat;

pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointMeta};

use nalgebra::{Matrix3, Vector3};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use quat::Quat;

pub const DEFAULT_DEGREE: usize = 2;
pub const BASE_PARAMS: usize = 14;
pub const TEMPORAL_PARAMS_PER_DEGREE: usize = 13;

pub const MIN_SCALE: f64 = 1e-6;
pub const MAX_SCALE: f64 = 1e3;
/// Opacity logits are kept in this range so sigmoid never saturates to 0 or 1.
pub const MAX_OPACITY_LOGIT: f64 = 15.0;

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Polynomial coefficients of the per-attribute offsets; entry `k - 1`
/// multiplies `(t - t0)^k`.
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalCoeffs {
    pub position: Vec<Vector3<f64>>,
    pub opacity: Vec<f64>,
    pub scale: Vec<Vector3<f64>>,
    /// Axis-angle increments.
    pub rotation: Vec<Vector3<f64>>,
    pub color: Vec<Vector3<f64>>,
}

impl TemporalCoeffs {
    pub fn zeros(degree: usize) -> Self {
        Self {
            position: vec![Vector3::zeros(); degree],
            opacity: vec![0.0; degree],
            scale: vec![Vector3::zeros(); degree],
            rotation: vec![Vector3::zeros(); degree],
            color: vec![Vector3::zeros(); degree],
        }
    }

    pub fn degree(&self) -> usize {
        self.position.len()
    }

    pub fn is_zero(&self) -> bool {
        self.position.iter().all(|v| *v == Vector3::zeros())
            && self.opacity.iter().all(|v| *v == 0.0)
            && self.scale.iter().all(|v| *v == Vector3::zeros())
            && self.rotation.iter().all(|v| *v == Vector3::zeros())
            && self.color.iter().all(|v| *v == Vector3::zeros())
    }
}

/// Basis values `tau^1 ..= tau^degree`.
fn powers(tau: f64, degree: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(degree);
    let mut p = 1.0;
    for _ in 0..degree {
        p *= tau;
        out.push(p);
    }
    out
}

fn poly3(coeffs: &[Vector3<f64>], basis: &[f64]) -> Vector3<f64> {
    coeffs
        .iter()
        .zip(basis)
        .fold(Vector3::zeros(), |acc, (c, b)| acc + c * *b)
}

/// One anisotropic Gaussian with its temporal coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPrimitive {
    pub position: Vector3<f64>,
    pub opacity_logit: f64,
    pub log_scale: Vector3<f64>,
    /// (w, x, y, z); normalized before use.
    pub rotation: Quat,
    pub color_logit: Vector3<f64>,
    /// 0 is background.
    pub agent_id: u32,
    pub temporal: TemporalCoeffs,
}

/// Raw parameters after applying the temporal field at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct Deformed {
    pub position: Vector3<f64>,
    pub opacity_logit: f64,
    pub log_scale: Vector3<f64>,
    pub rotation: Quat,
    pub color_logit: Vector3<f64>,
    pub agent_id: u32,
}

impl Deformed {
    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }

    pub fn color(&self) -> Vector3<f64> {
        self.color_logit.map(sigmoid)
    }

    pub fn unit_rotation(&self) -> Quat {
        quat::normalize(&self.rotation)
    }

    pub fn covariance(&self) -> Matrix3<f64> {
        covariance(&self.log_scale, &self.unit_rotation())
    }
}

/// Loss gradient w.r.t. a [`Deformed`] primitive. `rotation` is taken
/// w.r.t. the unit quaternion the renderer actually uses.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DeformedGrad {
    pub position: Vector3<f64>,
    pub opacity_logit: f64,
    pub log_scale: Vector3<f64>,
    pub rotation: Quat,
    pub color_logit: Vector3<f64>,
}

/// `Σ = R S Sᵀ Rᵀ` with `S = diag(exp(log_scale))`.
pub fn covariance(log_scale: &Vector3<f64>, rotation: &Quat) -> Matrix3<f64> {
    let m = quat::to_matrix(rotation) * Matrix3::from_diagonal(&log_scale.map(f64::exp));
    m * m.transpose()
}

/// Gradient of [`covariance`] w.r.t. log-scale and the (unit) quaternion.
pub fn covariance_vjp(
    log_scale: &Vector3<f64>,
    rotation: &Quat,
    d_sigma: &Matrix3<f64>,
) -> (Vector3<f64>, Quat) {
    let r = quat::to_matrix(rotation);
    let s = log_scale.map(f64::exp);
    let m = r * Matrix3::from_diagonal(&s);
    let dm = (d_sigma + d_sigma.transpose()) * m;
    let mut d_log = Vector3::zeros();
    let mut dr = Matrix3::zeros();
    for i in 0..3 {
        let col_r = r.column(i);
        let col_dm = dm.column(i);
        d_log[i] = col_r.dot(&col_dm) * s[i];
        dr.set_column(i, &(col_dm * s[i]));
    }
    (d_log, quat::to_matrix_vjp(rotation, &dr))
}

impl GaussianPrimitive {
    pub fn new(
        position: Vector3<f64>,
        log_scale: Vector3<f64>,
        rotation: Quat,
        opacity: f64,
        color: Vector3<f64>,
        agent_id: u32,
        degree: usize,
    ) -> Self {
        Self {
            position,
            opacity_logit: logit(opacity),
            log_scale,
            rotation: quat::normalize(&rotation),
            color_logit: color.map(logit),
            agent_id,
            temporal: TemporalCoeffs::zeros(degree),
        }
    }

    pub fn param_len(degree: usize) -> usize {
        BASE_PARAMS + TEMPORAL_PARAMS_PER_DEGREE * degree
    }

    /// Applies the temporal field at `tau = t - t0`. Exact identity at `tau = 0`.
    pub fn deform(&self, tau: f64) -> Deformed {
        if tau == 0.0 {
            return Deformed {
                position: self.position,
                opacity_logit: self.opacity_logit,
                log_scale: self.log_scale,
                rotation: self.rotation,
                color_logit: self.color_logit,
                agent_id: self.agent_id,
            };
        }
        let tc = &self.temporal;
        let basis = powers(tau, tc.degree());
        let drot = poly3(&tc.rotation, &basis);
        let rotation = quat::normalize(&quat::mul(&quat::from_axis_angle(&drot), &self.rotation));
        Deformed {
            position: self.position + poly3(&tc.position, &basis),
            opacity_logit: self.opacity_logit
                + tc.opacity.iter().zip(&basis).map(|(c, b)| c * b).sum::<f64>(),
            log_scale: self.log_scale + poly3(&tc.scale, &basis),
            rotation,
            color_logit: self.color_logit + poly3(&tc.color, &basis),
            agent_id: self.agent_id,
        }
    }

    /// Accumulates the gradient of [`deform`](Self::deform) (followed by the
    /// renderer's rotation normalization) into this primitive's flat block.
    pub fn deform_vjp(&self, tau: f64, g: &DeformedGrad, out: &mut [f64]) {
        let degree = self.temporal.degree();
        debug_assert_eq!(out.len(), Self::param_len(degree));
        let basis = powers(tau, degree);
        let drot = poly3(&self.temporal.rotation, &basis);
        let dq = quat::from_axis_angle(&drot);
        let u = quat::mul(&dq, &self.rotation);
        let du = quat::normalize_vjp(&u, &g.rotation);
        let (d_dq, d_r) = quat::mul_vjp(&dq, &self.rotation, &du);
        let d_axis = quat::from_axis_angle_vjp(&drot, &d_dq);

        for i in 0..3 {
            out[i] += g.position[i];
            out[4 + i] += g.log_scale[i];
            out[11 + i] += g.color_logit[i];
        }
        out[3] += g.opacity_logit;
        for i in 0..4 {
            out[7 + i] += d_r[i];
        }
        let t = &mut out[BASE_PARAMS..];
        let (tp, rest) = t.split_at_mut(3 * degree);
        let (to, rest) = rest.split_at_mut(degree);
        let (ts, rest) = rest.split_at_mut(3 * degree);
        let (tr, tcol) = rest.split_at_mut(3 * degree);
        for (k, b) in basis.iter().enumerate() {
            for i in 0..3 {
                tp[3 * k + i] += g.position[i] * b;
                ts[3 * k + i] += g.log_scale[i] * b;
                tr[3 * k + i] += d_axis[i] * b;
                tcol[3 * k + i] += g.color_logit[i] * b;
            }
            to[k] += g.opacity_logit * b;
        }
    }

    pub fn write_params(&self, out: &mut [f64]) {
        let degree = self.temporal.degree();
        debug_assert_eq!(out.len(), Self::param_len(degree));
        out[0..3].copy_from_slice(self.position.as_slice());
        out[3] = self.opacity_logit;
        out[4..7].copy_from_slice(self.log_scale.as_slice());
        out[7..11].copy_from_slice(&self.rotation);
        out[11..14].copy_from_slice(self.color_logit.as_slice());
        let tc = &self.temporal;
        let mut o = BASE_PARAMS;
        for v in &tc.position {
            out[o..o + 3].copy_from_slice(v.as_slice());
            o += 3;
        }
        for v in &tc.opacity {
            out[o] = *v;
            o += 1;
        }
        for list in [&tc.scale, &tc.rotation, &tc.color] {
            for v in list {
                out[o..o + 3].copy_from_slice(v.as_slice());
                o += 3;
            }
        }
    }

    pub fn read_params(&mut self, p: &[f64]) {
        let degree = self.temporal.degree();
        debug_assert_eq!(p.len(), Self::param_len(degree));
        let v3 = |o: usize| Vector3::new(p[o], p[o + 1], p[o + 2]);
        self.position = v3(0);
        self.opacity_logit = p[3];
        self.log_scale = v3(4);
        self.rotation = [p[7], p[8], p[9], p[10]];
        self.color_logit = v3(11);
        let mut o = BASE_PARAMS;
        let tc = &mut self.temporal;
        for v in tc.position.iter_mut() {
            *v = v3(o);
            o += 3;
        }
        for v in tc.opacity.iter_mut() {
            *v = p[o];
            o += 1;
        }
        for list in [&mut tc.scale, &mut tc.rotation, &mut tc.color] {
            for v in list.iter_mut() {
                *v = v3(o);
                o += 3;
            }
        }
    }

    /// Renormalizes the rotation and clamps scale and opacity into range.
    pub fn project_to_valid(&mut self) {
        self.rotation = quat::normalize(&self.rotation);
        let (lo, hi) = (MIN_SCALE.ln(), MAX_SCALE.ln());
        self.log_scale = self.log_scale.map(|s| s.clamp(lo, hi));
        self.opacity_logit = self
            .opacity_logit
            .clamp(-MAX_OPACITY_LOGIT, MAX_OPACITY_LOGIT);
    }
}

/// Optimizer parameter groups.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Position,
    Rotation,
    Scale,
    Opacity,
    Color,
    Temporal,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 6] = [
        ParamGroup::Position,
        ParamGroup::Rotation,
        ParamGroup::Scale,
        ParamGroup::Opacity,
        ParamGroup::Color,
        ParamGroup::Temporal,
    ];

    /// Group of entry `j` within a primitive block.
    pub fn of(j: usize) -> ParamGroup {
        match j {
            0..=2 => ParamGroup::Position,
            3 => ParamGroup::Opacity,
            4..=6 => ParamGroup::Scale,
            7..=10 => ParamGroup::Rotation,
            11..=13 => ParamGroup::Color,
            _ => ParamGroup::Temporal,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ParamGroup::Position => "position",
            ParamGroup::Rotation => "rotation",
            ParamGroup::Scale => "scale",
            ParamGroup::Opacity => "opacity",
            ParamGroup::Color => "color",
            ParamGroup::Temporal => "temporal",
        }
    }
}

/// True for temporal entries that offset the position (metric units).
pub fn is_temporal_position(j: usize, degree: usize) -> bool {
    (BASE_PARAMS..BASE_PARAMS + 3 * degree).contains(&j)
}

/// A collection of primitives sharing one canonical time and temporal degree.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianScene {
    pub primitives: Vec<GaussianPrimitive>,
    t0: f64,
    time_range: (f64, f64),
    degree: usize,
}

impl GaussianScene {
    pub fn new(
        primitives: Vec<GaussianPrimitive>,
        t0: f64,
        time_range: (f64, f64),
    ) -> Result<Self> {
        if primitives.is_empty() {
            return Err(Error::Invalid("scene has no primitives".into()));
        }
        let degree = primitives[0].temporal.degree();
        if primitives.iter().any(|p| p.temporal.degree() != degree) {
            return Err(Error::Invalid("mixed temporal degrees".into()));
        }
        let mut scene = Self::empty(t0, time_range, degree)?;
        scene.primitives = primitives;
        Ok(scene)
    }

    /// A scene without primitives; renders as background.
    pub fn empty(t0: f64, time_range: (f64, f64), degree: usize) -> Result<Self> {
        if !(time_range.0 <= t0 && t0 <= time_range.1) {
            return Err(Error::Invalid(format!(
                "t0 = {t0} outside time range {time_range:?}"
            )));
        }
        Ok(Self {
            primitives: Vec::new(),
            t0,
            time_range,
            degree,
        })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn time_range(&self) -> (f64, f64) {
        self.time_range
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    pub fn block_len(&self) -> usize {
        GaussianPrimitive::param_len(self.degree)
    }

    pub fn check_time(&self, t: f64) -> Result<()> {
        let (min, max) = self.time_range;
        if t >= min - 1e-9 && t <= max + 1e-9 {
            Ok(())
        } else {
            Err(Error::TimeOutOfRange { t, min, max })
        }
    }

    /// All primitives deformed to time `t`.
    pub fn deformed(&self, t: f64) -> Result<Vec<Deformed>> {
        self.check_time(t)?;
        let tau = t - self.t0;
        Ok(self.primitives.iter().map(|g| g.deform(tau)).collect())
    }

    pub fn params(&self) -> Vec<f64> {
        let n = self.block_len();
        let mut out = vec![0.0; n * self.len()];
        for (g, block) in self.primitives.iter().zip(out.chunks_exact_mut(n)) {
            g.write_params(block);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) {
        let n = self.block_len();
        assert_eq!(params.len(), n * self.len());
        for (g, block) in self.primitives.iter_mut().zip(params.chunks_exact(n)) {
            g.read_params(block);
        }
    }

    pub fn project_to_valid(&mut self) {
        self.primitives.iter_mut().for_each(|g| g.project_to_valid());
    }

    /// Learnable starting point derived from a reference scene: `n`
    /// primitives subsampled without replacement, positions jittered by
    /// N(0, noise_pos²) per axis, colors mid-gray, opacity 0.5, temporal
    /// field zeroed. Scales grow by `sqrt(N / n)` (at most 3x) so the sparser
    /// set still covers the surfaces it was drawn from.
    pub fn init_learnable(
        reference: &GaussianScene,
        n: usize,
        noise_pos: f64,
        seed: u64,
    ) -> Result<GaussianScene> {
        if n == 0 {
            return Err(Error::Invalid("cannot initialize zero primitives".into()));
        }
        if n > reference.len() {
            return Err(Error::Invalid(format!(
                "requested {n} primitives from a scene of {}",
                reference.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = index::sample(&mut rng, reference.len(), n).into_vec();
        picked.sort_unstable();
        let noise = Normal::new(0.0, noise_pos.max(0.0)).expect("finite sigma");
        let boost = (reference.len() as f64 / n as f64).sqrt().min(3.0).ln();
        let degree = reference.degree;
        let primitives = picked
            .into_iter()
            .map(|i| {
                let src = &reference.primitives[i];
                let jitter = if noise_pos > 0.0 {
                    Vector3::from_fn(|_, _| noise.sample(&mut rng))
                } else {
                    Vector3::zeros()
                };
                GaussianPrimitive {
                    position: src.position + jitter,
                    opacity_logit: 0.0,
                    log_scale: src.log_scale.add_scalar(boost),
                    rotation: src.rotation,
                    color_logit: Vector3::zeros(),
                    agent_id: src.agent_id,
                    temporal: TemporalCoeffs::zeros(degree),
                }
            })
            .collect();
        GaussianScene::new(primitives, reference.t0, reference.time_range)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn rnd_prim(seed: u64) -> GaussianPrimitive {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, 0.5).unwrap();
        let mut v3 = || Vector3::from_fn(|_, _| n.sample(&mut rng));
        let mut g = GaussianPrimitive::new(
            v3(),
            v3(),
            [0.8, 0.3, -0.2, 0.4],
            0.6,
            Vector3::new(0.2, 0.5, 0.7),
            2,
            2,
        );
        g.temporal.position = vec![v3(), v3()];
        g.temporal.scale = vec![v3() * 0.2, v3() * 0.2];
        g.temporal.rotation = vec![v3() * 0.3, v3() * 0.3];
        g.temporal.color = vec![v3(), v3()];
        g.temporal.opacity = vec![0.3, -0.2];
        g
    }

    #[test]
    fn covariance_identity_and_diag() {
        let c = covariance(&Vector3::zeros(), &quat::IDENTITY);
        assert!((c - Matrix3::identity()).abs().max() < 1e-15);
        let c = covariance(
            &Vector3::new(0.0, 2f64.ln(), 3f64.ln()),
            &quat::IDENTITY,
        );
        assert!((c - Matrix3::from_diagonal(&Vector3::new(1.0, 4.0, 9.0))).abs().max() < 1e-12);
    }

    #[test]
    fn covariance_rotated_about_z() {
        // R·diag(1,4,1)·Rᵀ with R = 90° about z swaps the first two axes
        let q = [FRAC_PI_4.cos(), 0.0, 0.0, FRAC_PI_4.sin()];
        let c = covariance(&Vector3::new(0.0, 2f64.ln(), 0.0), &q);
        let r = nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), FRAC_PI_2).into_inner();
        let expected = r * Matrix3::from_diagonal(&Vector3::new(1.0, 4.0, 1.0)) * r.transpose();
        assert!((c - expected).abs().max() < 1e-12);
        assert!((c - Matrix3::from_diagonal(&Vector3::new(4.0, 1.0, 1.0))).abs().max() < 1e-12);
    }

    #[test]
    fn covariance_is_symmetric_positive_definite() {
        for seed in 0..50 {
            let g = rnd_prim(seed);
            let c = covariance(&g.log_scale, &quat::normalize(&g.rotation));
            assert_eq!(c, c.transpose());
            assert!(c.symmetric_eigenvalues().min() > 0.0);
        }
    }

    #[test]
    fn deform_identity_at_t0() {
        let g = rnd_prim(3);
        let d = g.deform(0.0);
        assert_eq!(d.position, g.position);
        assert_eq!(d.rotation, g.rotation);
        assert_eq!(d.log_scale, g.log_scale);
        assert_eq!(d.opacity_logit, g.opacity_logit);
        assert_eq!(d.color_logit, g.color_logit);
    }

    #[test]
    fn deform_linear_shift() {
        let mut g = rnd_prim(1);
        g.temporal = TemporalCoeffs::zeros(2);
        g.temporal.position[0] = Vector3::new(1.0, 0.0, 0.0);
        let d = g.deform(2.0);
        assert!((d.position - g.position - Vector3::new(2.0, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn deform_matches_horner() {
        let g = rnd_prim(5);
        let tau = 1.5;
        // Horner evaluation of c1·τ + c2·τ² = τ(c1 + τ c2)
        let horner = |c: &[Vector3<f64>]| (c[0] + c[1] * tau) * tau;
        let d = g.deform(tau);
        assert!((d.position - g.position - horner(&g.temporal.position)).norm() < 1e-12);
        assert!((d.log_scale - g.log_scale - horner(&g.temporal.scale)).norm() < 1e-12);
        assert!((d.color_logit - g.color_logit - horner(&g.temporal.color)).norm() < 1e-12);
        let o = g.temporal.opacity[0] * tau + g.temporal.opacity[1] * tau * tau;
        assert!((d.opacity_logit - g.opacity_logit - o).abs() < 1e-12);
        let aa = horner(&g.temporal.rotation);
        let expected = nalgebra::UnitQuaternion::from_scaled_axis(aa)
            * nalgebra::UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
                g.rotation[0],
                g.rotation[1],
                g.rotation[2],
                g.rotation[3],
            ));
        assert!((d.rotation[0] - expected.w).abs() < 1e-12);
        assert!((d.rotation[3] - expected.k).abs() < 1e-12);
    }

    /// Scalar test loss on a deformed primitive: a fixed linear functional of
    /// position, activated opacity/color, and covariance.
    fn probe(d: &Deformed) -> f64 {
        let w = Matrix3::new(0.3, -0.1, 0.2, 0.5, 0.7, -0.4, 0.1, 0.2, 0.9);
        d.position.dot(&Vector3::new(0.4, -1.1, 0.3))
            + 1.7 * d.opacity()
            + d.color().dot(&Vector3::new(0.2, -0.6, 0.9))
            + d.covariance().component_mul(&w).sum()
    }

    fn probe_grad(d: &Deformed) -> DeformedGrad {
        let w = Matrix3::new(0.3, -0.1, 0.2, 0.5, 0.7, -0.4, 0.1, 0.2, 0.9);
        let q = d.unit_rotation();
        let (d_log, d_q) = covariance_vjp(&d.log_scale, &q, &w);
        let o = d.opacity();
        let c = d.color();
        DeformedGrad {
            position: Vector3::new(0.4, -1.1, 0.3),
            opacity_logit: 1.7 * o * (1.0 - o),
            log_scale: d_log,
            rotation: d_q,
            color_logit: Vector3::new(0.2, -0.6, 0.9).component_mul(&c.map(|v| v * (1.0 - v))),
        }
    }

    #[test]
    fn deform_and_covariance_gradients_match_fd() {
        for (seed, tau) in [(7u64, 0.8), (8, -1.3), (9, 0.0)] {
            let g = rnd_prim(seed);
            let n = GaussianPrimitive::param_len(2);
            let mut analytic = vec![0.0; n];
            g.deform_vjp(tau, &probe_grad(&g.deform(tau)), &mut analytic);
            let mut params = vec![0.0; n];
            g.write_params(&mut params);
            let eval = |p: &[f64]| {
                let mut h = g.clone();
                h.read_params(p);
                probe(&h.deform(tau))
            };
            for j in 0..n {
                let h = 1e-6;
                let mut pp = params.clone();
                let mut pm = params.clone();
                pp[j] += h;
                pm[j] -= h;
                let fd = (eval(&pp) - eval(&pm)) / (2.0 * h);
                let err = (fd - analytic[j]).abs() / fd.abs().max(analytic[j].abs()).max(1e-6);
                assert!(err < 1e-4, "seed {seed} tau {tau} param {j}: fd {fd} vs {}", analytic[j]);
            }
        }
    }

    #[test]
    fn params_round_trip() {
        let g = rnd_prim(11);
        let mut p = vec![0.0; GaussianPrimitive::param_len(2)];
        g.write_params(&mut p);
        let mut h = rnd_prim(12);
        h.read_params(&p);
        assert_eq!(g, h);
        assert_eq!(ParamGroup::of(0), ParamGroup::Position);
        assert_eq!(ParamGroup::of(10), ParamGroup::Rotation);
        assert_eq!(ParamGroup::of(14), ParamGroup::Temporal);
        assert!(is_temporal_position(19, 2) && !is_temporal_position(20, 2));
    }

    fn grid_scene(spacing: f64) -> GaussianScene {
        let prims = (0..400)
            .map(|i| {
                let p = Vector3::new((i % 20) as f64 * spacing, (i / 20) as f64 * spacing, 0.0);
                GaussianPrimitive::new(p, Vector3::repeat(-2.0), quat::IDENTITY, 0.9, Vector3::repeat(0.8), 0, 2)
            })
            .collect();
        GaussianScene::new(prims, 0.0, (0.0, 1.0)).unwrap()
    }

    #[test]
    fn init_is_subsample_and_deterministic() {
        let world = grid_scene(1.0);
        let a = GaussianScene::init_learnable(&world, 50, 0.0, 3).unwrap();
        let b = GaussianScene::init_learnable(&world, 50, 0.0, 3).unwrap();
        assert_eq!(a, b);
        for g in &a.primitives {
            assert!(world.primitives.iter().any(|w| w.position == g.position));
            assert_eq!(g.opacity_logit, 0.0);
            assert_eq!(g.color_logit, Vector3::zeros());
            assert!(g.temporal.is_zero());
        }
        assert!(GaussianScene::init_learnable(&world, 0, 0.0, 3).is_err());
        assert!(GaussianScene::init_learnable(&world, 401, 0.0, 3).is_err());
    }

    #[test]
    fn init_noise_statistics() {
        // spacing far above the noise so the nearest reference point is the source
        let world = grid_scene(5.0);
        let s = GaussianScene::init_learnable(&world, 100, 0.2, 1).unwrap();
        let mean_nn: f64 = s
            .primitives
            .iter()
            .map(|g| {
                world
                    .primitives
                    .iter()
                    .map(|w| (w.position - g.position).norm())
                    .fold(f64::INFINITY, f64::min)
            })
            .sum::<f64>()
            / 100.0;
        // E|N(0, σ² I₃)| = 2σ·sqrt(2/π)
        let expected = 2.0 * 0.2 * (2.0 / std::f64::consts::PI).sqrt();
        assert!((mean_nn - expected).abs() < 0.2 * expected, "{mean_nn} vs {expected}");
    }

    #[test]
    fn time_range_enforced() {
        let s = grid_scene(1.0);
        assert!(s.deformed(0.5).is_ok());
        assert!(matches!(s.deformed(1.5), Err(Error::TimeOutOfRange { .. })));
    }
}
