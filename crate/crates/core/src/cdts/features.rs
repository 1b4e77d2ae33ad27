//! Fixed perceptual feature bank: two 5×5 conv + ReLU stages separated by
//! a 2×2 average pool, summarized by per-channel mean and standard deviation.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::image::Image;

pub const FEATURE_DIM: usize = 64;
pub const MIN_SIDE: usize = 16;
const CH: usize = 16;
const K: usize = 5;
const BANK_SEED: u64 = 0x5eed_f00d_cafe_0001;

struct Bank {
    /// [out][in][ky][kx]
    first: Vec<f64>,
    second: Vec<f64>,
}

fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Standard normal draws from Box-Muller over splitmix64 uniforms.
fn normals(n: usize, state: &mut u64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    while out.len() < n {
        let u1 = ((splitmix(state) >> 11) as f64 + 0.5) / (1u64 << 53) as f64;
        let u2 = ((splitmix(state) >> 11) as f64) / (1u64 << 53) as f64;
        let r = (-2.0 * u1.ln()).sqrt();
        let a = std::f64::consts::TAU * u2;
        out.push(r * a.cos());
        out.push(r * a.sin());
    }
    out.truncate(n);
    out
}

fn bank() -> &'static Bank {
    static BANK: OnceLock<Bank> = OnceLock::new();
    BANK.get_or_init(|| {
        let mut s = BANK_SEED;
        Bank {
            first: normals(CH * 3 * K * K, &mut s),
            second: normals(CH * CH * K * K, &mut s),
        }
    })
}

/// Channel-major stack of planes.
#[derive(Clone)]
struct Maps {
    w: usize,
    h: usize,
    c: usize,
    data: Vec<f64>,
}

impl Maps {
    fn zeros(w: usize, h: usize, c: usize) -> Self {
        Self { w, h, c, data: vec![0.0; w * h * c] }
    }

    fn plane(&self, c: usize) -> &[f64] {
        &self.data[c * self.w * self.h..(c + 1) * self.w * self.h]
    }

    fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.w * self.h;
        &mut self.data[c * n..(c + 1) * n]
    }
}

fn from_image(img: &Image) -> Maps {
    let mut m = Maps::zeros(img.width, img.height, img.channels);
    for c in 0..img.channels {
        for i in 0..img.width * img.height {
            m.data[c * img.width * img.height + i] = img.data[i * img.channels + c];
        }
    }
    m
}

fn to_image(m: &Maps) -> Image {
    let mut img = Image::new(m.w, m.h, m.c);
    for c in 0..m.c {
        for i in 0..m.w * m.h {
            img.data[i * m.c + c] = m.data[c * m.w * m.h + i];
        }
    }
    img
}

/// Same-size 5×5 correlation with zero padding.
fn conv(x: &Maps, weights: &[f64], out_c: usize) -> Maps {
    let (w, h) = (x.w, x.h);
    let r = (K / 2) as isize;
    let mut y = Maps::zeros(w, h, out_c);
    for o in 0..out_c {
        let out = y.plane_mut(o);
        for i in 0..x.c {
            let src = x.plane(i);
            let kern = &weights[(o * x.c + i) * K * K..(o * x.c + i + 1) * K * K];
            for ky in 0..K {
                let dy = ky as isize - r;
                for kx in 0..K {
                    let dx = kx as isize - r;
                    let wv = kern[ky * K + kx];
                    let (x0, x1) = ((-dx).max(0) as usize, (w as isize - dx).min(w as isize) as usize);
                    for yy in (-dy).max(0) as usize..(h as isize - dy).min(h as isize) as usize {
                        let sy = (yy as isize + dy) as usize;
                        let orow = &mut out[yy * w..(yy + 1) * w];
                        let srow = &src[sy * w..(sy + 1) * w];
                        for xx in x0..x1 {
                            orow[xx] += wv * srow[(xx as isize + dx) as usize];
                        }
                    }
                }
            }
        }
    }
    y
}

/// Adjoint of [`conv`] with respect to its input.
fn conv_adjoint(dy: &Maps, weights: &[f64], in_c: usize) -> Maps {
    let (w, h) = (dy.w, dy.h);
    let r = (K / 2) as isize;
    let mut dx_maps = Maps::zeros(w, h, in_c);
    for o in 0..dy.c {
        let g = dy.plane(o);
        for i in 0..in_c {
            let dst = dx_maps.plane_mut(i);
            let kern = &weights[(o * in_c + i) * K * K..(o * in_c + i + 1) * K * K];
            for ky in 0..K {
                let dy_off = ky as isize - r;
                for kx in 0..K {
                    let dx_off = kx as isize - r;
                    let wv = kern[ky * K + kx];
                    let (x0, x1) = ((-dx_off).max(0) as usize, (w as isize - dx_off).min(w as isize) as usize);
                    for yy in (-dy_off).max(0) as usize..(h as isize - dy_off).min(h as isize) as usize {
                        let sy = (yy as isize + dy_off) as usize;
                        for xx in x0..x1 {
                            dst[sy * w + (xx as isize + dx_off) as usize] += wv * g[yy * w + xx];
                        }
                    }
                }
            }
        }
    }
    dx_maps
}

fn relu(m: &mut Maps) {
    m.data.iter_mut().for_each(|v| *v = v.max(0.0));
}

fn pool(x: &Maps) -> Maps {
    let (w, h) = (x.w / 2, x.h / 2);
    let mut y = Maps::zeros(w, h, x.c);
    for c in 0..x.c {
        let src = x.plane(c);
        let dst = y.plane_mut(c);
        for yy in 0..h {
            for xx in 0..w {
                let i = 2 * yy * x.w + 2 * xx;
                dst[yy * w + xx] = 0.25 * (src[i] + src[i + 1] + src[i + x.w] + src[i + x.w + 1]);
            }
        }
    }
    y
}

fn pool_adjoint(dy: &Maps, w: usize, h: usize) -> Maps {
    let mut dx = Maps::zeros(w, h, dy.c);
    for c in 0..dy.c {
        let g = dy.plane(c);
        let dst = dx.plane_mut(c);
        for yy in 0..dy.h {
            for xx in 0..dy.w {
                let v = 0.25 * g[yy * dy.w + xx];
                let i = 2 * yy * w + 2 * xx;
                dst[i] += v;
                dst[i + 1] += v;
                dst[i + w] += v;
                dst[i + w + 1] += v;
            }
        }
    }
    dx
}

/// Population mean and standard deviation per channel.
fn stats(m: &Maps) -> Vec<(f64, f64)> {
    (0..m.c)
        .map(|c| {
            let p = m.plane(c);
            let n = p.len() as f64;
            let mean = p.iter().sum::<f64>() / n;
            let var = p.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            (mean, var.max(0.0).sqrt())
        })
        .collect()
}

fn stats_adjoint(m: &Maps, st: &[(f64, f64)], d: &[f64]) -> Maps {
    let mut out = Maps::zeros(m.w, m.h, m.c);
    for c in 0..m.c {
        let (mean, sd) = st[c];
        let (dm, ds) = (d[2 * c], d[2 * c + 1]);
        let n = (m.w * m.h) as f64;
        let src = m.plane(c);
        for (o, v) in out.plane_mut(c).iter_mut().zip(src) {
            *o = dm / n + if sd > 0.0 { ds * (v - mean) / (n * sd) } else { 0.0 };
        }
    }
    out
}

struct Trace {
    input: Maps,
    act1: Maps,
    act2: Maps,
    stats1: Vec<(f64, f64)>,
    stats2: Vec<(f64, f64)>,
}

fn run(image: &Image) -> Result<Trace> {
    if image.width < MIN_SIDE || image.height < MIN_SIDE || image.channels != 3 {
        return Err(Error::Shape(format!(
            "perceptual features need an RGB image of at least {MIN_SIDE}x{MIN_SIDE}, got {}x{}x{}",
            image.width, image.height, image.channels
        )));
    }
    let b = bank();
    let input = from_image(image);
    let mut act1 = conv(&input, &b.first, CH);
    relu(&mut act1);
    let mut act2 = conv(&pool(&act1), &b.second, CH);
    relu(&mut act2);
    let stats1 = stats(&act1);
    let stats2 = stats(&act2);
    Ok(Trace { input, act1, act2, stats1, stats2 })
}

fn flatten(t: &Trace) -> Vec<f64> {
    t.stats1
        .iter()
        .chain(&t.stats2)
        .flat_map(|(m, s)| [*m, *s])
        .collect()
}

/// 64 values: (mean, std) for each first-stage channel, then each
/// second-stage channel.
pub fn perceptual_features(image: &Image) -> Result<Vec<f64>> {
    Ok(flatten(&run(image)?))
}

/// Returns the features and d(Σ d_feat · features)/d(image).
pub fn perceptual_features_vjp(image: &Image, d_feat: &[f64]) -> Result<(Vec<f64>, Image)> {
    if d_feat.len() != FEATURE_DIM {
        return Err(Error::Shape(format!("feature gradient has {} entries", d_feat.len())));
    }
    let t = run(image)?;
    let b = bank();
    let mut g2 = stats_adjoint(&t.act2, &t.stats2, &d_feat[2 * CH..]);
    for (g, a) in g2.data.iter_mut().zip(&t.act2.data) {
        if *a <= 0.0 {
            *g = 0.0;
        }
    }
    let g_pool = conv_adjoint(&g2, &b.second, CH);
    let mut g1 = pool_adjoint(&g_pool, t.act1.w, t.act1.h);
    let direct = stats_adjoint(&t.act1, &t.stats1, &d_feat[..2 * CH]);
    for ((g, d), a) in g1.data.iter_mut().zip(&direct.data).zip(&t.act1.data) {
        *g = if *a > 0.0 { *g + d } else { 0.0 };
    }
    let g_in = conv_adjoint(&g1, &b.first, t.input.c);
    Ok((flatten(&t), to_image(&g_in)))
}
