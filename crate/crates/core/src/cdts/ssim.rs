//! Structural similarity over 11×11 Gaussian windows (σ = 1.5) with
//! zero padding, averaged over pixels and channels, plus its gradient.

use crate::error::Result;
use crate::image::Image;

pub const WINDOW: usize = 11;
pub const WINDOW_SIGMA: f64 = 1.5;
pub const C1: f64 = 1e-4;
pub const C2: f64 = 9e-4;

pub(crate) fn window() -> [f64; WINDOW] {
    let r = (WINDOW / 2) as f64;
    let mut k = [0.0; WINDOW];
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - r;
        *v = (-d * d / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

/// "Same"-size separable filtering of one plane with zeros outside.
/// Self-adjoint because the kernel is symmetric.
fn filter(plane: &[f64], w: usize, h: usize, k: &[f64; WINDOW]) -> Vec<f64> {
    let r = (WINDOW / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                let xx = x as isize + i as isize - r;
                if xx >= 0 && (xx as usize) < w {
                    acc += kv * row[xx as usize];
                }
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                let yy = y as isize + i as isize - r;
                if yy >= 0 && (yy as usize) < h {
                    acc += kv * tmp[yy as usize * w + x];
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

fn planes(img: &Image) -> Vec<Vec<f64>> {
    (0..img.channels).map(|c| img.channel(c).data).collect()
}

pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    Ok(ssim_impl(a, b, false)?.0)
}

/// SSIM and its gradient with respect to `a`.
pub fn ssim_with_grad(a: &Image, b: &Image) -> Result<(f64, Image)> {
    let (v, g) = ssim_impl(a, b, true)?;
    Ok((v, g.expect("gradient requested")))
}

fn ssim_impl(a: &Image, b: &Image, want_grad: bool) -> Result<(f64, Option<Image>)> {
    a.check_shape(b, "ssim")?;
    let (w, h, ch) = (a.width, a.height, a.channels);
    let k = window();
    let n = (w * h * ch) as f64;
    let mut total = 0.0;
    let mut grad = want_grad.then(|| Image::new(w, h, ch));
    for (c, (pa, pb)) in planes(a).into_iter().zip(planes(b)).enumerate() {
        let sq = |p: &[f64], q: &[f64]| -> Vec<f64> { p.iter().zip(q).map(|(x, y)| x * y).collect() };
        let mu_a = filter(&pa, w, h, &k);
        let mu_b = filter(&pb, w, h, &k);
        let e_aa = filter(&sq(&pa, &pa), w, h, &k);
        let e_bb = filter(&sq(&pb, &pb), w, h, &k);
        let e_ab = filter(&sq(&pa, &pb), w, h, &k);
        let mut g_mu = vec![0.0; w * h];
        let mut g_aa = vec![0.0; w * h];
        let mut g_ab = vec![0.0; w * h];
        for i in 0..w * h {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let var_a = e_aa[i] - ma * ma;
            let var_b = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            let a1 = 2.0 * ma * mb + C1;
            let a2 = 2.0 * cov + C2;
            let b1 = ma * ma + mb * mb + C1;
            let b2 = var_a + var_b + C2;
            let s = a1 * a2 / (b1 * b2);
            total += s;
            if want_grad {
                let d_a1 = a2 / (b1 * b2);
                let d_a2 = a1 / (b1 * b2);
                let d_b1 = -s / b1;
                let d_b2 = -s / b2;
                g_mu[i] = (d_a1 * 2.0 * mb - d_a2 * 2.0 * mb + d_b1 * 2.0 * ma - d_b2 * 2.0 * ma) / n;
                g_aa[i] = d_b2 / n;
                g_ab[i] = 2.0 * d_a2 / n;
            }
        }
        if let Some(g) = grad.as_mut() {
            let f_mu = filter(&g_mu, w, h, &k);
            let f_aa = filter(&g_aa, w, h, &k);
            let f_ab = filter(&g_ab, w, h, &k);
            for i in 0..w * h {
                g.data[i * ch + c] = f_mu[i] + 2.0 * pa[i] * f_aa[i] + pb[i] * f_ab[i];
            }
        }
    }
    Ok((total / n, grad))
}
