//! Brute-force reimplementations of the evaluation metrics.

use nalgebra::{DMatrix, Vector2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use splat4d::geom::Box2D;
use splat4d::metrics::Mask;

/// Box with integer corners inside a `w` × `h` canvas.
pub fn grid_box(r: &mut ChaCha8Rng, w: i32, h: i32, id: u32) -> Box2D {
    let x0 = r.random_range(0..w - 1);
    let y0 = r.random_range(0..h - 1);
    let x1 = r.random_range(x0 + 1..=w);
    let y1 = r.random_range(y0 + 1..=h);
    Box2D::new(
        Vector2::new(x0 as f64, y0 as f64),
        Vector2::new(x1 as f64, y1 as f64),
        id,
    )
}

fn covers(b: &Box2D, x: i32, y: i32) -> bool {
    let c = Vector2::new(x as f64 + 0.5, y as f64 + 0.5);
    c.x > b.min.x && c.x < b.max.x && c.y > b.min.y && c.y < b.max.y
}

/// IoU by counting unit cells; exact for integer-cornered boxes.
pub fn cell_iou(a: &Box2D, b: &Box2D) -> f64 {
    let lo = a.min.inf(&b.min).map(|v| v.floor() as i32);
    let hi = a.max.sup(&b.max).map(|v| v.ceil() as i32);
    let (mut inter, mut union) = (0u32, 0u32);
    for y in lo.y..hi.y {
        for x in lo.x..hi.x {
            let (p, q) = (covers(a, x, y), covers(b, x, y));
            inter += (p && q) as u32;
            union += (p || q) as u32;
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Per-frame agent score: for each projected box, sort the detections by
/// center distance (ties by larger IoU) and score the first one if it lies
/// inside the box's diagonal.
pub fn nta_frame(proj: &[Box2D], det: &[Box2D]) -> Option<f64> {
    if proj.is_empty() {
        return None;
    }
    let mut sum = 0.0;
    for p in proj {
        let (pc, diag) = (
            (p.min + p.max) / 2.0,
            ((p.max.x - p.min.x).powi(2) + (p.max.y - p.min.y).powi(2)).sqrt(),
        );
        let mut cands: Vec<(f64, f64)> = det
            .iter()
            .map(|d| {
                let dc = (d.min + d.max) / 2.0;
                (((dc.x - pc.x).powi(2) + (dc.y - pc.y).powi(2)).sqrt(), cell_iou(p, d))
            })
            .collect();
        cands.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(b.1.partial_cmp(&a.1).unwrap()));
        if let Some(&(dist, v)) = cands.first() {
            if dist < diag {
                sum += v;
            }
        }
    }
    Some(sum / proj.len() as f64)
}

pub fn nta(frames: &[(Vec<Box2D>, Vec<Box2D>)]) -> f64 {
    let s: Vec<f64> = frames.iter().filter_map(|(p, d)| nta_frame(p, d)).collect();
    if s.is_empty() {
        1.0
    } else {
        s.iter().sum::<f64>() / s.len() as f64
    }
}

pub fn random_mask(r: &mut ChaCha8Rng, w: usize, h: usize, density: f64) -> Mask {
    Mask {
        width: w,
        height: h,
        data: (0..w * h).map(|_| r.random::<f64>() < density).collect(),
    }
}

/// Lane and background IoU from the confusion counts.
pub fn ntl(gt: &Mask, det: &Mask) -> f64 {
    let (mut tp, mut fp, mut fnn, mut tn) = (0.0, 0.0, 0.0, 0.0);
    for (a, b) in gt.data.iter().zip(&det.data) {
        match (a, b) {
            (true, true) => tp += 1.0,
            (false, true) => fp += 1.0,
            (true, false) => fnn += 1.0,
            (false, false) => tn += 1.0,
        }
    }
    let ratio = |num: f64, den: f64| if den == 0.0 { 1.0 } else { num / den };
    50.0 * (ratio(tp, tp + fp + fnn) + ratio(tn, tn + fp + fnn))
}

fn covariance(x: &[Vec<f64>]) -> (Vec<f64>, DMatrix<f64>) {
    let (n, d) = (x.len(), x[0].len());
    let mut mu = vec![0.0; d];
    for row in x {
        for j in 0..d {
            mu[j] += row[j] / n as f64;
        }
    }
    let mut c = DMatrix::zeros(d, d);
    for row in x {
        for i in 0..d {
            for j in 0..d {
                c[(i, j)] += (row[i] - mu[i]) * (row[j] - mu[j]) / (n as f64 - 1.0);
            }
        }
    }
    (mu, c)
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix: (eigenvalues,
/// eigenvectors as columns).
pub fn jacobi_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let mut a = m.clone();
    let mut v = DMatrix::identity(n, n);
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |j| *j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)].powi(2))
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[(i, i)]).collect(), v)
}

fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (w, v) = jacobi_eigen(m);
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        w.len(),
        w.iter().map(|x| x.max(0.0).sqrt()),
    ));
    &v * d * v.transpose()
}

/// Fréchet distance with the cross term taken as the nuclear norm of
/// `sqrt(Ca) sqrt(Cb)`.
pub fn frechet(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let (ma, ca) = covariance(a);
    let (mb, cb) = covariance(b);
    let mean: f64 = ma.iter().zip(&mb).map(|(x, y)| (x - y).powi(2)).sum();
    // singular values of X are the square roots of the eigenvalues of XᵀX
    let x = psd_sqrt(&ca) * psd_sqrt(&cb);
    let cross: f64 = jacobi_eigen(&(x.transpose() * &x)).0.iter().map(|l| l.max(0.0).sqrt()).sum();
    (mean + ca.trace() + cb.trace() - 2.0 * cross).max(0.0).sqrt()
}

