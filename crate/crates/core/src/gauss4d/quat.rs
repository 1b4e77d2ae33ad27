//! Quaternion helpers with hand-written vector-Jacobian products.
//! Quaternions are `[w, x, y, z]`.

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};

pub type Quat = [f64; 4];

pub const IDENTITY: Quat = [1.0, 0.0, 0.0, 0.0];

pub fn norm(q: &Quat) -> f64 {
    (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt()
}

pub fn normalize(q: &Quat) -> Quat {
    let n = norm(q);
    [q[0] / n, q[1] / n, q[2] / n, q[3] / n]
}

/// Hamilton product `a ⊗ b`.
pub fn mul(a: &Quat, b: &Quat) -> Quat {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

/// `a ⊗ b = left(a) * b`
fn left(a: &Quat) -> Matrix4<f64> {
    Matrix4::new(
        a[0], -a[1], -a[2], -a[3], //
        a[1], a[0], -a[3], a[2], //
        a[2], a[3], a[0], -a[1], //
        a[3], -a[2], a[1], a[0],
    )
}

/// `a ⊗ b = right(b) * a`
fn right(b: &Quat) -> Matrix4<f64> {
    Matrix4::new(
        b[0], -b[1], -b[2], -b[3], //
        b[1], b[0], b[3], -b[2], //
        b[2], -b[3], b[0], b[1], //
        b[3], b[2], -b[1], b[0],
    )
}

/// Gradients of a loss w.r.t. both factors of `a ⊗ b`.
pub fn mul_vjp(a: &Quat, b: &Quat, d_out: &Quat) -> (Quat, Quat) {
    let g = Vector4::from_column_slice(d_out);
    let da = right(b).transpose() * g;
    let db = left(a).transpose() * g;
    (da.into(), db.into())
}

/// Gradient through `q / |q|`.
pub fn normalize_vjp(q: &Quat, d_out: &Quat) -> Quat {
    let n = norm(q);
    let u = normalize(q);
    let dot = u[0] * d_out[0] + u[1] * d_out[1] + u[2] * d_out[2] + u[3] * d_out[3];
    std::array::from_fn(|i| (d_out[i] - u[i] * dot) / n)
}

/// Unit quaternion of an axis-angle vector.
pub fn from_axis_angle(v: &Vector3<f64>) -> Quat {
    let theta = v.norm();
    let (w, f) = if theta < 1e-4 {
        let t2 = theta * theta;
        (1.0 - t2 / 8.0 + t2 * t2 / 384.0, 0.5 - t2 / 48.0)
    } else {
        ((0.5 * theta).cos(), (0.5 * theta).sin() / theta)
    };
    [w, f * v.x, f * v.y, f * v.z]
}

/// Gradient of [`from_axis_angle`] w.r.t. the axis-angle vector.
pub fn from_axis_angle_vjp(v: &Vector3<f64>, d_out: &Quat) -> Vector3<f64> {
    let theta = v.norm();
    // f = sin(θ/2)/θ, g = f'(θ)/θ
    let (f, g) = if theta < 1e-3 {
        let t2 = theta * theta;
        (0.5 - t2 / 48.0, -1.0 / 24.0 + t2 / 960.0)
    } else {
        let (s, c) = (0.5 * theta).sin_cos();
        (
            s / theta,
            (0.5 * theta * c - s) / (theta * theta * theta),
        )
    };
    let dq_vec = Vector3::new(d_out[1], d_out[2], d_out[3]);
    // dw/dv = -(f/2) v ; d(f v)/dv = f I + g v vᵀ
    -0.5 * f * d_out[0] * v + f * dq_vec + g * v.dot(&dq_vec) * v
}

/// Rotation matrix of a unit quaternion.
pub fn to_matrix(q: &Quat) -> Matrix3<f64> {
    let [w, x, y, z] = *q;
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Gradient of [`to_matrix`] (evaluated as a polynomial in q) w.r.t. q.
pub fn to_matrix_vjp(q: &Quat, d: &Matrix3<f64>) -> Quat {
    let [w, x, y, z] = *q;
    let dw = 2.0
        * (-z * d[(0, 1)] + y * d[(0, 2)] + z * d[(1, 0)] - x * d[(1, 2)] - y * d[(2, 0)]
            + x * d[(2, 1)]);
    let dx = 2.0
        * (y * d[(0, 1)] + z * d[(0, 2)] + y * d[(1, 0)] - 2.0 * x * d[(1, 1)] - w * d[(1, 2)]
            + z * d[(2, 0)]
            + w * d[(2, 1)]
            - 2.0 * x * d[(2, 2)]);
    let dy = 2.0
        * (-2.0 * y * d[(0, 0)] + x * d[(0, 1)] + w * d[(0, 2)] + x * d[(1, 0)] + z * d[(1, 2)]
            - w * d[(2, 0)]
            + z * d[(2, 1)]
            - 2.0 * y * d[(2, 2)]);
    let dz = 2.0
        * (-2.0 * z * d[(0, 0)] - w * d[(0, 1)] + x * d[(0, 2)] + w * d[(1, 0)]
            - 2.0 * z * d[(1, 1)]
            + y * d[(1, 2)]
            + x * d[(2, 0)]
            + y * d[(2, 1)]);
    [dw, dx, dy, dz]
}
