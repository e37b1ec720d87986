//! Small numeric helpers shared across modules.

use nalgebra::{Matrix3, Vector3, Vector4};

pub type V3 = Vector3<f64>;
pub type M3 = Matrix3<f64>;

/// Rigid transform: `x -> R x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rigid {
    pub rot: M3,
    pub trans: V3,
}

impl Rigid {
    pub fn identity() -> Self {
        Rigid {
            rot: M3::identity(),
            trans: V3::zeros(),
        }
    }

    pub fn new(rot: M3, trans: V3) -> Self {
        Rigid { rot, trans }
    }

    pub fn apply(&self, x: &V3) -> V3 {
        self.rot * x + self.trans
    }

    pub fn compose(&self, inner: &Rigid) -> Rigid {
        // self ∘ inner
        Rigid {
            rot: self.rot * inner.rot,
            trans: self.rot * inner.trans + self.trans,
        }
    }

    pub fn inverse(&self) -> Rigid {
        let rt = self.rot.transpose();
        Rigid {
            rot: rt,
            trans: -(rt * self.trans),
        }
    }
}

/// Axis-angle to rotation matrix (Rodrigues). Below `SMALL_ANGLE` the
/// sin/cos coefficients switch to their series expansions so the map stays
/// smooth through zero.
pub const SMALL_ANGLE: f64 = 1e-7;

pub fn rodrigues(axis_angle: &V3) -> M3 {
    let theta2 = axis_angle.norm_squared();
    let theta = theta2.sqrt();
    let (a, b) = if theta < SMALL_ANGLE {
        // sin(t)/t ≈ 1 - t²/6, (1-cos(t))/t² ≈ 1/2 - t²/24
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    let k = skew(axis_angle);
    M3::identity() + k * a + k * k * b
}

pub fn skew(v: &V3) -> M3 {
    M3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rotation matrix from a unit quaternion `(w, x, y, z)`.
pub fn quat_to_mat(q: &Vector4<f64>) -> M3 {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    M3::new(
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

/// Given dL/dR for `R = quat_to_mat(r)` with `r` unit, returns dL/dr.
pub fn quat_to_mat_backward(r: &Vector4<f64>, d_mat: &M3) -> Vector4<f64> {
    let (w, x, y, z) = (r[0], r[1], r[2], r[3]);
    // dR/dw, dR/dx, dR/dy, dR/dz as explicit matrices.
    let dw = M3::new(0.0, -2.0 * z, 2.0 * y, 2.0 * z, 0.0, -2.0 * x, -2.0 * y, 2.0 * x, 0.0);
    let dx = M3::new(0.0, 2.0 * y, 2.0 * z, 2.0 * y, -4.0 * x, -2.0 * w, 2.0 * z, 2.0 * w, -4.0 * x);
    let dy = M3::new(-4.0 * y, 2.0 * x, 2.0 * w, 2.0 * x, 0.0, 2.0 * z, -2.0 * w, 2.0 * z, -4.0 * y);
    let dz = M3::new(-4.0 * z, -2.0 * w, 2.0 * x, 2.0 * w, -4.0 * z, 2.0 * y, 2.0 * x, 2.0 * y, 0.0);
    Vector4::new(
        d_mat.dot(&dw),
        d_mat.dot(&dx),
        d_mat.dot(&dy),
        d_mat.dot(&dz),
    )
}

/// Backward of quaternion normalization `r = q / |q|`: maps dL/dr to dL/dq.
pub fn normalize_backward(q: &Vector4<f64>, d_unit: &Vector4<f64>) -> Vector4<f64> {
    let n = q.norm();
    let r = q / n;
    (d_unit - r * r.dot(d_unit)) / n
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

pub fn silu_deriv(x: f64) -> f64 {
    let s = sigmoid(x);
    s + x * s * (1.0 - s)
}

/// HSV (all in [0,1]) to RGB.
pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let i = (h6.floor() as i64).clamp(0, 5);
    let f = h6 - i as f64;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match i {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

/// Relative-with-floor gradient check comparison.
pub fn grad_close(analytic: f64, fd: f64, rel_tol: f64, abs_floor: f64) -> bool {
    let diff = (analytic - fd).abs();
    diff <= rel_tol * analytic.abs().max(fd.abs()) + abs_floor
}
