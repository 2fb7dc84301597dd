//! Scalar math shared by the `no_std` build.

pub use core::f64::consts::{E, PI};

#[inline]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub fn tan(x: f64) -> f64 {
    libm::tan(x)
}

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn ln_1p(x: f64) -> f64 {
    libm::log1p(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn tanh(x: f64) -> f64 {
    libm::tanh(x)
}

#[inline]
pub fn powi(x: f64, n: i32) -> f64 {
    libm::pow(x, n as f64)
}

#[inline]
pub fn log2(x: f64) -> f64 {
    libm::log2(x)
}

#[inline]
pub fn ceil(x: f64) -> f64 {
    libm::ceil(x)
}

#[inline]
pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}

#[inline]
pub fn atan2(y: f64, x: f64) -> f64 {
    libm::atan2(y, x)
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + ln_1p(exp(-x))
    } else {
        ln_1p(exp(x))
    }
}

/// Logistic function, the derivative of [`softplus`].
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y + ln(-libm::expm1(-y))
    } else {
        ln(libm::expm1(y))
    }
}

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

pub const IDENTITY3: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

pub fn mat3_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

pub fn mat3_vec(a: &Mat3, v: &Vec3) -> Vec3 {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}

pub fn mat3_transpose(a: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[j][i];
        }
    }
    out
}

pub fn norm3(v: &Vec3) -> f64 {
    sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
}

pub fn sub3(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// Rotation about the x axis.
pub fn rot_x(a: f64) -> Mat3 {
    let (s, c) = (sin(a), cos(a));
    [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]
}

pub fn rot_y(a: f64) -> Mat3 {
    let (s, c) = (sin(a), cos(a));
    [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
}

pub fn rot_z(a: f64) -> Mat3 {
    let (s, c) = (sin(a), cos(a));
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

/// Rodrigues' formula for a rotation vector.
pub fn axis_angle_matrix(w: &Vec3) -> Mat3 {
    let q = w[0] * w[0] + w[1] * w[1] + w[2] * w[2];
    let (a, b) = rodrigues_coeffs(q);
    let k = skew(w);
    let k2 = mat3_mul(&k, &k);
    let mut out = IDENTITY3;
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] += a * k[i][j] + b * k2[i][j];
        }
    }
    out
}

pub fn skew(w: &Vec3) -> Mat3 {
    [[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]]
}

/// `(sin θ / θ, (1 - cos θ) / θ²)` as functions of `q = θ²`, series-expanded
/// near zero.
pub fn rodrigues_coeffs(q: f64) -> (f64, f64) {
    if q < 1e-2 {
        let a = 1.0 - q / 6.0 * (1.0 - q / 20.0 * (1.0 - q / 42.0 * (1.0 - q / 72.0)));
        let b = 0.5 - q / 24.0 * (1.0 - q / 30.0 * (1.0 - q / 56.0 * (1.0 - q / 90.0)));
        (a, b)
    } else {
        let t = sqrt(q);
        let h = sin(0.5 * t);
        (sin(t) / t, 2.0 * h * h / q)
    }
}

/// Derivatives of [`rodrigues_coeffs`] with respect to `q`.
pub fn rodrigues_coeffs_dq(q: f64) -> (f64, f64) {
    if q < 1e-2 {
        let da = -1.0 / 6.0 + q / 60.0 - q * q / 1680.0 + q * q * q / 90720.0;
        let db = -1.0 / 24.0 + q / 360.0 - q * q / 13440.0 + q * q * q / 907200.0;
        (da, db)
    } else {
        let t = sqrt(q);
        let (s, c) = (sin(t), cos(t));
        let da = (t * c - s) / (2.0 * q * t);
        let db = (t * s - 2.0 * (1.0 - c)) / (2.0 * q * q);
        (da, db)
    }
}

/// Inverse of [`axis_angle_matrix`] for proper rotations.
pub fn matrix_axis_angle(r: &Mat3) -> Vec3 {
    let tr = r[0][0] + r[1][1] + r[2][2];
    let c = ((tr - 1.0) * 0.5).clamp(-1.0, 1.0);
    let v = [r[2][1] - r[1][2], r[0][2] - r[2][0], r[1][0] - r[0][1]];
    let s = 0.5 * norm3(&v);
    let angle = atan2(s, c);
    if angle < 1e-12 {
        return [0.5 * v[0], 0.5 * v[1], 0.5 * v[2]];
    }
    if PI - angle < 1e-6 {
        // Near π: recover the axis from the symmetric part.
        let mut axis = [0.0; 3];
        let d = [r[0][0], r[1][1], r[2][2]];
        let i = if d[0] >= d[1] && d[0] >= d[2] {
            0
        } else if d[1] >= d[2] {
            1
        } else {
            2
        };
        axis[i] = sqrt(((d[i] - c) / (1.0 - c)).max(0.0));
        for j in 0..3 {
            if j != i {
                axis[j] = (r[i][j] + r[j][i]) / (2.0 * (1.0 - c) * axis[i]);
            }
        }
        let n = norm3(&axis);
        return [
            axis[0] / n * angle,
            axis[1] / n * angle,
            axis[2] / n * angle,
        ];
    }
    let k = angle / (2.0 * s);
    [v[0] * k, v[1] * k, v[2] * k]
}
