//! SE(3) exponential map as a tape primitive.
//!
//! Input is a 6-vector `[rx, ry, rz, tx, ty, tz]` (axis-angle rotation,
//! translation); output is the 4x4 homogeneous matrix, row-major. The
//! rotation block is the Rodrigues form `R = I + a(s) K + b(s) K^2` with
//! `K = skew(r)` and `s = |r|^2`, where `a = sin(th)/th` and
//! `b = (1 - cos(th))/th^2` are evaluated by series for small `s` so the map
//! and its gradient are smooth through the identity.

use crate::real::Real;

/// `a(s)`, `b(s)` and their derivatives w.r.t. `s = theta^2`.
fn rot_coeffs(s: f64) -> (f64, f64, f64, f64) {
    if s < 1e-6 {
        let a = 1.0 - s / 6.0 + s * s / 120.0 - s * s * s / 5040.0;
        let b = 0.5 - s / 24.0 + s * s / 720.0 - s * s * s / 40320.0;
        let da = -1.0 / 6.0 + s / 60.0 - s * s / 1680.0;
        let db = -1.0 / 24.0 + s / 360.0 - s * s / 13440.0;
        (a, b, da, db)
    } else {
        let th = s.sqrt();
        let (sin, cos) = th.sin_cos();
        let a = sin / th;
        let b = (1.0 - cos) / s;
        let da = (th * cos - sin) / (2.0 * th * th * th);
        let db = (th * sin - 2.0 * (1.0 - cos)) / (2.0 * s * s);
        (a, b, da, db)
    }
}

fn skew(r: &[f64; 3]) -> [[f64; 3]; 3] {
    [
        [0.0, -r[2], r[1]],
        [r[2], 0.0, -r[0]],
        [-r[1], r[0], 0.0],
    ]
}

fn mat3_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

fn frobenius(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> f64 {
    let mut acc = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            acc += a[i][j] * b[i][j];
        }
    }
    acc
}

pub(crate) fn se3_exp_forward<T: Real>(v: &[T]) -> Vec<T> {
    let r = [v[0].as_f64(), v[1].as_f64(), v[2].as_f64()];
    let t = [v[3].as_f64(), v[4].as_f64(), v[5].as_f64()];
    let s = r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
    let (a, b, _, _) = rot_coeffs(s);
    let k = skew(&r);
    let k2 = mat3_mul(&k, &k);
    let mut m = [0f64; 16];
    for i in 0..3 {
        for j in 0..3 {
            let eye = if i == j { 1.0 } else { 0.0 };
            m[i * 4 + j] = eye + a * k[i][j] + b * k2[i][j];
        }
        m[i * 4 + 3] = t[i];
    }
    m[15] = 1.0;
    m.iter().map(|&x| T::from_f64(x)).collect()
}

pub(crate) fn se3_exp_backward<T: Real>(v: &[T], g: &[T]) -> Vec<T> {
    let r = [v[0].as_f64(), v[1].as_f64(), v[2].as_f64()];
    let s = r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
    let (a, b, da, db) = rot_coeffs(s);
    let k = skew(&r);
    let k2 = mat3_mul(&k, &k);
    let mut gr = [[0f64; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            gr[i][j] = g[i * 4 + j].as_f64();
        }
    }
    let gk = frobenius(&gr, &k);
    let gk2 = frobenius(&gr, &k2);

    let mut out = [0f64; 6];
    for i in 0..3 {
        let mut e = [0f64; 3];
        e[i] = 1.0;
        let ei = skew(&e);
        let cross = {
            // d(K^2)/dr_i = Ei K + K Ei
            let m1 = mat3_mul(&ei, &k);
            let m2 = mat3_mul(&k, &ei);
            let mut sum = [[0.0; 3]; 3];
            for p in 0..3 {
                for q in 0..3 {
                    sum[p][q] = m1[p][q] + m2[p][q];
                }
            }
            sum
        };
        out[i] = 2.0 * r[i] * (da * gk + db * gk2)
            + a * frobenius(&gr, &ei)
            + b * frobenius(&gr, &cross);
    }
    out[3] = g[3].as_f64();
    out[4] = g[7].as_f64();
    out[5] = g[11].as_f64();
    out.iter().map(|&x| T::from_f64(x)).collect()
}
