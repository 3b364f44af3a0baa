//! 6-DoF rigid motion: axis-angle rotation plus translation, with the 4x4
//! homogeneous matrix form used throughout warping, trajectory integration
//! and pose-file IO.
//!
//! Convention: `P_{a->b}` transforms homogeneous points from frame `a`
//! coordinates into frame `b` coordinates, `x_b = M(P_{a->b}) * x_a`. For
//! camera-to-world absolute poses `M_a`, that makes
//! `P_{a->b} = inv(M_b) * M_a`.

use crate::error::{Error, Result};
use nalgebra::{Matrix3, Matrix4, Rotation3, Vector3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSE3 {
    /// Axis-angle rotation vector (radians times unit axis).
    pub rotation: [f64; 3],
    /// Translation in meters.
    pub translation: [f64; 3],
}

impl Default for PoseSE3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl PoseSE3 {
    pub fn identity() -> Self {
        PoseSE3 { rotation: [0.0; 3], translation: [0.0; 3] }
    }

    pub fn new(rotation: [f64; 3], translation: [f64; 3]) -> Self {
        PoseSE3 { rotation, translation }
    }

    pub fn from_vec6(v: &[f64]) -> Self {
        PoseSE3 { rotation: [v[0], v[1], v[2]], translation: [v[3], v[4], v[5]] }
    }

    pub fn to_vec6(&self) -> [f64; 6] {
        [
            self.rotation[0],
            self.rotation[1],
            self.rotation[2],
            self.translation[0],
            self.translation[1],
            self.translation[2],
        ]
    }

    /// Homogeneous matrix via the Rodrigues exponential of the axis-angle
    /// vector; angles below 1e-8 reduce to `I + skew(r)` to machine
    /// precision.
    pub fn matrix(&self) -> Matrix4<f64> {
        let rot = Rotation3::from_scaled_axis(Vector3::from(self.rotation));
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(rot.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&Vector3::from(self.translation));
        m
    }

    /// Decompose a homogeneous matrix. Errors when the rotation block is not
    /// orthonormal within 1e-6 or the bottom row is not (0,0,0,1).
    pub fn from_matrix(m: &Matrix4<f64>) -> Result<Self> {
        let bottom = [m[(3, 0)], m[(3, 1)], m[(3, 2)], m[(3, 3)] - 1.0];
        if bottom.iter().any(|v| v.abs() > 1e-9) {
            return Err(Error::Numeric("pose matrix bottom row is not (0,0,0,1)".into()));
        }
        let r: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into();
        let gram = r.transpose() * r - Matrix3::identity();
        if gram.iter().any(|v| v.abs() > 1e-6) {
            return Err(Error::Numeric("pose rotation block is not orthonormal".into()));
        }
        let rotation = Rotation3::from_matrix_unchecked(r).scaled_axis();
        Ok(PoseSE3 {
            rotation: [rotation[0], rotation[1], rotation[2]],
            translation: [m[(0, 3)], m[(1, 3)], m[(2, 3)]],
        })
    }

    /// Inverse motion: `(R, t)^-1 = (R^T, -R^T t)`.
    pub fn inverse(&self) -> Self {
        let rot = Rotation3::from_scaled_axis(Vector3::from(self.rotation));
        let t_inv = -(rot.inverse() * Vector3::from(self.translation));
        PoseSE3 {
            rotation: [-self.rotation[0], -self.rotation[1], -self.rotation[2]],
            translation: [t_inv[0], t_inv[1], t_inv[2]],
        }
    }
}

/// Chain two relative motions: `compose(P_{a->b}, P_{b->c}) = P_{a->c}`,
/// i.e. `M(result) = M(P_{b->c}) * M(P_{a->b})`.
pub fn compose(p_ab: &PoseSE3, p_bc: &PoseSE3) -> PoseSE3 {
    let m = p_bc.matrix() * p_ab.matrix();
    PoseSE3::from_matrix(&m).expect("product of rigid motions is rigid")
}

/// Fold consecutive relative poses in application order:
/// `composite([P_{t->t-1}, P_{t-1->t-2}, ..., P_{i+1->i}]) = P_{t->i}`,
/// whose matrix is `M(P_{i+1->i}) * ... * M(P_{t->t-1})`.
pub fn composite(poses: &[PoseSE3]) -> PoseSE3 {
    let mut acc = PoseSE3::identity();
    for p in poses {
        acc = compose(&acc, p);
    }
    acc
}
