//! The extended pose group SE2(3).
//!
//! An element `(A, a, b)` embeds as the 5x5 matrix
//!
//! ```text
//! | A  a  b |
//! | 0  1  0 |
//! | 0  0  1 |
//! ```
//!
//! and tangent vectors are ordered `(rotation, a-slot, b-slot)`. In the filters the
//! `a` slot carries velocity and the `b` slot carries position.

use nalgebra::{Matrix3, Matrix5, SMatrix, SVector, Vector3};

use super::so3::{self, hat, left_jacobian, left_jacobian_inv, Rot3};
use crate::error::Result;

pub type Se23Tangent = SVector<f64, 9>;
pub type Matrix9 = SMatrix<f64, 9, 9>;

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct ExtendedPose {
    pub rot: Rot3,
    pub velocity: Vector3<f64>,
    pub position: Vector3<f64>,
}

/// Splits a tangent vector into its rotation, velocity and position blocks.
#[inline]
pub fn split(u: &Se23Tangent) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
    (
        u.fixed_rows::<3>(0).into_owned(),
        u.fixed_rows::<3>(3).into_owned(),
        u.fixed_rows::<3>(6).into_owned(),
    )
}

#[inline]
pub fn join(w: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> Se23Tangent {
    let mut u = Se23Tangent::zeros();
    u.fixed_rows_mut::<3>(0).copy_from(w);
    u.fixed_rows_mut::<3>(3).copy_from(a);
    u.fixed_rows_mut::<3>(6).copy_from(b);
    u
}

/// Lie-algebra matrix of a tangent vector.
pub fn hat9(u: &Se23Tangent) -> Matrix5<f64> {
    let (w, a, b) = split(u);
    let mut m = Matrix5::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&hat(&w));
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&a);
    m.fixed_view_mut::<3, 1>(0, 4).copy_from(&b);
    m
}

pub fn vee9(m: &Matrix5<f64>) -> Se23Tangent {
    let w = so3::vee(&m.fixed_view::<3, 3>(0, 0).into_owned());
    join(
        &w,
        &m.fixed_view::<3, 1>(0, 3).into_owned(),
        &m.fixed_view::<3, 1>(0, 4).into_owned(),
    )
}

impl ExtendedPose {
    pub fn new(rot: Rot3, velocity: Vector3<f64>, position: Vector3<f64>) -> Self {
        Self {
            rot,
            velocity,
            position,
        }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    pub fn to_matrix(&self) -> Matrix5<f64> {
        let mut m = Matrix5::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(self.rot.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.velocity);
        m.fixed_view_mut::<3, 1>(0, 4).copy_from(&self.position);
        m
    }

    /// Reads the group element out of a 5x5 embedding (the bottom rows are ignored).
    pub fn from_matrix(m: &Matrix5<f64>) -> Self {
        Self {
            rot: Rot3::from_matrix_unchecked(m.fixed_view::<3, 3>(0, 0).into_owned()),
            velocity: m.fixed_view::<3, 1>(0, 3).into_owned(),
            position: m.fixed_view::<3, 1>(0, 4).into_owned(),
        }
    }

    pub fn compose(&self, other: &ExtendedPose) -> Self {
        Self {
            rot: self.rot.compose(&other.rot),
            velocity: self.velocity + self.rot.act(&other.velocity),
            position: self.position + self.rot.act(&other.position),
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rot.inverse();
        Self {
            rot: rt,
            velocity: -rt.act(&self.velocity),
            position: -rt.act(&self.position),
        }
    }

    pub fn exp(u: &Se23Tangent) -> Self {
        let (w, a, b) = split(u);
        let jl = left_jacobian(&w);
        Self {
            rot: Rot3::exp(&w),
            velocity: jl * a,
            position: jl * b,
        }
    }

    pub fn log(&self) -> Result<Se23Tangent> {
        let w = self.rot.log()?;
        let jinv = left_jacobian_inv(&w);
        Ok(join(&w, &(jinv * self.velocity), &(jinv * self.position)))
    }

    /// Adjoint matrix: `adjoint() * u == vee(T hat(u) T^-1)`.
    pub fn adjoint(&self) -> Matrix9 {
        let r = self.rot.matrix();
        let mut ad = Matrix9::zeros();
        ad.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
        ad.fixed_view_mut::<3, 3>(3, 3).copy_from(r);
        ad.fixed_view_mut::<3, 3>(6, 6).copy_from(r);
        ad.fixed_view_mut::<3, 3>(3, 0)
            .copy_from(&(hat(&self.velocity) * r));
        ad.fixed_view_mut::<3, 3>(6, 0)
            .copy_from(&(hat(&self.position) * r));
        ad
    }

    pub fn orthonormalized(&self) -> Self {
        Self {
            rot: self.rot.orthonormalized(),
            ..*self
        }
    }

    pub fn is_finite(&self) -> bool {
        self.rot.matrix().iter().all(|x| x.is_finite())
            && self.velocity.iter().all(|x| x.is_finite())
            && self.position.iter().all(|x| x.is_finite())
    }
}

impl std::ops::Mul for ExtendedPose {
    type Output = ExtendedPose;
    fn mul(self, rhs: ExtendedPose) -> ExtendedPose {
        self.compose(&rhs)
    }
}

/// Exact one-step solution of the inertial kinematics
/// `R' = R w^`, `v' = R a + g e3`, `x' = v` for inputs held constant over `dt`.
pub fn integrate_inertial(
    pose: &ExtendedPose,
    omega: &Vector3<f64>,
    accel: &Vector3<f64>,
    gravity: f64,
    dt: f64,
) -> ExtendedPose {
    let phi = omega * dt;
    let (_, b, c) = so3::rodrigues_coeffs(phi.norm());
    let k = hat(&phi);
    let k2 = k * k;
    // first and second integrals of exp(s w^) over the step
    let gamma1 = Matrix3::identity() + k * b + k2 * c;
    let theta = phi.norm();
    let c2 = if theta < so3::SMALL_ANGLE {
        let t2 = theta * theta;
        1.0 / 24.0 - t2 / 720.0
    } else {
        (theta * theta + 2.0 * theta.cos() - 2.0) / (2.0 * theta.powi(4))
    };
    let gamma2 = Matrix3::identity() * 0.5 + k * c + k2 * c2;
    let r = pose.rot.matrix();
    let g = Vector3::new(0.0, 0.0, gravity);
    ExtendedPose {
        rot: Rot3::from_matrix_unchecked(r * Rot3::exp(&phi).matrix()),
        velocity: pose.velocity + r * gamma1 * accel * dt + g * dt,
        position: pose.position
            + pose.velocity * dt
            + r * gamma2 * accel * dt * dt
            + g * (0.5 * dt * dt),
    }
}
