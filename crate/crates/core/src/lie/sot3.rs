//! Scaled rotations SOT(3) = SO(3) x R+.
//!
//! `Q = c R` acts on points from the right through `p -> Q^-1 p = c^-1 R^T p`.
//! Tangent vectors are `(w, s)` with `exp(w, s) = (exp(w), e^s)`.

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};

use super::so3::{hat, Rot3};
use crate::error::{Error, Result};

pub type Sot3Tangent = Vector4<f64>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaledRot {
    pub rot: Rot3,
    scale: f64,
}

impl Default for ScaledRot {
    fn default() -> Self {
        Self::identity()
    }
}

impl ScaledRot {
    pub fn new(rot: Rot3, scale: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "SOT(3) scale must be positive and finite, got {scale}"
            )));
        }
        Ok(Self { rot, scale })
    }

    pub fn identity() -> Self {
        Self {
            rot: Rot3::identity(),
            scale: 1.0,
        }
    }

    #[inline]
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// The 3x3 matrix `c R`.
    pub fn matrix(&self) -> Matrix3<f64> {
        self.rot.matrix() * self.scale
    }

    /// 4x4 block form `diag(R, c)` used for the matrix-log consistency checks.
    pub fn block_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(self.rot.matrix());
        m[(3, 3)] = self.scale;
        m
    }

    pub fn compose(&self, other: &ScaledRot) -> Self {
        Self {
            rot: self.rot.compose(&other.rot),
            scale: self.scale * other.scale,
        }
    }

    pub fn inverse(&self) -> Self {
        Self {
            rot: self.rot.inverse(),
            scale: 1.0 / self.scale,
        }
    }

    pub fn exp(u: &Sot3Tangent) -> Self {
        Self {
            rot: Rot3::exp(&u.xyz()),
            scale: u.w.exp(),
        }
    }

    pub fn log(&self) -> Result<Sot3Tangent> {
        let w = self.rot.log()?;
        Ok(Vector4::new(w.x, w.y, w.z, self.scale.ln()))
    }

    /// Right action on R^3: `p -> c^-1 R^T p`.
    pub fn act(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rot.matrix().tr_mul(p) / self.scale
    }

    /// Adjoint on `(w, s)`: the rotation block rotates, the scale block is fixed.
    pub fn adjoint(&self) -> Matrix4<f64> {
        let mut ad = Matrix4::identity();
        ad.fixed_view_mut::<3, 3>(0, 0).copy_from(self.rot.matrix());
        ad
    }

    pub fn orthonormalized(&self) -> Self {
        Self {
            rot: self.rot.orthonormalized(),
            scale: self.scale,
        }
    }

    /// Minimal element with `act(from) == to`: geodesic rotation plus range ratio.
    pub fn mapping(from: &Vector3<f64>, to: &Vector3<f64>) -> Result<Self> {
        let (nf, nt) = (from.norm(), to.norm());
        if !(nf > 0.0 && nt > 0.0) {
            return Err(Error::ZeroRange { index: 0 });
        }
        // c^-1 R^T from = to  <=>  R (to/|to|) = from/|from|, c = |from| / |to|
        Self::new(Rot3::between(to, from), nf / nt)
    }
}

/// Lie-algebra matrix `w^ + s I` of a tangent vector, acting on the 3x3 form `c R`.
pub fn hat4(u: &Sot3Tangent) -> Matrix3<f64> {
    hat(&u.xyz()) + Matrix3::identity() * u.w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_zero_is_identity() {
        let q = ScaledRot::exp(&Sot3Tangent::zeros());
        assert_eq!(q, ScaledRot::identity());
    }

    #[test]
    fn pure_scale_action() {
        let q = ScaledRot::new(Rot3::identity(), 2.0).unwrap();
        assert_eq!(q.act(&Vector3::z()), Vector3::z() * 0.5);
    }

    #[test]
    fn rejects_nonpositive_scale() {
        assert!(ScaledRot::new(Rot3::identity(), 0.0).is_err());
        assert!(ScaledRot::new(Rot3::identity(), -1.0).is_err());
    }

    #[test]
    fn mapping_hits_target() {
        let a = Vector3::new(1.0, -2.0, 0.3);
        let b = Vector3::new(-4.0, 0.5, 7.0);
        let q = ScaledRot::mapping(&a, &b).unwrap();
        assert!((q.act(&a) - b).norm() < 1e-12);
    }
}
