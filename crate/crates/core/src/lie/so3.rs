//! The rotation group SO(3) stored as direction-cosine matrices.

use nalgebra::{Matrix3, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

/// Below this angle the closed-form coefficients switch to their Taylor series.
pub const SMALL_ANGLE: f64 = 1e-6;

/// Rotations closer than this to pi have no well-defined logarithm.
pub const ANTIPODAL_MARGIN: f64 = 1e-6;

/// Skew-symmetric matrix with `hat(u) * w == u.cross(w)`.
#[inline]
pub fn hat(u: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -u.z, u.y, u.z, 0.0, -u.x, -u.y, u.x, 0.0)
}

/// Inverse of [`hat`]; reads the three independent entries of a skew matrix.
#[inline]
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Coefficients of the Rodrigues-type series used by exp/log on SO(3) and SE2(3).
///
/// Returns `(sin t / t, (1 - cos t) / t^2, (t - sin t) / t^3)` evaluated at `t`.
pub(crate) fn rodrigues_coeffs(theta: f64) -> (f64, f64, f64) {
    if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        let t4 = t2 * t2;
        (
            1.0 - t2 / 6.0 + t4 / 120.0,
            0.5 - t2 / 24.0 + t4 / 720.0,
            1.0 / 6.0 - t2 / 120.0 + t4 / 5040.0,
        )
    } else {
        let half = 0.5 * theta;
        let sinc_half = half.sin() / half;
        (
            theta.sin() / theta,
            0.5 * sinc_half * sinc_half,
            (theta - theta.sin()) / (theta * theta * theta),
        )
    }
}

/// Left Jacobian of SO(3), `I + B u^ + C (u^)^2`.
pub fn left_jacobian(u: &Vector3<f64>) -> Matrix3<f64> {
    let (_, b, c) = rodrigues_coeffs(u.norm());
    let k = hat(u);
    Matrix3::identity() + k * b + k * k * c
}

/// Inverse of [`left_jacobian`].
pub fn left_jacobian_inv(u: &Vector3<f64>) -> Matrix3<f64> {
    let theta = u.norm();
    let d = if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
    } else {
        let half = 0.5 * theta;
        (1.0 - half / half.tan()) / (theta * theta)
    };
    let k = hat(u);
    Matrix3::identity() - k * 0.5 + k * k * d
}

/// An element of SO(3).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rot3(Matrix3<f64>);

impl Default for Rot3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rot3 {
    pub fn identity() -> Self {
        Rot3(Matrix3::identity())
    }

    /// Wraps a matrix without checking orthonormality.
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Rot3(m)
    }

    /// Wraps a matrix, rejecting anything that is not a proper rotation within `tol`.
    pub fn try_from_matrix(m: Matrix3<f64>, tol: f64) -> Result<Self> {
        let defect = (m.transpose() * m - Matrix3::identity()).abs().max();
        let det = m.determinant();
        if !m.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("rotation matrix"));
        }
        if defect > tol || (det - 1.0).abs() > tol {
            return Err(Error::InvalidArgument(format!(
                "not a rotation: orthogonality defect {defect:e}, det {det}"
            )));
        }
        Ok(Rot3(m))
    }

    /// Rotation from a (w, x, y, z) quaternion; the quaternion is normalised first.
    pub fn from_quaternion(w: f64, x: f64, y: f64, z: f64) -> Self {
        let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(w, x, y, z));
        Rot3(*q.to_rotation_matrix().matrix())
    }

    /// Unit quaternion (w, x, y, z) with non-negative scalar part.
    pub fn to_quaternion(&self) -> [f64; 4] {
        let rot = nalgebra::Rotation3::from_matrix_unchecked(self.0);
        let q = UnitQuaternion::from_rotation_matrix(&rot);
        let s = if q.w < 0.0 { -1.0 } else { 1.0 };
        [s * q.w, s * q.i, s * q.j, s * q.k]
    }

    #[inline]
    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn exp(u: &Vector3<f64>) -> Self {
        let (a, b, _) = rodrigues_coeffs(u.norm());
        let k = hat(u);
        Rot3(Matrix3::identity() + k * a + k * k * b)
    }

    /// Logarithm; fails for rotation angles within [`ANTIPODAL_MARGIN`] of pi.
    pub fn log(&self) -> Result<Vector3<f64>> {
        let m = &self.0;
        let axis2 = Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
        let sin_t = 0.5 * axis2.norm();
        let cos_t = 0.5 * (m.trace() - 1.0);
        let theta = sin_t.atan2(cos_t);
        if std::f64::consts::PI - theta < ANTIPODAL_MARGIN {
            return Err(Error::AntipodalRotation { angle: theta });
        }
        let scale = if theta < SMALL_ANGLE {
            0.5 * (1.0 + theta * theta / 6.0)
        } else {
            0.5 * theta / theta.sin()
        };
        Ok(axis2 * scale)
    }

    #[inline]
    pub fn inverse(&self) -> Self {
        Rot3(self.0.transpose())
    }

    #[inline]
    pub fn compose(&self, other: &Rot3) -> Self {
        Rot3(self.0 * other.0)
    }

    #[inline]
    pub fn act(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    /// Rotation angle in [0, pi].
    pub fn angle(&self) -> f64 {
        let cos_t = (0.5 * (self.0.trace() - 1.0)).clamp(-1.0, 1.0);
        cos_t.acos()
    }

    /// Projects the stored matrix back onto SO(3) (closest rotation in Frobenius norm).
    pub fn orthonormalized(&self) -> Self {
        let svd = self.0.svd(true, true);
        let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut d = Matrix3::identity();
        if (u * vt).determinant() < 0.0 {
            d[(2, 2)] = -1.0;
        }
        Rot3(u * d * vt)
    }

    /// Smallest rotation taking direction `from` onto direction `to`.
    ///
    /// Both inputs are normalised internally. Antiparallel inputs pick an arbitrary
    /// axis orthogonal to `from`.
    pub fn between(from: &Vector3<f64>, to: &Vector3<f64>) -> Self {
        let a = from.normalize();
        let b = to.normalize();
        let axis = a.cross(&b);
        let s = axis.norm();
        let c = a.dot(&b);
        if s < 1e-12 {
            if c > 0.0 {
                return Rot3::identity();
            }
            let helper = if a.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
            let perp = a.cross(&helper).normalize();
            return Rot3::exp(&(perp * std::f64::consts::PI));
        }
        Rot3::exp(&(axis / s * s.atan2(c)))
    }
}

impl std::ops::Mul for Rot3 {
    type Output = Rot3;
    fn mul(self, rhs: Rot3) -> Rot3 {
        self.compose(&rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hat_basics() {
        assert_eq!(hat(&Vector3::zeros()), Matrix3::zeros());
        let e1 = Vector3::x();
        let e3 = Vector3::z();
        assert_eq!(hat(&e3) * e1, Vector3::y());
        let u = Vector3::new(0.3, -1.2, 2.5);
        assert_eq!(vee(&hat(&u)), u);
        assert_eq!(hat(&u).transpose(), -hat(&u));
    }

    #[test]
    fn exp_identity_and_quarter_turn() {
        assert_eq!(Rot3::exp(&Vector3::zeros()).matrix(), &Matrix3::identity());
        let r = Rot3::exp(&(Vector3::z() * std::f64::consts::FRAC_PI_2));
        assert!((r.act(&Vector3::x()) - Vector3::y()).norm() < 1e-15);
    }

    #[test]
    fn log_rejects_half_turn() {
        let r = Rot3::exp(&(Vector3::x() * std::f64::consts::PI));
        assert!(matches!(r.log(), Err(Error::AntipodalRotation { .. })));
        let r = Rot3::exp(&(Vector3::x() * 3.0));
        assert!((r.log().unwrap() - Vector3::x() * 3.0).norm() < 1e-12);
    }

    #[test]
    fn between_maps_directions() {
        let a = Vector3::new(1.0, 2.0, -0.5);
        let b = Vector3::new(-3.0, 0.1, 0.4);
        let r = Rot3::between(&a, &b);
        assert!((r.act(&a.normalize()) - b.normalize()).norm() < 1e-12);
        let r = Rot3::between(&a, &(-a));
        assert!((r.act(&a) + a).norm() < 1e-12);
    }

    #[test]
    fn jacobian_inverse() {
        let u = Vector3::new(0.4, -0.9, 1.7);
        let prod = left_jacobian(&u) * left_jacobian_inv(&u);
        assert!((prod - Matrix3::identity()).norm() < 1e-12);
    }

    #[test]
    fn orthonormalize_fixes_drift() {
        let mut m = *Rot3::exp(&Vector3::new(0.1, 0.2, 0.3)).matrix();
        m[(0, 1)] += 1e-6;
        let r = Rot3::from_matrix_unchecked(m).orthonormalized();
        assert!(Rot3::try_from_matrix(*r.matrix(), 1e-12).is_ok());
    }
}
