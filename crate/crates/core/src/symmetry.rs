//! The range-SLAM symmetry group `G = SE2(3) x SOT(3)^n`, its actions on the state and
//! output spaces, the lift of the inertial/landmark kinematics, and the normal-coordinate
//! chart centred at the origin state.
//!
//! States are `(P, q_1..q_n)` with `P = (R, v, x)` the extended pose and `q_i` the
//! body-frame landmark positions. Group elements `(T, Q_1..Q_n)` act on the right:
//! `phi((T, Q_i), (P, q_i)) = (P T, Q_i^-1 q_i)`.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix3x4, Matrix4x3, Matrix5, Vector3};

use crate::error::{Error, Result};
use crate::lie::se23::{self, Se23Tangent};
use crate::lie::so3::{self, hat, Rot3};
use crate::lie::sot3::{ScaledRot, Sot3Tangent};
use crate::lie::ExtendedPose;

pub const NAV_DIM: usize = 9;
pub const LM_DIM: usize = 3;
pub const LM_ALG_DIM: usize = 4;

/// Dimension of the error coordinates for `n` landmarks.
#[inline]
pub fn state_dim(n: usize) -> usize {
    NAV_DIM + LM_DIM * n
}

/// Dimension of the Lie algebra of `G` for `n` landmarks.
#[inline]
pub fn algebra_dim(n: usize) -> usize {
    NAV_DIM + LM_ALG_DIM * n
}

/// Point of the state manifold: extended pose plus body-frame landmark positions.
#[derive(Clone, Debug, PartialEq)]
pub struct SlamState {
    pub pose: ExtendedPose,
    pub landmarks: Vec<Vector3<f64>>,
}

impl SlamState {
    pub fn new(pose: ExtendedPose, landmarks: Vec<Vector3<f64>>) -> Self {
        Self { pose, landmarks }
    }

    /// Builds the state from world-frame landmark positions, `q_i = R^T (p_i - x)`.
    pub fn from_world(pose: ExtendedPose, world: &[Vector3<f64>]) -> Self {
        let landmarks = world
            .iter()
            .map(|p| pose.rot.matrix().tr_mul(&(p - pose.position)))
            .collect();
        Self { pose, landmarks }
    }

    /// World-frame landmark positions `p_i = R q_i + x`.
    pub fn world_landmarks(&self) -> Vec<Vector3<f64>> {
        self.landmarks
            .iter()
            .map(|q| self.pose.rot.act(q) + self.pose.position)
            .collect()
    }

    pub fn n_landmarks(&self) -> usize {
        self.landmarks.len()
    }
}

/// Element `X = (T, Q_1..Q_n)` of the symmetry group.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetryElement {
    pub nav: ExtendedPose,
    pub lm: Vec<ScaledRot>,
}

/// Lie algebra element: an se2(3) vector plus one sot(3) vector per landmark.
#[derive(Clone, Debug, PartialEq)]
pub struct AlgebraElement {
    pub nav: Se23Tangent,
    pub lm: Vec<Sot3Tangent>,
}

impl AlgebraElement {
    pub fn zeros(n: usize) -> Self {
        Self {
            nav: Se23Tangent::zeros(),
            lm: vec![Sot3Tangent::zeros(); n],
        }
    }

    pub fn to_vector(&self) -> DVector<f64> {
        let mut v = DVector::zeros(algebra_dim(self.lm.len()));
        v.rows_mut(0, NAV_DIM).copy_from(&self.nav);
        for (i, l) in self.lm.iter().enumerate() {
            v.rows_mut(NAV_DIM + LM_ALG_DIM * i, LM_ALG_DIM).copy_from(l);
        }
        v
    }

    pub fn from_vector(v: &DVector<f64>) -> Result<Self> {
        let len = v.len();
        if len < NAV_DIM || !(len - NAV_DIM).is_multiple_of(LM_ALG_DIM) {
            return Err(Error::Dimension(format!("algebra vector of length {len}")));
        }
        let n = (len - NAV_DIM) / LM_ALG_DIM;
        Ok(Self {
            nav: Se23Tangent::from_iterator(v.rows(0, NAV_DIM).iter().copied()),
            lm: (0..n)
                .map(|i| {
                    Sot3Tangent::from_iterator(
                        v.rows(NAV_DIM + LM_ALG_DIM * i, LM_ALG_DIM).iter().copied(),
                    )
                })
                .collect(),
        })
    }

    pub fn scaled(&self, t: f64) -> Self {
        Self {
            nav: self.nav * t,
            lm: self.lm.iter().map(|l| l * t).collect(),
        }
    }
}

impl SymmetryElement {
    pub fn identity(n: usize) -> Self {
        Self {
            nav: ExtendedPose::identity(),
            lm: vec![ScaledRot::identity(); n],
        }
    }

    pub fn n_landmarks(&self) -> usize {
        self.lm.len()
    }

    fn check_dims(&self, n: usize) -> Result<()> {
        if self.lm.len() != n {
            return Err(Error::Dimension(format!(
                "group element has {} landmark factors, expected {n}",
                self.lm.len()
            )));
        }
        Ok(())
    }

    pub fn compose(&self, other: &SymmetryElement) -> Result<Self> {
        other.check_dims(self.lm.len())?;
        Ok(Self {
            nav: self.nav.compose(&other.nav),
            lm: self
                .lm
                .iter()
                .zip(&other.lm)
                .map(|(a, b)| a.compose(b))
                .collect(),
        })
    }

    pub fn inverse(&self) -> Self {
        Self {
            nav: self.nav.inverse(),
            lm: self.lm.iter().map(ScaledRot::inverse).collect(),
        }
    }

    pub fn exp(u: &AlgebraElement) -> Self {
        Self {
            nav: ExtendedPose::exp(&u.nav),
            lm: u.lm.iter().map(ScaledRot::exp).collect(),
        }
    }

    pub fn log(&self) -> Result<AlgebraElement> {
        Ok(AlgebraElement {
            nav: self.nav.log()?,
            lm: self.lm.iter().map(ScaledRot::log).collect::<Result<_>>()?,
        })
    }

    /// Block-diagonal adjoint `diag(Ad_T, Ad_Q1, .., Ad_Qn)`.
    pub fn adjoint(&self) -> DMatrix<f64> {
        let n = self.lm.len();
        let mut ad = DMatrix::zeros(algebra_dim(n), algebra_dim(n));
        ad.view_mut((0, 0), (NAV_DIM, NAV_DIM))
            .copy_from(&self.nav.adjoint());
        for (i, q) in self.lm.iter().enumerate() {
            let o = NAV_DIM + LM_ALG_DIM * i;
            ad.view_mut((o, o), (LM_ALG_DIM, LM_ALG_DIM))
                .copy_from(&q.adjoint());
        }
        ad
    }

    pub fn orthonormalized(&self) -> Self {
        Self {
            nav: self.nav.orthonormalized(),
            lm: self.lm.iter().map(ScaledRot::orthonormalized).collect(),
        }
    }
}

/// The state action `phi((T, Q_i), (P, q_i)) = (P T, c_i^-1 R_i^T q_i)`.
pub fn state_action(x: &SymmetryElement, xi: &SlamState) -> Result<SlamState> {
    x.check_dims(xi.landmarks.len())?;
    Ok(SlamState {
        pose: xi.pose.compose(&x.nav),
        landmarks: x
            .lm
            .iter()
            .zip(&xi.landmarks)
            .map(|(q, p)| q.act(p))
            .collect(),
    })
}

/// Body-frame range output `h(xi) = (|q_1|, .., |q_n|)`.
pub fn output_h(xi: &SlamState) -> Result<Vec<f64>> {
    xi.landmarks
        .iter()
        .enumerate()
        .map(|(index, q)| {
            let r = q.norm();
            if r > 0.0 {
                Ok(r)
            } else {
                Err(Error::ZeroRange { index })
            }
        })
        .collect()
}

/// World-frame form of the output, `|p_i - x|`.
pub fn output_h_world(pose: &ExtendedPose, world: &[Vector3<f64>]) -> Vec<f64> {
    world.iter().map(|p| (p - pose.position).norm()).collect()
}

/// Output action `rho((T, Q_i), y) = (c_i^-1 y_i)`.
pub fn output_action(x: &SymmetryElement, y: &[f64]) -> Result<Vec<f64>> {
    x.check_dims(y.len())?;
    Ok(x.lm.iter().zip(y).map(|(q, yi)| yi / q.scale()).collect())
}

/// Navigation part of the lift: `(U + D) + P^-1 (G - D) P`, written in vector form.
pub fn lift_nav(
    pose: &ExtendedPose,
    omega: &Vector3<f64>,
    accel: &Vector3<f64>,
    gravity: f64,
) -> Se23Tangent {
    let rt = pose.rot.matrix().transpose();
    se23::join(
        omega,
        &(accel + rt * Vector3::new(0.0, 0.0, gravity)),
        &(rt * pose.velocity),
    )
}

/// Landmark part of the lift for body-frame landmark `q` and body-frame velocity
/// `w = R^T v`: `(omega + q^ w / |q|^2, q.w / |q|^2)`.
pub fn lift_landmark(
    q: &Vector3<f64>,
    body_vel: &Vector3<f64>,
    omega: &Vector3<f64>,
) -> Sot3Tangent {
    let q2 = q.norm_squared();
    let rot = omega + q.cross(body_vel) / q2;
    Sot3Tangent::new(rot.x, rot.y, rot.z, q.dot(body_vel) / q2)
}

/// The system lift `Lambda(xi, (omega, a))`.
pub fn lift(
    xi: &SlamState,
    omega: &Vector3<f64>,
    accel: &Vector3<f64>,
    gravity: f64,
) -> Result<AlgebraElement> {
    let body_vel = xi.pose.rot.matrix().tr_mul(&xi.pose.velocity);
    let lm = xi
        .landmarks
        .iter()
        .enumerate()
        .map(|(index, q)| {
            if q.norm_squared() > 0.0 {
                Ok(lift_landmark(q, &body_vel, omega))
            } else {
                Err(Error::ZeroRange { index })
            }
        })
        .collect::<Result<_>>()?;
    Ok(AlgebraElement {
        nav: lift_nav(&xi.pose, omega, accel, gravity),
        lm,
    })
}

/// Matrix form of the navigation lift, built literally from the U, D, G blocks.
pub fn lift_nav_matrix(
    pose: &ExtendedPose,
    omega: &Vector3<f64>,
    accel: &Vector3<f64>,
    gravity: f64,
) -> Matrix5<f64> {
    let mut u = Matrix5::zeros();
    u.fixed_view_mut::<3, 3>(0, 0).copy_from(&hat(omega));
    u.fixed_view_mut::<3, 1>(0, 3).copy_from(accel);
    let mut d = Matrix5::zeros();
    d[(3, 4)] = 1.0;
    let mut g = Matrix5::zeros();
    g[(2, 3)] = gravity;
    let p = pose.to_matrix();
    let p_inv = pose.inverse().to_matrix();
    (u + d) + p_inv * (g - d) * p
}

/// Time derivative of a state under the inertial kinematics and landmark transport.
#[derive(Clone, Debug)]
pub struct StateRate {
    pub rot: Matrix3<f64>,
    pub velocity: Vector3<f64>,
    pub position: Vector3<f64>,
    pub landmarks: Vec<Vector3<f64>>,
}

/// `R' = R w^`, `v' = R a + g e3`, `x' = v`, `q_i' = -w^ q_i - R^T v`.
pub fn dynamics(
    xi: &SlamState,
    omega: &Vector3<f64>,
    accel: &Vector3<f64>,
    gravity: f64,
) -> StateRate {
    let r = xi.pose.rot.matrix();
    let body_vel = r.tr_mul(&xi.pose.velocity);
    StateRate {
        rot: r * hat(omega),
        velocity: r * accel + Vector3::new(0.0, 0.0, gravity),
        position: xi.pose.velocity,
        landmarks: xi
            .landmarks
            .iter()
            .map(|q| -omega.cross(q) - body_vel)
            .collect(),
    }
}

/// Angular tolerance used to detect the antipodal ray `-e3` of the landmark chart.
pub const ANTIPODAL_TOL: f64 = 1e-9;

/// SOT(3) normal coordinates of a body-frame landmark about the origin `e3`.
pub fn sigma_sot3(q: &Vector3<f64>) -> Result<Vector3<f64>> {
    let r = q.norm();
    if !(r > 0.0) {
        return Err(Error::ZeroRange { index: 0 });
    }
    let u = q / r;
    let s = u.x.hypot(u.y);
    let theta = s.atan2(u.z);
    if std::f64::consts::PI - theta < ANTIPODAL_TOL {
        return Err(Error::AntipodalLandmark);
    }
    // theta / sin(theta), finite at the origin direction
    let ratio = if s < so3::SMALL_ANGLE {
        1.0 + theta * theta / 6.0
    } else {
        theta / s
    };
    Ok(Vector3::new(ratio * u.y, -ratio * u.x, -r.ln()))
}

/// Inverse of [`sigma_sot3`]: `q = e^-c3 exp((c1, c2, 0))^T e3`.
pub fn sigma_sot3_inv(c: &Vector3<f64>) -> Result<Vector3<f64>> {
    let w = Vector3::new(c.x, c.y, 0.0);
    if w.norm() >= std::f64::consts::PI - ANTIPODAL_TOL {
        return Err(Error::AntipodalLandmark);
    }
    let dir = Rot3::exp(&w).matrix().tr_mul(&Vector3::z());
    Ok(dir * (-c.z).exp())
}

/// Differential of the landmark chart at `e3`.
pub fn dsigma_origin() -> Matrix3<f64> {
    Matrix3::new(0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, -1.0)
}

/// Origin of the normal coordinates. Landmark origins are fixed at `e3`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Origin {
    pub pose: ExtendedPose,
}

impl Origin {
    pub fn new(pose: ExtendedPose) -> Self {
        Self { pose }
    }

    pub fn landmark() -> Vector3<f64> {
        Vector3::z()
    }

    pub fn state(&self, n: usize) -> SlamState {
        SlamState {
            pose: self.pose,
            landmarks: vec![Self::landmark(); n],
        }
    }
}

/// Normal coordinates `(log(P0^-1 P), sigma(q_1), .., sigma(q_n))`.
pub fn theta(xi: &SlamState, origin: &Origin) -> Result<DVector<f64>> {
    let n = xi.landmarks.len();
    let mut eps = DVector::zeros(state_dim(n));
    let nav = origin.pose.inverse().compose(&xi.pose).log()?;
    eps.rows_mut(0, NAV_DIM).copy_from(&nav);
    for (i, q) in xi.landmarks.iter().enumerate() {
        let c = sigma_sot3(q).map_err(|e| match e {
            Error::ZeroRange { .. } => Error::ZeroRange { index: i },
            other => other,
        })?;
        eps.rows_mut(NAV_DIM + LM_DIM * i, LM_DIM).copy_from(&c);
    }
    Ok(eps)
}

pub fn theta_inv(eps: &DVector<f64>, origin: &Origin) -> Result<SlamState> {
    let len = eps.len();
    if len < NAV_DIM || !(len - NAV_DIM).is_multiple_of(LM_DIM) {
        return Err(Error::Dimension(format!("coordinate vector of length {len}")));
    }
    let n = (len - NAV_DIM) / LM_DIM;
    let nav = Se23Tangent::from_iterator(eps.rows(0, NAV_DIM).iter().copied());
    let landmarks = (0..n)
        .map(|i| {
            let c = Vector3::from_iterator(eps.rows(NAV_DIM + LM_DIM * i, LM_DIM).iter().copied());
            sigma_sot3_inv(&c)
        })
        .collect::<Result<_>>()?;
    Ok(SlamState {
        pose: origin.pose.compose(&ExtendedPose::exp(&nav)),
        landmarks,
    })
}

/// Differential of `E -> phi(E, origin)` at the identity for a single landmark,
/// `(w, s) -> -w^ e3 - s e3`.
pub fn dphi_landmark_origin() -> Matrix3x4<f64> {
    Matrix3x4::new(
        0.0, -1.0, 0.0, 0.0, //
        1.0, 0.0, 0.0, 0.0, //
        0.0, 0.0, 0.0, -1.0,
    )
}

/// Moore-Penrose right-inverse of [`dphi_landmark_origin`].
pub fn dphi_landmark_origin_pinv() -> Matrix4x3<f64> {
    let d = dphi_landmark_origin();
    let ddt = d * d.transpose();
    d.transpose() * ddt.try_inverse().expect("full row rank")
}

/// Differential of `E -> phi(E, origin)` at the identity, `(9+4n) -> (9+3n)`.
///
/// The navigation block is expressed in exponential coordinates at the origin pose
/// (`P0 exp(u)`), so it is the identity.
pub fn dphi_origin(n: usize) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(state_dim(n), algebra_dim(n));
    d.view_mut((0, 0), (NAV_DIM, NAV_DIM))
        .fill_with_identity();
    let block = dphi_landmark_origin();
    for i in 0..n {
        d.view_mut((NAV_DIM + LM_DIM * i, NAV_DIM + LM_ALG_DIM * i), (LM_DIM, LM_ALG_DIM))
            .copy_from(&block);
    }
    d
}

pub fn dphi_origin_pinv(n: usize) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(algebra_dim(n), state_dim(n));
    d.view_mut((0, 0), (NAV_DIM, NAV_DIM))
        .fill_with_identity();
    let block = dphi_landmark_origin_pinv();
    for i in 0..n {
        d.view_mut((NAV_DIM + LM_ALG_DIM * i, NAV_DIM + LM_DIM * i), (LM_ALG_DIM, LM_DIM))
            .copy_from(&block);
    }
    d
}

/// Inverse differential of the chart at the origin, block diagonal in `(9+3n)`.
pub fn dtheta_origin_inv(n: usize) -> DMatrix<f64> {
    let mut d = DMatrix::identity(state_dim(n), state_dim(n));
    let block = dsigma_origin().transpose();
    for i in 0..n {
        let o = NAV_DIM + LM_DIM * i;
        d.view_mut((o, o), (LM_DIM, LM_DIM)).copy_from(&block);
    }
    d
}

/// Lifts a correction expressed in normal coordinates at the origin to the algebra:
/// `Dphi^dagger . Dtheta^-1 . delta`.
pub fn coords_to_algebra(delta: &DVector<f64>) -> Result<AlgebraElement> {
    let len = delta.len();
    if len < NAV_DIM || !(len - NAV_DIM).is_multiple_of(LM_DIM) {
        return Err(Error::Dimension(format!("coordinate vector of length {len}")));
    }
    let n = (len - NAV_DIM) / LM_DIM;
    let lm_map = dphi_landmark_origin_pinv()
        * dsigma_origin()
            .try_inverse()
            .expect("chart differential is invertible");
    Ok(AlgebraElement {
        nav: Se23Tangent::from_iterator(delta.rows(0, NAV_DIM).iter().copied()),
        lm: (0..n)
            .map(|i| {
                let d = Vector3::from_iterator(delta.rows(NAV_DIM + LM_DIM * i, LM_DIM).iter().copied());
                lm_map * d
            })
            .collect(),
    })
}

/// A group element `X` with `phi(X, from) == to` (constructive transitivity).
pub fn transitivity_witness(from: &SlamState, to: &SlamState) -> Result<SymmetryElement> {
    if from.landmarks.len() != to.landmarks.len() {
        return Err(Error::Dimension("landmark counts differ".into()));
    }
    Ok(SymmetryElement {
        nav: from.pose.inverse().compose(&to.pose),
        lm: from
            .landmarks
            .iter()
            .zip(&to.landmarks)
            .map(|(a, b)| ScaledRot::mapping(a, b))
            .collect::<Result<_>>()?,
    })
}
