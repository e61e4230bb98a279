//! Equivariant filter for range-only SLAM.
//!
//! The observer state is a group element `X = (T, Q_1..Q_n)` and the state estimate is
//! `phi(X, origin)`. Uncertainty lives in the normal coordinates of the origin: nine
//! navigation coordinates followed by three SOT(3) coordinates per landmark, landmarks
//! ordered by ascending id.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, SMatrix, Vector3};

use crate::error::{Error, Result};
use crate::lie::se23::{Matrix9, Se23Tangent};
use crate::lie::so3::hat;
use crate::lie::sot3::{ScaledRot, Sot3Tangent};
use crate::lie::{integrate_inertial, ExtendedPose, Rot3};
use crate::symmetry::{
    self, dsigma_origin, lift_landmark, sigma_sot3, state_dim, AlgebraElement, Origin,
    SlamState, SymmetryElement, LM_DIM, NAV_DIM,
};

pub const DEFAULT_GRAVITY: f64 = 9.81;

/// Group rotations are projected back onto SO(3) after this many propagation steps.
const RENORMALIZE_EVERY: u64 = 1000;

/// Central-difference step for the reset transport.
const RESET_FD_STEP: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImuSample {
    pub t: f64,
    pub omega: Vector3<f64>,
    pub accel: Vector3<f64>,
}

impl ImuSample {
    pub fn new(t: f64, omega: Vector3<f64>, accel: Vector3<f64>) -> Self {
        Self { t, omega, accel }
    }

    /// Linear interpolation between two samples at time `t`.
    pub fn lerp(&self, other: &ImuSample, t: f64) -> ImuSample {
        let span = other.t - self.t;
        let s = if span > 0.0 { (t - self.t) / span } else { 0.0 };
        ImuSample {
            t,
            omega: self.omega + (other.omega - self.omega) * s,
            accel: self.accel + (other.accel - self.accel) * s,
        }
    }

    fn is_finite(&self) -> bool {
        self.t.is_finite()
            && self.omega.iter().all(|x| x.is_finite())
            && self.accel.iter().all(|x| x.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RangeSample {
    pub t: f64,
    pub landmark_id: u32,
    pub range: f64,
}

impl RangeSample {
    pub fn new(t: f64, landmark_id: u32, range: f64) -> Self {
        Self {
            t,
            landmark_id,
            range,
        }
    }
}

/// Process and measurement gains plus the initial Riccati blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseConfig {
    /// Input gain `M`: gyro (rad/s)^2/Hz on the first three axes, accel (m/s^2)^2/Hz on the rest.
    pub input_gain: Matrix6<f64>,
    /// Per-range variance (m^2).
    pub range_variance: f64,
    /// Initial navigation block in exponential coordinates.
    pub initial_nav: Matrix9,
    /// Initial block for each new landmark, in (rad^2, rad^2, log(m)^2).
    pub initial_landmark: Matrix3<f64>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self::from_diagonals(4e-8, 4e-6, 0.25 * 0.25, [1e-8, 1e-8, 1e-8], [3.0, 3.0, 3.0])
    }
}

impl NoiseConfig {
    /// `nav` gives one variance for each of the rotation, velocity and position blocks.
    pub fn from_diagonals(
        gyro_psd: f64,
        accel_psd: f64,
        range_variance: f64,
        nav: [f64; 3],
        landmark: [f64; 3],
    ) -> Self {
        let input_gain = Matrix6::from_diagonal(&SMatrix::<f64, 6, 1>::from_column_slice(&[
            gyro_psd, gyro_psd, gyro_psd, accel_psd, accel_psd, accel_psd,
        ]));
        let mut nav_diag = Se23Tangent::zeros();
        for (block, var) in nav.iter().enumerate() {
            for k in 0..3 {
                nav_diag[3 * block + k] = *var;
            }
        }
        Self {
            input_gain,
            range_variance,
            initial_nav: Matrix9::from_diagonal(&nav_diag),
            initial_landmark: Matrix3::from_diagonal(&Vector3::from(landmark)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let spd6 = self.input_gain.cholesky().is_some();
        let spd9 = self.initial_nav.cholesky().is_some();
        let spd3 = self.initial_landmark.cholesky().is_some();
        if !(spd6 && spd9 && spd3 && self.range_variance > 0.0) {
            return Err(Error::Config(
                "noise matrices must be positive definite and range variance positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResetMode {
    None,
    #[default]
    NumericalTransport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EqfConfig {
    pub noise: NoiseConfig,
    pub gravity: f64,
    pub reset_mode: ResetMode,
    /// Optional Mahalanobis gate (squared distance) applied per range; `None` disables it.
    pub gate: Option<f64>,
}

impl Default for EqfConfig {
    fn default() -> Self {
        Self {
            noise: NoiseConfig::default(),
            gravity: DEFAULT_GRAVITY,
            reset_mode: ResetMode::default(),
            gate: None,
        }
    }
}

/// Observer state plus Riccati matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterBelief {
    pub xhat: SymmetryElement,
    pub sigma: DMatrix<f64>,
    /// Landmark ids, ascending; position `i` owns coordinates `9 + 3i .. 9 + 3i + 3`.
    pub ids: Vec<u32>,
    pub origin: Origin,
    steps: u64,
}

impl FilterBelief {
    /// Belief with no landmarks whose navigation estimate equals `nav_estimate`.
    pub fn new(origin: Origin, nav_estimate: ExtendedPose, sigma_nav: Matrix9) -> Self {
        let mut sigma = DMatrix::zeros(NAV_DIM, NAV_DIM);
        sigma.copy_from(&sigma_nav);
        Self {
            xhat: SymmetryElement {
                nav: origin.pose.inverse().compose(&nav_estimate),
                lm: Vec::new(),
            },
            sigma,
            ids: Vec::new(),
            origin,
            steps: 0,
        }
    }

    pub fn from_parts(
        xhat: SymmetryElement,
        sigma: DMatrix<f64>,
        ids: Vec<u32>,
        origin: Origin,
    ) -> Result<Self> {
        let n = xhat.n_landmarks();
        if ids.len() != n || sigma.nrows() != state_dim(n) || sigma.ncols() != state_dim(n) {
            return Err(Error::Dimension(format!(
                "{} landmark factors, {} ids, Riccati {}x{}",
                n,
                ids.len(),
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        if ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("landmark ids must be strictly ascending".into()));
        }
        Ok(Self {
            xhat,
            sigma,
            ids,
            origin,
            steps: 0,
        })
    }

    pub fn n_landmarks(&self) -> usize {
        self.ids.len()
    }

    pub fn dim(&self) -> usize {
        state_dim(self.ids.len())
    }

    pub fn index_of(&self, id: u32) -> Option<usize> {
        self.ids.binary_search(&id).ok()
    }

    /// `xi_hat = phi(X_hat, origin)`.
    pub fn state_estimate(&self) -> SlamState {
        symmetry::state_action(&self.xhat, &self.origin.state(self.n_landmarks()))
            .expect("belief dimensions are consistent")
    }

    pub fn nav_estimate(&self) -> ExtendedPose {
        self.origin.pose.compose(&self.xhat.nav)
    }

    /// World-frame landmark estimates `p_i = R q_i + x`, paired with their ids.
    pub fn world_landmarks(&self) -> Vec<(u32, Vector3<f64>)> {
        let xi = self.state_estimate();
        self.ids.iter().copied().zip(xi.world_landmarks()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.xhat.nav.is_finite()
            && self
                .xhat
                .lm
                .iter()
                .all(|q| q.scale().is_finite() && q.rot.matrix().iter().all(|x| x.is_finite()))
            && self.sigma.iter().all(|x| x.is_finite())
    }
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// Navigation error matrix in world-frame right-invariant coordinates,
/// `eps_dot = A0 eps` with `eps = log(P P_hat^-1)`.
pub(crate) fn nav_state_matrix_world(gravity: f64) -> Matrix9 {
    let mut a = Matrix9::zeros();
    a.fixed_view_mut::<3, 3>(3, 0)
        .copy_from(&hat(&Vector3::new(0.0, 0.0, gravity)));
    a.fixed_view_mut::<3, 3>(6, 3)
        .copy_from(&Matrix3::identity());
    a
}

/// Navigation input matrix for the right-invariant error of pose `p`.
pub(crate) fn nav_input_matrix(p: &ExtendedPose) -> SMatrix<f64, 9, 6> {
    p.adjoint().fixed_columns::<6>(0).into_owned()
}

/// Second-order transition `I + dt A + dt^2 A^2 / 2`.
pub(crate) fn transition(a: &DMatrix<f64>, dt: f64) -> DMatrix<f64> {
    let n = a.nrows();
    let a_dt = a * dt;
    let mut phi = DMatrix::identity(n, n);
    phi += &a_dt;
    phi += &a_dt * &a_dt * 0.5;
    phi
}

/// `Sigma <- Phi Sigma Phi^T + dt B M B^T`, symmetrised.
pub(crate) fn riccati_step(
    sigma: &DMatrix<f64>,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    m: &Matrix6<f64>,
    dt: f64,
) -> DMatrix<f64> {
    let phi = transition(a, dt);
    let mut out = &phi * sigma * phi.transpose();
    let m_dyn = DMatrix::from_column_slice(6, 6, m.as_slice());
    out += b * m_dyn * b.transpose() * dt;
    symmetrize(&mut out);
    out
}

/// Discrete Kalman correction in Joseph form. Returns `(delta, posterior)`.
pub(crate) fn kalman_correct(
    sigma: &DMatrix<f64>,
    c: &DMatrix<f64>,
    innovation: &DVector<f64>,
    range_variance: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let k_rows = c.nrows();
    let n_cov = DMatrix::identity(k_rows, k_rows) * range_variance;
    let sct = sigma * c.transpose();
    let s = c * &sct + &n_cov;
    let chol = s.cholesky().ok_or(Error::SingularInnovation)?;
    let gain = chol.solve(&sct.transpose()).transpose();
    let delta = &gain * innovation;
    let dim = sigma.nrows();
    let i_kc = DMatrix::identity(dim, dim) - &gain * c;
    let mut post = &i_kc * sigma * i_kc.transpose() + &gain * n_cov * gain.transpose();
    symmetrize(&mut post);
    Ok((delta, post))
}

/// Landmark chart inverse without the injectivity check; used only where the point is
/// immediately pushed back through the chart.
fn sigma_exp(c: &Vector3<f64>) -> Vector3<f64> {
    let w = Vector3::new(c.x, c.y, 0.0);
    Rot3::exp(&w).matrix().tr_mul(&Vector3::z()) * (-c.z).exp()
}

/// Drives the filter. Holds configuration only; beliefs are passed in and returned.
#[derive(Clone, Debug, Default)]
pub struct Eqf {
    pub config: EqfConfig,
}

impl Eqf {
    pub fn new(config: EqfConfig) -> Self {
        Self { config }
    }

    /// Fresh belief at the given navigation estimate with the configured initial Riccati block.
    pub fn initial_belief(&self, origin: Origin, nav_estimate: ExtendedPose) -> FilterBelief {
        FilterBelief::new(origin, nav_estimate, self.config.noise.initial_nav)
    }

    /// State matrix `A_t` of the error dynamics in normal coordinates.
    pub fn mat_a(&self, b: &FilterBelief, _u: &ImuSample) -> DMatrix<f64> {
        let n = b.n_landmarks();
        let dim = state_dim(n);
        let mut a = DMatrix::zeros(dim, dim);
        let ad_origin = b.origin.pose.adjoint();
        let ad_origin_inv = b.origin.pose.inverse().adjoint();
        let a_nav = ad_origin_inv * nav_state_matrix_world(self.config.gravity) * ad_origin;
        a.view_mut((0, 0), (NAV_DIM, NAV_DIM)).copy_from(&a_nav);

        let xi = b.state_estimate();
        let r_hat = xi.pose.rot.matrix();
        let body_vel = r_hat.tr_mul(&xi.pose.velocity);
        let dtheta = dsigma_origin();
        let dtheta_inv = dtheta.transpose();
        // velocity rows of Ad(P0): world-frame velocity error as a function of eps_nav
        let vel_rows = ad_origin.fixed_rows::<3>(3).into_owned();
        for (i, (q_grp, q)) in b.xhat.lm.iter().zip(&xi.landmarks).enumerate() {
            let qm = q_grp.matrix();
            let q_inv = q_grp.inverse().matrix();
            let q2 = q.norm_squared();
            let qx = hat(q);
            let row = NAV_DIM + LM_DIM * i;

            let a_qv = dtheta * qm * (qx * qx - q * q.transpose()) * r_hat.transpose() / q2;
            a.view_mut((row, 0), (LM_DIM, NAV_DIM))
                .copy_from(&(a_qv * vel_rows));

            let qxw = q.cross(&body_vel);
            let rot_part = qx * (hat(&body_vel) / q2 + qxw * q.transpose() * (2.0 / (q2 * q2)));
            let scale_part = q
                * (body_vel.transpose() / q2
                    - q.transpose() * (2.0 * q.dot(&body_vel) / (q2 * q2)));
            let a_qq = -(dtheta * qm * (rot_part + scale_part) * q_inv * dtheta_inv);
            a.view_mut((row, row), (LM_DIM, LM_DIM)).copy_from(&a_qq);
        }
        a
    }

    /// Input matrix `B_t` (columns: gyro, accelerometer).
    pub fn mat_b(&self, b: &FilterBelief, _u: &ImuSample) -> DMatrix<f64> {
        let n = b.n_landmarks();
        let mut m = DMatrix::zeros(state_dim(n), 6);
        m.view_mut((0, 0), (NAV_DIM, 6))
            .copy_from(&nav_input_matrix(&b.xhat.nav));
        let xi = b.state_estimate();
        let dtheta = dsigma_origin();
        for (i, (q_grp, q)) in b.xhat.lm.iter().zip(&xi.landmarks).enumerate() {
            let block = dtheta * q_grp.matrix() * hat(q);
            m.view_mut((NAV_DIM + LM_DIM * i, 0), (LM_DIM, 3))
                .copy_from(&block);
        }
        m
    }

    /// Equivariant output matrix `C*` for one epoch of ranges (one row per sample).
    pub fn mat_cstar(&self, b: &FilterBelief, ys: &[RangeSample]) -> Result<DMatrix<f64>> {
        let xi = b.state_estimate();
        let mut c = DMatrix::zeros(ys.len(), b.dim());
        for (row, y) in ys.iter().enumerate() {
            let i = b
                .index_of(y.landmark_id)
                .ok_or(Error::UnknownLandmark(y.landmark_id))?;
            let y_hat = xi.landmarks[i].norm();
            c[(row, NAV_DIM + LM_DIM * i + 2)] = -0.5 * (y.range + y_hat);
        }
        Ok(c)
    }

    /// One IMU step of length `dt` with the input held at `u`.
    pub fn propagate(&self, b: &FilterBelief, u: &ImuSample, dt: f64) -> Result<FilterBelief> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidArgument(format!("propagation step {dt}")));
        }
        if !u.is_finite() {
            return Err(Error::NonFinite("IMU sample"));
        }
        let g = self.config.gravity;
        let a = self.mat_a(b, u);
        let bm = self.mat_b(b, u);
        let sigma = riccati_step(&b.sigma, &a, &bm, &self.config.noise.input_gain, dt);

        let xi = b.state_estimate();
        let pose = xi.pose;
        let pose_next = integrate_inertial(&pose, &u.omega, &u.accel, g, dt);
        let pose_mid = integrate_inertial(&pose, &u.omega, &u.accel, g, 0.5 * dt);
        let body_vel_mid = pose_mid.rot.matrix().tr_mul(&pose_mid.velocity);

        let mut lm = Vec::with_capacity(b.n_landmarks());
        for (index, (q_grp, q)) in b.xhat.lm.iter().zip(&xi.landmarks).enumerate() {
            if q.norm_squared() == 0.0 {
                return Err(Error::ZeroRange { index });
            }
            // landmarks are static in the world frame
            let p_world = pose.rot.act(q) + pose.position;
            let q_mid = pose_mid.rot.matrix().tr_mul(&(p_world - pose_mid.position));
            let q_next = pose_next.rot.matrix().tr_mul(&(p_world - pose_next.position));
            if q_mid.norm_squared() == 0.0 || q_next.norm_squared() == 0.0 {
                return Err(Error::ZeroRange { index });
            }
            // midpoint step of Q' = Q Lambda(xi_hat, u), then snap onto the exact transport
            let step = lift_landmark(&q_mid, &body_vel_mid, &u.omega) * dt;
            let q_grp_next = q_grp.compose(&ScaledRot::exp(&step));
            let drift = ScaledRot::mapping(&q_grp_next.act(&Vector3::z()), &q_next)?;
            lm.push(q_grp_next.compose(&drift));
        }

        let mut xhat = SymmetryElement {
            nav: b.origin.pose.inverse().compose(&pose_next),
            lm,
        };
        let steps = b.steps + 1;
        if steps.is_multiple_of(RENORMALIZE_EVERY) {
            xhat = xhat.orthonormalized();
        }
        let out = FilterBelief {
            xhat,
            sigma,
            ids: b.ids.clone(),
            origin: b.origin,
            steps,
        };
        if !out.is_finite() {
            return Err(Error::NonFinite("propagated belief"));
        }
        Ok(out)
    }

    /// Measurement update with every range of one epoch, followed by the reset.
    pub fn update(&self, b: &FilterBelief, ys: &[RangeSample]) -> Result<FilterBelief> {
        if ys.is_empty() {
            return Ok(b.clone());
        }
        for y in ys {
            if !(y.range > 0.0) || !y.range.is_finite() {
                return Err(Error::NonPositiveRange {
                    id: y.landmark_id,
                    range: y.range,
                });
            }
        }
        let xi = b.state_estimate();
        let mut c = self.mat_cstar(b, ys)?;
        let mut innovation = DVector::zeros(ys.len());
        for (row, y) in ys.iter().enumerate() {
            let i = b.index_of(y.landmark_id).expect("checked by mat_cstar");
            innovation[row] = y.range - xi.landmarks[i].norm();
        }
        if let Some(gate) = self.config.gate {
            for row in 0..ys.len() {
                let cr = c.row(row).into_owned();
                let s = (&cr * &b.sigma * cr.transpose())[(0, 0)] + self.config.noise.range_variance;
                if innovation[row] * innovation[row] / s > gate {
                    c.row_mut(row).fill(0.0);
                    innovation[row] = 0.0;
                }
            }
        }
        let (delta, sigma) =
            kalman_correct(&b.sigma, &c, &innovation, self.config.noise.range_variance)?;
        let correction = symmetry::coords_to_algebra(&delta)?;
        let xhat = SymmetryElement::exp(&correction).compose(&b.xhat)?;
        let posterior = FilterBelief {
            xhat,
            sigma,
            ids: b.ids.clone(),
            origin: b.origin,
            steps: b.steps,
        };
        let out = match self.config.reset_mode {
            ResetMode::None => posterior,
            ResetMode::NumericalTransport => self.reset(&posterior, &correction),
        };
        if !out.is_finite() {
            return Err(Error::NonFinite("updated belief"));
        }
        Ok(out)
    }

    /// Transports the Riccati matrix through the re-centring of the error coordinates
    /// after the observer absorbed the correction `delta`.
    pub fn reset(&self, b: &FilterBelief, delta: &AlgebraElement) -> FilterBelief {
        let j = reset_jacobian(delta);
        let mut sigma = &j * &b.sigma * j.transpose();
        symmetrize(&mut sigma);
        FilterBelief {
            sigma,
            ..b.clone()
        }
    }

    /// Adds a landmark seen for the first time at range `first_range`, placed along `e3`
    /// in the body frame.
    pub fn add_landmark(&self, b: &FilterBelief, id: u32, first_range: f64) -> Result<FilterBelief> {
        if !(first_range > 0.0) || !first_range.is_finite() {
            return Err(Error::NonPositiveRange {
                id,
                range: first_range,
            });
        }
        let pos = match b.ids.binary_search(&id) {
            Ok(_) => return Err(Error::DuplicateLandmark(id)),
            Err(pos) => pos,
        };
        let mut out = b.clone();
        out.ids.insert(pos, id);
        out.xhat
            .lm
            .insert(pos, ScaledRot::new(Rot3::identity(), 1.0 / first_range)?);
        out.sigma = insert_block(&b.sigma, NAV_DIM + LM_DIM * pos, &self.config.noise.initial_landmark);
        Ok(out)
    }
}

/// Inserts a diagonal block at `at`, with zero cross-covariance.
pub(crate) fn insert_block(sigma: &DMatrix<f64>, at: usize, block: &Matrix3<f64>) -> DMatrix<f64> {
    let old = sigma.nrows();
    let mut out = DMatrix::zeros(old + LM_DIM, old + LM_DIM);
    let map = |k: usize| if k < at { k } else { k + LM_DIM };
    for r in 0..old {
        for c in 0..old {
            out[(map(r), map(c))] = sigma[(r, c)];
        }
    }
    out.view_mut((at, at), (LM_DIM, LM_DIM)).copy_from(block);
    out
}

/// Jacobian of `eps -> theta(phi(exp(-delta), theta^-1(eps)))` at the coordinates of
/// `delta`, by central differences. Block diagonal: navigation and each landmark
/// transform independently.
pub fn reset_jacobian(delta: &AlgebraElement) -> DMatrix<f64> {
    let n = delta.lm.len();
    let dim = state_dim(n);
    let mut j = DMatrix::zeros(dim, dim);
    let h = RESET_FD_STEP;

    let nav_back = ExtendedPose::exp(&(-delta.nav));
    let nav_map = |e: &Se23Tangent| -> Se23Tangent {
        ExtendedPose::exp(e)
            .compose(&nav_back)
            .log()
            .unwrap_or_else(|_| Se23Tangent::repeat(f64::NAN))
    };
    let nav_at = delta.nav;
    for k in 0..NAV_DIM {
        let mut ep = nav_at;
        let mut em = nav_at;
        ep[k] += h;
        em[k] -= h;
        let col = (nav_map(&ep) - nav_map(&em)) / (2.0 * h);
        j.view_mut((0, k), (NAV_DIM, 1)).copy_from(&col);
    }

    for (i, d) in delta.lm.iter().enumerate() {
        // phi(exp(-d), q) = exp(d) q as a matrix acting on points
        let fwd = ScaledRot::exp(d).matrix();
        let at = Vector3::new(d.x, d.y, d.w);
        let lm_map = |c: &Vector3<f64>| -> Vector3<f64> {
            sigma_sot3(&(fwd * sigma_exp(c))).unwrap_or_else(|_| Vector3::repeat(f64::NAN))
        };
        let o = NAV_DIM + LM_DIM * i;
        for k in 0..LM_DIM {
            let mut cp = at;
            let mut cm = at;
            cp[k] += h;
            cm[k] -= h;
            let col = (lm_map(&cp) - lm_map(&cm)) / (2.0 * h);
            j.view_mut((o, o + k), (LM_DIM, 1)).copy_from(&col);
        }
    }
    j
}

/// Coordinates of a correction in the normal chart (inverse of `coords_to_algebra` on
/// corrections whose landmark rotations have no `e3` component).
pub fn algebra_to_coords(delta: &AlgebraElement) -> DVector<f64> {
    let n = delta.lm.len();
    let mut v = DVector::zeros(state_dim(n));
    v.rows_mut(0, NAV_DIM).copy_from(&delta.nav);
    for (i, d) in delta.lm.iter().enumerate() {
        let o = NAV_DIM + LM_DIM * i;
        v[o] = d.x;
        v[o + 1] = d.y;
        v[o + 2] = d.w;
    }
    v
}

/// Sot3 tangent of the correction for one landmark from its chart coordinates.
pub fn landmark_correction(c: &Vector3<f64>) -> Sot3Tangent {
    Sot3Tangent::new(c.x, c.y, 0.0, c.z)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn belief_with_landmark(range: f64) -> (Eqf, FilterBelief) {
        let eqf = Eqf::default();
        let b = eqf.initial_belief(Origin::default(), ExtendedPose::identity());
        let b = eqf.add_landmark(&b, 7, range).unwrap();
        (eqf, b)
    }

    #[test]
    fn add_landmark_places_on_e3() {
        let (eqf, b) = belief_with_landmark(1.0);
        assert_eq!(b.state_estimate().landmarks[0], Vector3::z());
        assert_eq!(b.xhat.lm[0].scale(), 1.0);
        let (_, b50) = belief_with_landmark(50.0);
        let q = b50.state_estimate().landmarks[0];
        assert!((q - Vector3::z() * 50.0).norm() < 1e-12);
        assert!((symmetry::output_h(&b50.state_estimate()).unwrap()[0] - 50.0).abs() < 1e-12);
        assert_eq!(b.dim(), 12);
        assert_eq!(b.sigma.view((9, 9), (3, 3)), Matrix3::from_diagonal_element(3.0));
        assert!(b.sigma.view((0, 9), (9, 3)).iter().all(|x| *x == 0.0));
        assert!(matches!(eqf.add_landmark(&b, 7, 2.0), Err(Error::DuplicateLandmark(7))));
        assert!(eqf.add_landmark(&b, 8, 0.0).is_err());
    }

    #[test]
    fn landmarks_stay_sorted_by_id() {
        let eqf = Eqf::default();
        let mut b = eqf.initial_belief(Origin::default(), ExtendedPose::identity());
        for (id, r) in [(5, 5.0), (2, 2.0), (9, 9.0)] {
            b = eqf.add_landmark(&b, id, r).unwrap();
        }
        assert_eq!(b.ids, vec![2, 5, 9]);
        let ranges: Vec<f64> = b.state_estimate().landmarks.iter().map(|q| q.norm()).collect();
        assert!((ranges[0] - 2.0).abs() < 1e-12 && (ranges[2] - 9.0).abs() < 1e-12);
    }

    #[test]
    fn cstar_closed_form() {
        let (eqf, b) = belief_with_landmark(1.0);
        let c = eqf.mat_cstar(&b, &[RangeSample::new(0.0, 7, 3.0)]).unwrap();
        assert_eq!(c[(0, 11)], -2.0);
        assert_eq!(c.iter().filter(|x| **x != 0.0).count(), 1);
        let c = eqf.mat_cstar(&b, &[RangeSample::new(0.0, 7, 1.0)]).unwrap();
        assert_eq!(c[(0, 11)], -1.0);
        assert!(matches!(
            eqf.mat_cstar(&b, &[RangeSample::new(0.0, 3, 1.0)]),
            Err(Error::UnknownLandmark(3))
        ));
    }

    #[test]
    fn zero_innovation_leaves_state() {
        let (eqf, b) = belief_with_landmark(4.0);
        let post = eqf.update(&b, &[RangeSample::new(0.0, 7, 4.0)]).unwrap();
        assert_eq!(post.xhat, b.xhat);
        assert!(post.sigma[(11, 11)] < b.sigma[(11, 11)]);
    }

    #[test]
    fn scalar_kalman_log_range() {
        // one landmark at e3 with identity landmark block: the log-range coordinate is
        // a scalar Kalman problem with C = -(y + 1) / 2
        let mut cfg = EqfConfig::default();
        cfg.noise.initial_landmark = Matrix3::identity();
        cfg.reset_mode = ResetMode::None;
        let eqf = Eqf::new(cfg);
        let b = eqf.initial_belief(Origin::default(), ExtendedPose::identity());
        let b = eqf.add_landmark(&b, 0, 1.0).unwrap();
        let y = 1.3;
        let sigma2 = eqf.config.noise.range_variance;
        let post = eqf.update(&b, &[RangeSample::new(0.0, 0, y)]).unwrap();
        let c = -0.5 * (y + 1.0);
        let expected = sigma2 / (c * c + sigma2);
        assert!((post.sigma[(11, 11)] - expected).abs() < 1e-12);
    }

    #[test]
    fn reset_identity_for_zero_correction() {
        let j = reset_jacobian(&AlgebraElement::zeros(2));
        assert!((j - DMatrix::identity(15, 15)).norm() < 1e-8);
    }

    #[test]
    fn propagate_rejects_bad_input() {
        let (eqf, b) = belief_with_landmark(4.0);
        let u = ImuSample::new(0.0, Vector3::new(f64::NAN, 0.0, 0.0), Vector3::zeros());
        assert!(eqf.propagate(&b, &u, 0.01).is_err());
        let u = ImuSample::new(0.0, Vector3::zeros(), Vector3::zeros());
        assert!(eqf.propagate(&b, &u, 0.0).is_err());
    }

    #[test]
    fn non_positive_range_rejected() {
        let (eqf, b) = belief_with_landmark(4.0);
        assert!(matches!(
            eqf.update(&b, &[RangeSample::new(0.0, 7, -1.0)]),
            Err(Error::NonPositiveRange { .. })
        ));
    }
}
