//! Extended Kalman filter baseline with world-frame landmarks.
//!
//! Navigation error is right-invariant, `P = exp(eps) P_hat`, so the navigation
//! propagation is identical to the equivariant filter with an identity origin.
//! Landmarks are world-frame points with additive error.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::eqf::{
    insert_block, kalman_correct, nav_input_matrix, nav_state_matrix_world, riccati_step,
    ImuSample, NoiseConfig, RangeSample, DEFAULT_GRAVITY,
};
use crate::error::{Error, Result};
use crate::lie::se23::{Matrix9, Se23Tangent};
use crate::lie::so3::hat;
use crate::lie::{integrate_inertial, ExtendedPose};
use crate::symmetry::{state_dim, LM_DIM, NAV_DIM};

/// Initial landmark variance (m^2) for aerial and ground scenarios.
pub const AERIAL_LANDMARK_VARIANCE: f64 = 50.0;
pub const GROUND_LANDMARK_VARIANCE: f64 = 10.0;

#[derive(Clone, Debug, PartialEq)]
pub struct EkfConfig {
    /// Input gain, range variance and initial navigation block are shared with the EqF;
    /// `initial_landmark` is ignored in favour of `landmark_variance`.
    pub noise: NoiseConfig,
    /// Initial landmark variances (m^2) along world x, y, z.
    pub landmark_variance: Vector3<f64>,
    pub gravity: f64,
}

impl Default for EkfConfig {
    fn default() -> Self {
        Self {
            noise: NoiseConfig::default(),
            landmark_variance: Vector3::repeat(AERIAL_LANDMARK_VARIANCE),
            gravity: DEFAULT_GRAVITY,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EkfBelief {
    pub pose: ExtendedPose,
    pub landmarks: Vec<Vector3<f64>>,
    pub ids: Vec<u32>,
    pub sigma: DMatrix<f64>,
}

impl EkfBelief {
    pub fn new(pose: ExtendedPose, sigma_nav: Matrix9) -> Self {
        let mut sigma = DMatrix::zeros(NAV_DIM, NAV_DIM);
        sigma.copy_from(&sigma_nav);
        Self {
            pose,
            landmarks: Vec::new(),
            ids: Vec::new(),
            sigma,
        }
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

    pub fn world_landmarks(&self) -> Vec<(u32, Vector3<f64>)> {
        self.ids.iter().copied().zip(self.landmarks.iter().copied()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.pose.is_finite()
            && self.landmarks.iter().all(|p| p.iter().all(|x| x.is_finite()))
            && self.sigma.iter().all(|x| x.is_finite())
    }
}

#[derive(Clone, Debug, Default)]
pub struct Ekf {
    pub config: EkfConfig,
}

impl Ekf {
    pub fn new(config: EkfConfig) -> Self {
        Self { config }
    }

    pub fn initial_belief(&self, pose: ExtendedPose) -> EkfBelief {
        EkfBelief::new(pose, self.config.noise.initial_nav)
    }

    pub fn mat_a(&self, b: &EkfBelief) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(b.dim(), b.dim());
        a.view_mut((0, 0), (NAV_DIM, NAV_DIM))
            .copy_from(&nav_state_matrix_world(self.config.gravity));
        a
    }

    pub fn mat_b(&self, b: &EkfBelief) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(b.dim(), 6);
        m.view_mut((0, 0), (NAV_DIM, 6))
            .copy_from(&nav_input_matrix(&b.pose));
        m
    }

    /// Range Jacobian, one row per sample.
    pub fn mat_c(&self, b: &EkfBelief, ys: &[RangeSample]) -> Result<DMatrix<f64>> {
        let mut c = DMatrix::zeros(ys.len(), b.dim());
        for (row, y) in ys.iter().enumerate() {
            let i = b
                .index_of(y.landmark_id)
                .ok_or(Error::UnknownLandmark(y.landmark_id))?;
            let diff = b.landmarks[i] - b.pose.position;
            let r = diff.norm();
            if !(r > 0.0) {
                return Err(Error::ZeroRange { index: i });
            }
            let d = diff / r;
            let x_hat = hat(&b.pose.position);
            c.view_mut((row, 0), (1, 3))
                .copy_from(&(d.transpose() * x_hat));
            c.view_mut((row, 6), (1, 3)).copy_from(&(-d.transpose()));
            c.view_mut((row, NAV_DIM + LM_DIM * i), (1, 3))
                .copy_from(&d.transpose());
        }
        Ok(c)
    }

    pub fn propagate(&self, b: &EkfBelief, u: &ImuSample, dt: f64) -> Result<EkfBelief> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidArgument(format!("propagation step {dt}")));
        }
        let a = self.mat_a(b);
        let bm = self.mat_b(b);
        let sigma = riccati_step(&b.sigma, &a, &bm, &self.config.noise.input_gain, dt);
        let pose = integrate_inertial(&b.pose, &u.omega, &u.accel, self.config.gravity, dt);
        let out = EkfBelief {
            pose,
            sigma,
            ..b.clone()
        };
        if !out.is_finite() {
            return Err(Error::NonFinite("propagated belief"));
        }
        Ok(out)
    }

    pub fn update(&self, b: &EkfBelief, ys: &[RangeSample]) -> Result<EkfBelief> {
        if ys.is_empty() {
            return Ok(b.clone());
        }
        let c = self.mat_c(b, ys)?;
        let mut innovation = DVector::zeros(ys.len());
        for (row, y) in ys.iter().enumerate() {
            if !(y.range > 0.0) || !y.range.is_finite() {
                return Err(Error::NonPositiveRange {
                    id: y.landmark_id,
                    range: y.range,
                });
            }
            let i = b.index_of(y.landmark_id).expect("checked by mat_c");
            innovation[row] = y.range - (b.landmarks[i] - b.pose.position).norm();
        }
        let (delta, sigma) =
            kalman_correct(&b.sigma, &c, &innovation, self.config.noise.range_variance)?;
        let nav = Se23Tangent::from_iterator(delta.rows(0, NAV_DIM).iter().copied());
        let pose = ExtendedPose::exp(&nav).compose(&b.pose);
        let landmarks = b
            .landmarks
            .iter()
            .enumerate()
            .map(|(i, p)| p + delta.fixed_rows::<3>(NAV_DIM + LM_DIM * i))
            .collect();
        let out = EkfBelief {
            pose,
            landmarks,
            ids: b.ids.clone(),
            sigma,
        };
        if !out.is_finite() {
            return Err(Error::NonFinite("updated belief"));
        }
        Ok(out)
    }

    /// Initialises a landmark at `first_range` along the body `e3` axis.
    pub fn add_landmark(&self, b: &EkfBelief, id: u32, first_range: f64) -> Result<EkfBelief> {
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
        let p = b.pose.position + b.pose.rot.act(&(Vector3::z() * first_range));
        let mut out = b.clone();
        out.ids.insert(pos, id);
        out.landmarks.insert(pos, p);
        out.sigma = insert_block(
            &b.sigma,
            NAV_DIM + LM_DIM * pos,
            &Matrix3::from_diagonal(&self.config.landmark_variance),
        );
        Ok(out)
    }
}
