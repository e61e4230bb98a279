//! Common driving interface for the equivariant filter and the EKF baseline.

use nalgebra::{DMatrix, Vector3};

use crate::ekf::{Ekf, EkfBelief};
use crate::eqf::{Eqf, FilterBelief, ImuSample, RangeSample};
use crate::error::{Error, Result};
use crate::lie::ScaledRot;
use crate::lie::ExtendedPose;
use crate::symmetry::Origin;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Eqf,
    Ekf,
}

impl FilterKind {
    pub fn name(&self) -> &'static str {
        match self {
            FilterKind::Eqf => "eqf",
            FilterKind::Ekf => "ekf",
        }
    }
}

impl std::str::FromStr for FilterKind {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "eqf" => Ok(FilterKind::Eqf),
            "ekf" => Ok(FilterKind::Ekf),
            other => Err(crate::Error::InvalidArgument(format!("unknown filter '{other}'"))),
        }
    }
}

/// A stateful range-SLAM filter.
pub trait RangeFilter {
    fn kind(&self) -> FilterKind;
    fn propagate(&mut self, u: &ImuSample, dt: f64) -> Result<()>;
    /// Updates with ranges to known landmarks; unknown ids are initialised instead.
    fn update(&mut self, ys: &[RangeSample]) -> Result<()>;
    fn has_landmark(&self, id: u32) -> bool;
    fn add_landmark(&mut self, id: u32, range: f64) -> Result<()>;
    fn nav_estimate(&self) -> ExtendedPose;
    fn world_landmarks(&self) -> Vec<(u32, Vector3<f64>)>;
    fn covariance(&self) -> &DMatrix<f64>;
    /// Moves an existing landmark estimate to a world position, keeping its covariance.
    fn set_landmark_world(&mut self, id: u32, p: &Vector3<f64>) -> Result<()>;

    /// Initialises any unseen landmarks from their first range and updates with the rest.
    fn process_ranges(&mut self, ys: &[RangeSample]) -> Result<()> {
        let mut known = Vec::with_capacity(ys.len());
        for y in ys {
            if self.has_landmark(y.landmark_id) {
                known.push(*y);
            } else {
                self.add_landmark(y.landmark_id, y.range)?;
            }
        }
        self.update(&known)
    }
}

pub struct EqfRunner {
    pub filter: Eqf,
    pub belief: FilterBelief,
}

impl EqfRunner {
    pub fn new(filter: Eqf, origin: Origin, initial: ExtendedPose) -> Self {
        let belief = filter.initial_belief(origin, initial);
        Self { filter, belief }
    }
}

impl RangeFilter for EqfRunner {
    fn kind(&self) -> FilterKind {
        FilterKind::Eqf
    }
    fn propagate(&mut self, u: &ImuSample, dt: f64) -> Result<()> {
        self.belief = self.filter.propagate(&self.belief, u, dt)?;
        Ok(())
    }
    fn update(&mut self, ys: &[RangeSample]) -> Result<()> {
        self.belief = self.filter.update(&self.belief, ys)?;
        Ok(())
    }
    fn has_landmark(&self, id: u32) -> bool {
        self.belief.index_of(id).is_some()
    }
    fn add_landmark(&mut self, id: u32, range: f64) -> Result<()> {
        self.belief = self.filter.add_landmark(&self.belief, id, range)?;
        Ok(())
    }
    fn nav_estimate(&self) -> ExtendedPose {
        self.belief.nav_estimate()
    }
    fn world_landmarks(&self) -> Vec<(u32, Vector3<f64>)> {
        self.belief.world_landmarks()
    }
    fn covariance(&self) -> &DMatrix<f64> {
        &self.belief.sigma
    }
    fn set_landmark_world(&mut self, id: u32, p: &Vector3<f64>) -> Result<()> {
        let i = self.belief.index_of(id).ok_or(Error::UnknownLandmark(id))?;
        let pose = self.belief.nav_estimate();
        let q = pose.rot.matrix().tr_mul(&(p - pose.position));
        self.belief.xhat.lm[i] = ScaledRot::mapping(&Origin::landmark(), &q)?;
        Ok(())
    }
}

pub struct EkfRunner {
    pub filter: Ekf,
    pub belief: EkfBelief,
}

impl EkfRunner {
    pub fn new(filter: Ekf, initial: ExtendedPose) -> Self {
        let belief = filter.initial_belief(initial);
        Self { filter, belief }
    }
}

impl RangeFilter for EkfRunner {
    fn kind(&self) -> FilterKind {
        FilterKind::Ekf
    }
    fn propagate(&mut self, u: &ImuSample, dt: f64) -> Result<()> {
        self.belief = self.filter.propagate(&self.belief, u, dt)?;
        Ok(())
    }
    fn update(&mut self, ys: &[RangeSample]) -> Result<()> {
        self.belief = self.filter.update(&self.belief, ys)?;
        Ok(())
    }
    fn has_landmark(&self, id: u32) -> bool {
        self.belief.index_of(id).is_some()
    }
    fn add_landmark(&mut self, id: u32, range: f64) -> Result<()> {
        self.belief = self.filter.add_landmark(&self.belief, id, range)?;
        Ok(())
    }
    fn nav_estimate(&self) -> ExtendedPose {
        self.belief.pose
    }
    fn world_landmarks(&self) -> Vec<(u32, Vector3<f64>)> {
        self.belief.world_landmarks()
    }
    fn covariance(&self) -> &DMatrix<f64> {
        &self.belief.sigma
    }
    fn set_landmark_world(&mut self, id: u32, p: &Vector3<f64>) -> Result<()> {
        let i = self.belief.index_of(id).ok_or(Error::UnknownLandmark(id))?;
        self.belief.landmarks[i] = *p;
        Ok(())
    }
}
