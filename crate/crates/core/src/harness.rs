//! Experiment pipeline: feed a dataset through a filter, align, and score.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, Vector3};

use crate::ekf::{Ekf, EkfConfig};
use crate::eqf::{Eqf, EqfConfig, ImuSample, RangeSample};
use crate::error::{Error, Result};
use crate::eval::{self, match_times, RigidTransform, Window};
use crate::filter::{EkfRunner, EqfRunner, FilterKind, RangeFilter};
use crate::lie::ExtendedPose;
use crate::sim::{SimOutput, TruthSample};
use crate::symmetry::Origin;

/// `||Sigma||_inf` above this counts as divergence.
pub const DIVERGENCE_NORM: f64 = 1e12;

/// Sensor streams plus optional truth.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub imu: Vec<ImuSample>,
    pub ranges: Vec<RangeSample>,
    pub truth: Vec<TruthSample>,
    pub landmarks: Vec<(u32, Vector3<f64>)>,
}

impl From<SimOutput> for Dataset {
    fn from(s: SimOutput) -> Self {
        Self {
            imu: s.imu,
            ranges: s.ranges,
            truth: s.truth,
            landmarks: s.landmarks,
        }
    }
}

/// How a landmark enters the state on its first range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LandmarkInit {
    /// Along body `e3` at the measured range.
    #[default]
    Range,
    /// At the true position (needs landmark truth); for exactness checks.
    Truth,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterSetup {
    pub kind: FilterKind,
    pub eqf: EqfConfig,
    pub ekf: EkfConfig,
    pub landmark_init: LandmarkInit,
    /// Initial navigation estimate; the first truth sample is used when absent.
    pub initial_pose: Option<ExtendedPose>,
}

impl FilterSetup {
    pub fn new(kind: FilterKind) -> Self {
        Self {
            kind,
            eqf: EqfConfig::default(),
            ekf: EkfConfig::default(),
            landmark_init: LandmarkInit::default(),
            initial_pose: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub rmse_whole: f64,
    pub rmse_last40: f64,
    pub map_mean: f64,
    pub map_std: f64,
}

/// Result of one filter run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub kind: FilterKind,
    /// `(t, estimated pose)` after each range epoch.
    pub path: Vec<(f64, ExtendedPose)>,
    pub final_landmarks: Vec<(u32, Vector3<f64>)>,
    /// `(t, id, unaligned error to truth)` after each range epoch.
    pub landmark_errors: Vec<(f64, u32, f64)>,
    /// First range time and number of ranges, per landmark.
    pub observations: BTreeMap<u32, (f64, usize)>,
    pub converged: bool,
    pub failure: Option<String>,
    pub metrics: Option<Metrics>,
    pub alignment: Option<RigidTransform>,
}

fn make_filter(setup: &FilterSetup, initial: ExtendedPose) -> Box<dyn RangeFilter> {
    match setup.kind {
        FilterKind::Eqf => Box::new(EqfRunner::new(
            Eqf::new(setup.eqf.clone()),
            Origin::default(),
            initial,
        )),
        FilterKind::Ekf => Box::new(EkfRunner::new(Ekf::new(setup.ekf.clone()), initial)),
    }
}

fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn check_health(f: &dyn RangeFilter, t: f64) -> Result<()> {
    let s = f.covariance();
    if s.iter().any(|x| !x.is_finite()) || !f.nav_estimate().is_finite() {
        return Err(Error::Divergence {
            t,
            reason: "non-finite state".into(),
        });
    }
    let norm = inf_norm(s);
    if norm > DIVERGENCE_NORM {
        return Err(Error::Divergence {
            t,
            reason: format!("covariance norm {norm:.3e}"),
        });
    }
    Ok(())
}

/// Propagates from `t` to `target` through the IMU stream, holding the
/// trapezoidal average of the interpolated input over each sub-step.
struct ImuCursor<'a> {
    imu: &'a [ImuSample],
    k: usize,
    t: f64,
}

impl<'a> ImuCursor<'a> {
    fn sample_at(&self, t: f64) -> ImuSample {
        let k = self.k;
        if k + 1 < self.imu.len() {
            self.imu[k].lerp(&self.imu[k + 1], t)
        } else {
            ImuSample { t, ..self.imu[k] }
        }
    }

    fn advance(&mut self, f: &mut dyn RangeFilter, target: f64) -> Result<()> {
        while self.t < target {
            let next_sample = self.imu.get(self.k + 1).map_or(f64::INFINITY, |s| s.t);
            let next = next_sample.min(target);
            let a = self.sample_at(self.t);
            let b = self.sample_at(next);
            let u = ImuSample::new(self.t, (a.omega + b.omega) * 0.5, (a.accel + b.accel) * 0.5);
            f.propagate(&u, next - self.t).map_err(|e| match e {
                Error::NonFinite(_) => Error::Divergence {
                    t: next,
                    reason: e.to_string(),
                },
                other => other,
            })?;
            self.t = next;
            if next >= next_sample {
                self.k += 1;
            }
            check_health(f, self.t)?;
        }
        Ok(())
    }
}

fn validate_streams(data: &Dataset) -> Result<()> {
    if data.imu.is_empty() {
        return Err(Error::InvalidArgument("empty IMU stream".into()));
    }
    if data.imu.windows(2).any(|w| !(w[1].t > w[0].t)) {
        return Err(Error::InvalidArgument("IMU timestamps must increase strictly".into()));
    }
    if data.ranges.windows(2).any(|w| w[1].t < w[0].t) {
        return Err(Error::InvalidArgument("range timestamps must not decrease".into()));
    }
    Ok(())
}

/// Runs one filter over the dataset. Divergence is reported in the result, not as an
/// error; malformed inputs are errors.
pub fn run_filter(setup: &FilterSetup, data: &Dataset) -> Result<RunResult> {
    validate_streams(data)?;
    let initial = match (setup.initial_pose, data.truth.first()) {
        (Some(p), _) => p,
        (None, Some(t)) => t.pose,
        (None, None) => ExtendedPose::identity(),
    };
    let truth_lm: BTreeMap<u32, Vector3<f64>> = data.landmarks.iter().copied().collect();
    if setup.landmark_init == LandmarkInit::Truth {
        if let Some(r) = data.ranges.iter().find(|r| !truth_lm.contains_key(&r.landmark_id)) {
            return Err(Error::UnknownLandmark(r.landmark_id));
        }
    }

    let mut filter = make_filter(setup, initial);
    let mut cursor = ImuCursor {
        imu: &data.imu,
        k: 0,
        t: data.imu[0].t,
    };
    let mut result = RunResult {
        kind: setup.kind,
        path: vec![(cursor.t, filter.nav_estimate())],
        final_landmarks: Vec::new(),
        landmark_errors: Vec::new(),
        observations: BTreeMap::new(),
        converged: true,
        failure: None,
        metrics: None,
        alignment: None,
    };

    let t_end = data.imu.last().unwrap().t;
    let outcome = (|| -> Result<()> {
        let mut i = 0;
        while i < data.ranges.len() {
            let t = data.ranges[i].t;
            let mut j = i;
            while j < data.ranges.len() && data.ranges[j].t == t {
                j += 1;
            }
            let epoch = &data.ranges[i..j];
            i = j;
            if t < cursor.t {
                // ranges before the first IMU sample cannot be placed in time
                continue;
            }
            cursor.advance(filter.as_mut(), t)?;
            for y in epoch {
                let obs = result.observations.entry(y.landmark_id).or_insert((t, 0));
                obs.1 += 1;
            }
            match setup.landmark_init {
                LandmarkInit::Range => filter.process_ranges(epoch)?,
                LandmarkInit::Truth => {
                    for y in epoch {
                        if !filter.has_landmark(y.landmark_id) {
                            // place so the first range is exact and the point is the truth
                            filter.add_landmark(y.landmark_id, y.range)?;
                            filter.set_landmark_world(y.landmark_id, &truth_lm[&y.landmark_id])?;
                        }
                    }
                    filter.update(epoch)?;
                }
            }
            check_health(filter.as_ref(), t)?;
            result.path.push((t, filter.nav_estimate()));
            for (id, p) in filter.world_landmarks() {
                if let Some(g) = truth_lm.get(&id) {
                    result.landmark_errors.push((t, id, (p - g).norm()));
                }
            }
        }
        cursor.advance(filter.as_mut(), t_end)?;
        if result.path.last().map(|p| p.0) != Some(t_end) {
            result.path.push((t_end, filter.nav_estimate()));
        }
        Ok(())
    })();

    match outcome {
        Ok(()) => {}
        Err(Error::Divergence { t, reason }) => {
            result.converged = false;
            result.failure = Some(format!("diverged at t = {t:.3}: {reason}"));
        }
        Err(
            e @ (Error::SingularInnovation
            | Error::NonFinite(_)
            | Error::ZeroRange { .. }
            | Error::AntipodalLandmark
            | Error::AntipodalRotation { .. }),
        ) => {
            result.converged = false;
            result.failure = Some(format!("diverged at t = {:.3}: {e}", cursor_time(&result)));
        }
        Err(e) => return Err(e),
    }
    result.final_landmarks = filter.world_landmarks();
    if result.converged {
        score(&mut result, data);
    }
    Ok(result)
}

fn cursor_time(result: &RunResult) -> f64 {
    result.path.last().map_or(0.0, |p| p.0)
}

/// Umeyama alignment over path and map jointly, then RMSE and mapping error.
fn score(result: &mut RunResult, data: &Dataset) {
    if data.truth.is_empty() {
        return;
    }
    let truth_t: Vec<f64> = data.truth.iter().map(|s| s.t).collect();
    let est_t: Vec<f64> = result.path.iter().map(|p| p.0).collect();
    let matches = match_times(&est_t, &truth_t);
    let mut est_pts = Vec::new();
    let mut true_pts = Vec::new();
    let mut times = Vec::new();
    for ((t, pose), m) in result.path.iter().zip(&matches) {
        if let Some(k) = m {
            est_pts.push(pose.position);
            true_pts.push(data.truth[*k].pose.position);
            times.push(*t);
        }
    }
    let n_path = est_pts.len();
    let truth_lm: BTreeMap<u32, Vector3<f64>> = data.landmarks.iter().copied().collect();
    let mut est_lm = Vec::new();
    let mut true_lm = Vec::new();
    for (id, p) in &result.final_landmarks {
        if let Some(g) = truth_lm.get(id) {
            est_lm.push(*p);
            true_lm.push(*g);
        }
    }
    est_pts.extend(&est_lm);
    true_pts.extend(&true_lm);
    let Ok(tf) = eval::umeyama_align(&est_pts, &true_pts) else {
        return;
    };
    let pairs: Vec<(f64, Vector3<f64>, Vector3<f64>)> = (0..n_path)
        .map(|i| (times[i], tf.apply(&est_pts[i]), true_pts[i]))
        .collect();
    let aligned_lm: Vec<Vector3<f64>> = est_lm.iter().map(|p| tf.apply(p)).collect();
    let (Ok(whole), Ok(last)) = (
        eval::rmse_position(&pairs, Window::Whole),
        eval::rmse_position(&pairs, Window::Last40),
    ) else {
        return;
    };
    let (map_mean, map_std) = eval::mapping_error(&aligned_lm, &true_lm).unwrap_or((f64::NAN, f64::NAN));
    result.alignment = Some(tf);
    result.metrics = Some(Metrics {
        rmse_whole: whole,
        rmse_last40: last,
        map_mean,
        map_std,
    });
}

/// Median over landmarks with at least `min_ranges` ranges of the unaligned error
/// `horizon` seconds after each landmark's first range. `None` when no landmark qualifies.
pub fn landmark_convergence(r: &RunResult, horizon: f64, min_ranges: usize) -> Option<f64> {
    let mut errs: Vec<f64> = r
        .observations
        .iter()
        .filter(|(_, (_, count))| *count >= min_ranges)
        .filter_map(|(id, (t0, _))| {
            r.landmark_errors
                .iter()
                .rfind(|(t, i, _)| i == id && *t <= t0 + horizon)
                .map(|e| e.2)
        })
        .collect();
    if errs.is_empty() {
        return None;
    }
    errs.sort_by(f64::total_cmp);
    let m = errs.len() / 2;
    Some(if errs.len() % 2 == 1 {
        errs[m]
    } else {
        0.5 * (errs[m - 1] + errs[m])
    })
}
