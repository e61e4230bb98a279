//! Python bindings: group operations, simulation, the two filters and evaluation.
//!
//! Vectors cross the boundary as lists of floats; 3-vectors as `[x, y, z]`, poses as
//! 5x5 nested lists.

use nalgebra::{Matrix5, Vector3};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use rslam_core::ekf::Ekf;
use rslam_core::eqf::{Eqf, ImuSample, RangeSample};
use rslam_core::filter::{EkfRunner, EqfRunner, FilterKind, RangeFilter};
use rslam_core::harness::{self, FilterSetup};
use rslam_core::io::RunConfig;
use rslam_core::lie::{ExtendedPose as CorePose, Rot3, Se23Tangent};
use rslam_core::symmetry::{self, Origin, SlamState};

fn err(e: rslam_core::Error) -> PyErr {
    match e {
        rslam_core::Error::Divergence { .. } | rslam_core::Error::SingularInnovation => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn vec3(v: [f64; 3]) -> Vector3<f64> {
    Vector3::from(v)
}

fn list3(v: &Vector3<f64>) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn rows<const R: usize, const C: usize>(m: &nalgebra::SMatrix<f64, R, C>) -> Vec<Vec<f64>> {
    (0..R).map(|i| (0..C).map(|j| m[(i, j)]).collect()).collect()
}

fn drows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Extended pose `(R, v, x)` in SE2(3).
#[pyclass(name = "ExtendedPose", from_py_object)]
#[derive(Clone)]
struct Pose {
    inner: CorePose,
}

#[pymethods]
impl Pose {
    /// Identity attitude unless `quaternion` (w, x, y, z) is given.
    #[new]
    #[pyo3(signature = (position = [0.0; 3], velocity = [0.0; 3], quaternion = None))]
    fn new(position: [f64; 3], velocity: [f64; 3], quaternion: Option<[f64; 4]>) -> Self {
        let rot = quaternion.map_or(Rot3::identity(), |q| Rot3::from_quaternion(q[0], q[1], q[2], q[3]));
        Self {
            inner: CorePose::new(rot, vec3(velocity), vec3(position)),
        }
    }

    /// Exponential of a tangent vector ordered (rotation, velocity, position).
    #[staticmethod]
    fn exp(u: [f64; 9]) -> Self {
        Self {
            inner: CorePose::exp(&Se23Tangent::from_column_slice(&u)),
        }
    }

    #[staticmethod]
    fn from_matrix(m: [[f64; 5]; 5]) -> Self {
        Self {
            inner: CorePose::from_matrix(&Matrix5::from_fn(|i, j| m[i][j])),
        }
    }

    fn log(&self) -> PyResult<Vec<f64>> {
        Ok(self.inner.log().map_err(err)?.iter().copied().collect())
    }

    fn compose(&self, other: &Pose) -> Self {
        Self {
            inner: self.inner.compose(&other.inner),
        }
    }

    fn __matmul__(&self, other: &Pose) -> Self {
        self.compose(other)
    }

    fn inverse(&self) -> Self {
        Self {
            inner: self.inner.inverse(),
        }
    }

    fn matrix(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.to_matrix())
    }

    fn adjoint(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.adjoint())
    }

    #[getter]
    fn position(&self) -> [f64; 3] {
        list3(&self.inner.position)
    }

    #[getter]
    fn velocity(&self) -> [f64; 3] {
        list3(&self.inner.velocity)
    }

    /// Attitude as a unit quaternion (w, x, y, z).
    #[getter]
    fn quaternion(&self) -> [f64; 4] {
        self.inner.rot.to_quaternion()
    }

    fn __repr__(&self) -> String {
        let p = self.inner.position;
        format!("ExtendedPose(position=[{}, {}, {}])", p.x, p.y, p.z)
    }
}

/// Ranges from a pose to world-frame landmarks.
#[pyfunction]
fn ranges(pose: &Pose, landmarks: Vec<[f64; 3]>) -> Vec<f64> {
    let world: Vec<Vector3<f64>> = landmarks.into_iter().map(vec3).collect();
    symmetry::output_h_world(&pose.inner, &world)
}

/// Body-frame landmarks `R^T (p - x)` of world points seen from `pose`.
#[pyfunction]
fn body_landmarks(pose: &Pose, landmarks: Vec<[f64; 3]>) -> Vec<[f64; 3]> {
    let world: Vec<Vector3<f64>> = landmarks.into_iter().map(vec3).collect();
    SlamState::from_world(pose.inner, &world)
        .landmarks
        .iter()
        .map(list3)
        .collect()
}

/// Timestamped sensor streams with optional truth.
#[pyclass(from_py_object)]
#[derive(Clone)]
struct Dataset {
    inner: harness::Dataset,
}

#[pymethods]
impl Dataset {
    /// Rows `(t, wx, wy, wz, ax, ay, az)`.
    #[getter]
    fn imu(&self) -> Vec<[f64; 7]> {
        self.inner
            .imu
            .iter()
            .map(|u| [u.t, u.omega.x, u.omega.y, u.omega.z, u.accel.x, u.accel.y, u.accel.z])
            .collect()
    }

    /// Rows `(t, landmark_id, range)`.
    #[getter]
    fn ranges(&self) -> Vec<(f64, u32, f64)> {
        self.inner.ranges.iter().map(|r| (r.t, r.landmark_id, r.range)).collect()
    }

    /// `(t, pose)` pairs.
    #[getter]
    fn truth(&self) -> Vec<(f64, Pose)> {
        self.inner
            .truth
            .iter()
            .map(|s| (s.t, Pose { inner: s.pose }))
            .collect()
    }

    #[getter]
    fn landmarks(&self) -> Vec<(u32, [f64; 3])> {
        self.inner.landmarks.iter().map(|(id, p)| (*id, list3(p))).collect()
    }

    #[staticmethod]
    fn load(dir: std::path::PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: rslam_core::io::load_dataset(dir).map_err(err)?,
        })
    }

    fn save(&self, dir: std::path::PathBuf) -> PyResult<()> {
        rslam_core::io::save_dataset(dir, &self.inner).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.imu.len()
    }
}

fn load_config(config: Option<std::path::PathBuf>) -> PyResult<RunConfig> {
    match config {
        Some(p) => RunConfig::load(p).map_err(err),
        None => Ok(RunConfig::default()),
    }
}

/// Simulates the configured scenario (the built-in nominal one by default).
#[pyfunction]
#[pyo3(signature = (seed = 0, duration = None, config = None, noiseless = false))]
fn simulate(
    seed: u64,
    duration: Option<f64>,
    config: Option<std::path::PathBuf>,
    noiseless: bool,
) -> PyResult<Dataset> {
    let cfg = load_config(config)?;
    let mut traj = cfg.scenario.trajectory.clone();
    if let Some(d) = duration {
        traj.duration = d;
    }
    let mut sensors = cfg.scenario.sensors.clone();
    if noiseless {
        sensors = sensors.noiseless();
    }
    let out = rslam_core::sim::generate(&traj, &sensors, seed).map_err(err)?;
    Ok(Dataset { inner: out.into() })
}

/// Outcome of a full filter run.
#[pyclass(skip_from_py_object)]
struct RunResult {
    inner: harness::RunResult,
}

#[pymethods]
impl RunResult {
    #[getter]
    fn filter(&self) -> &'static str {
        self.inner.kind.name()
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn failure(&self) -> Option<String> {
        self.inner.failure.clone()
    }

    /// `{"rmse_whole", "rmse_last40", "map_mean", "map_std"}` or `None` without truth.
    #[getter]
    fn metrics(&self) -> Option<std::collections::BTreeMap<&'static str, f64>> {
        self.inner.metrics.as_ref().map(|m| {
            [
                ("rmse_whole", m.rmse_whole),
                ("rmse_last40", m.rmse_last40),
                ("map_mean", m.map_mean),
                ("map_std", m.map_std),
            ]
            .into_iter()
            .collect()
        })
    }

    /// `(t, x, y, z)` estimated positions after each range epoch.
    #[getter]
    fn path(&self) -> Vec<[f64; 4]> {
        self.inner
            .path
            .iter()
            .map(|(t, p)| [*t, p.position.x, p.position.y, p.position.z])
            .collect()
    }

    #[getter]
    fn landmarks(&self) -> Vec<(u32, [f64; 3])> {
        self.inner.final_landmarks.iter().map(|(id, p)| (*id, list3(p))).collect()
    }

    /// Median unaligned landmark error `horizon` seconds after first sight.
    #[pyo3(signature = (horizon = 20.0, min_ranges = 20))]
    fn landmark_convergence(&self, horizon: f64, min_ranges: usize) -> Option<f64> {
        harness::landmark_convergence(&self.inner, horizon, min_ranges)
    }

    fn report(&self) -> String {
        rslam_core::report::report_text(self.inner.kind.name(), &self.inner)
    }
}

/// Runs `filter` ("eqf" or "ekf") over a dataset with the given or default config.
#[pyfunction]
#[pyo3(signature = (dataset, filter = "eqf", config = None))]
fn run_filter(dataset: &Dataset, filter: &str, config: Option<std::path::PathBuf>) -> PyResult<RunResult> {
    let mut cfg = load_config(config)?;
    cfg.filter = filter.parse().map_err(err)?;
    let setup: FilterSetup = cfg.setup();
    let inner = harness::run_filter(&setup, &dataset.inner).map_err(err)?;
    Ok(RunResult { inner })
}

/// Step-by-step filter for custom pipelines.
#[pyclass(skip_from_py_object)]
struct Filter {
    inner: Box<dyn RangeFilter + Send + Sync>,
}

#[pymethods]
impl Filter {
    #[new]
    #[pyo3(signature = (kind = "eqf", initial = None, config = None))]
    fn new(kind: &str, initial: Option<Pose>, config: Option<std::path::PathBuf>) -> PyResult<Self> {
        let mut cfg = load_config(config)?;
        cfg.filter = kind.parse().map_err(err)?;
        let setup = cfg.setup();
        let start = initial.map_or(CorePose::identity(), |p| p.inner);
        let inner: Box<dyn RangeFilter + Send + Sync> = match setup.kind {
            FilterKind::Eqf => Box::new(EqfRunner::new(Eqf::new(setup.eqf), Origin::default(), start)),
            FilterKind::Ekf => Box::new(EkfRunner::new(Ekf::new(setup.ekf), start)),
        };
        Ok(Self { inner })
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind().name()
    }

    fn propagate(&mut self, omega: [f64; 3], accel: [f64; 3], dt: f64) -> PyResult<()> {
        let u = ImuSample::new(0.0, vec3(omega), vec3(accel));
        self.inner.propagate(&u, dt).map_err(err)
    }

    /// One epoch of `(landmark_id, range)` pairs; unseen landmarks are initialised.
    fn update(&mut self, ranges: Vec<(u32, f64)>) -> PyResult<()> {
        let ys: Vec<RangeSample> = ranges
            .into_iter()
            .map(|(id, r)| RangeSample::new(0.0, id, r))
            .collect();
        self.inner.process_ranges(&ys).map_err(err)
    }

    fn pose(&self) -> Pose {
        Pose {
            inner: self.inner.nav_estimate(),
        }
    }

    fn landmarks(&self) -> Vec<(u32, [f64; 3])> {
        self.inner
            .world_landmarks()
            .iter()
            .map(|(id, p)| (*id, list3(p)))
            .collect()
    }

    fn covariance(&self) -> Vec<Vec<f64>> {
        drows(self.inner.covariance())
    }
}

/// Least-squares rigid alignment of `estimate` onto `truth`; returns `(R, t)`.
#[pyfunction]
fn umeyama(estimate: Vec<[f64; 3]>, truth: Vec<[f64; 3]>) -> PyResult<(Vec<Vec<f64>>, [f64; 3])> {
    let e: Vec<_> = estimate.into_iter().map(vec3).collect();
    let t: Vec<_> = truth.into_iter().map(vec3).collect();
    let tf = rslam_core::eval::umeyama_align(&e, &t).map_err(err)?;
    Ok((rows(tf.rot.matrix()), list3(&tf.translation)))
}

#[pymodule]
fn rslam(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Pose>()?;
    m.add_class::<Dataset>()?;
    m.add_class::<RunResult>()?;
    m.add_class::<Filter>()?;
    m.add_function(wrap_pyfunction!(ranges, m)?)?;
    m.add_function(wrap_pyfunction!(body_landmarks, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(run_filter, m)?)?;
    m.add_function(wrap_pyfunction!(umeyama, m)?)?;
    Ok(())
}
