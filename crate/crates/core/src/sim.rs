//! Synthetic ground truth and sensor streams.
//!
//! The world frame has `e3` pointing down, so gravity is `+g e3` and altitudes are
//! negative `z`. IMU samples are synthesised analytically from a twice-differentiable
//! trajectory: `omega = vee(R^T R')`, `a = R^T (v' - g e3)`.

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::eqf::{ImuSample, RangeSample, DEFAULT_GRAVITY};
use crate::error::{Error, Result};
use crate::lie::{ExtendedPose, Rot3};

/// Horizontal path shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PathKind {
    /// Constant-speed circle; heading follows the tangent.
    Circle { center: [f64; 2], radius: f64 },
    /// `c + A sin(2 pi f t + phase)` per axis.
    Lissajous {
        center: [f64; 2],
        amplitude: [f64; 2],
        frequency: [f64; 2],
        phase: [f64; 2],
    },
    /// Natural cubic spline through the waypoints, visited at constant average speed.
    WaypointSpline { waypoints: Vec<[f64; 2]> },
}

// Unknown keys are rejected by the flattened `PathKind`, which receives every key the
// struct itself does not consume.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    #[serde(flatten)]
    pub path: PathKind,
    /// Seconds.
    pub duration: f64,
    /// Metres per second; sets the circle rate and the spline timing.
    #[serde(default = "default_speed")]
    pub speed: f64,
    /// Mean height above the ground plane (m, positive up).
    #[serde(default = "default_altitude")]
    pub altitude: f64,
    /// Sinusoidal height variation amplitude (m) and period (s).
    #[serde(default)]
    pub altitude_amplitude: f64,
    #[serde(default = "default_altitude_period")]
    pub altitude_period: f64,
    /// Roll/pitch oscillation amplitude (rad) and period (s).
    #[serde(default)]
    pub tilt_amplitude: f64,
    #[serde(default = "default_tilt_period")]
    pub tilt_period: f64,
}

fn default_speed() -> f64 {
    3.0
}
fn default_altitude() -> f64 {
    10.0
}
fn default_altitude_period() -> f64 {
    20.0
}
fn default_tilt_period() -> f64 {
    7.0
}

impl TrajectorySpec {
    pub fn circle(radius: f64, speed: f64, duration: f64) -> Self {
        Self {
            path: PathKind::Circle {
                center: [0.0, 0.0],
                radius,
            },
            duration,
            speed,
            altitude: default_altitude(),
            altitude_amplitude: 0.0,
            altitude_period: default_altitude_period(),
            tilt_amplitude: 0.0,
            tilt_period: default_tilt_period(),
        }
    }

    /// Aerial scene used as the default: a lissajous sweep over a ~50 m field with
    /// altitude variation and gentle tilting.
    pub fn nominal_aerial(duration: f64) -> Self {
        Self {
            path: PathKind::Lissajous {
                center: [0.0, 0.0],
                amplitude: [18.0, 14.0],
                frequency: [1.0 / 15.0, 2.0 / 15.0],
                phase: [0.0, 0.0],
            },
            duration,
            speed: default_speed(),
            altitude: default_altitude(),
            altitude_amplitude: 4.0,
            altitude_period: 10.0,
            tilt_amplitude: 0.05,
            tilt_period: default_tilt_period(),
        }
    }
}

/// Per-landmark range gaps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DropoutSpec {
    /// Expected gap starts per second per landmark (0 disables random gaps).
    #[serde(default)]
    pub gap_rate: f64,
    /// Length of each random gap (s).
    #[serde(default = "default_gap")]
    pub gap_duration: f64,
    /// Explicit gaps `(landmark_id, start, end)`.
    #[serde(default)]
    pub windows: Vec<(u32, f64, f64)>,
}

fn default_gap() -> f64 {
    10.0
}

impl Default for DropoutSpec {
    fn default() -> Self {
        Self {
            gap_rate: 0.0,
            gap_duration: default_gap(),
            windows: Vec::new(),
        }
    }
}

impl DropoutSpec {
    /// Long-run fraction of samples that survive the random gaps.
    pub fn expected_duty_cycle(&self) -> f64 {
        if self.gap_rate <= 0.0 {
            1.0
        } else {
            let up = 1.0 / self.gap_rate;
            up / (up + self.gap_duration)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSpec {
    #[serde(default = "default_imu_rate")]
    pub imu_rate: f64,
    #[serde(default = "default_range_rate")]
    pub range_rate: f64,
    /// rad/s/sqrt(Hz)
    #[serde(default = "default_gyro_density")]
    pub gyro_noise_density: f64,
    /// m/s^2/sqrt(Hz)
    #[serde(default = "default_accel_density")]
    pub accel_noise_density: f64,
    #[serde(default = "default_range_sigma")]
    pub range_sigma: f64,
    #[serde(default)]
    pub dropout: DropoutSpec,
    /// `(id, world position)`.
    pub landmarks: Vec<(u32, [f64; 3])>,
    #[serde(default = "default_gravity")]
    pub gravity: f64,
}

fn default_imu_rate() -> f64 {
    400.0
}
fn default_range_rate() -> f64 {
    10.0
}
fn default_gyro_density() -> f64 {
    2e-4
}
fn default_accel_density() -> f64 {
    2e-3
}
fn default_range_sigma() -> f64 {
    0.25
}
fn default_gravity() -> f64 {
    DEFAULT_GRAVITY
}

impl SensorSpec {
    /// Eight poles 2 m tall scattered over a ~50 m field, 400 Hz IMU, 10 Hz ranges.
    pub fn nominal() -> Self {
        let xy = [
            [-22.0, -18.0],
            [-5.0, -24.0],
            [17.0, -20.0],
            [25.0, 2.0],
            [14.0, 21.0],
            [-8.0, 19.0],
            [-24.0, 6.0],
            [3.0, 1.0],
        ];
        Self {
            imu_rate: default_imu_rate(),
            range_rate: default_range_rate(),
            gyro_noise_density: default_gyro_density(),
            accel_noise_density: default_accel_density(),
            range_sigma: default_range_sigma(),
            dropout: DropoutSpec {
                gap_rate: 1.0 / 60.0,
                ..DropoutSpec::default()
            },
            landmarks: xy
                .iter()
                .enumerate()
                .map(|(i, p)| (i as u32, [p[0], p[1], -2.0]))
                .collect(),
            gravity: default_gravity(),
        }
    }

    pub fn noiseless(mut self) -> Self {
        self.gyro_noise_density = 0.0;
        self.accel_noise_density = 0.0;
        self.range_sigma = 0.0;
        self
    }

    fn validate(&self) -> Result<()> {
        let ok = self.imu_rate > 0.0
            && self.range_rate > 0.0
            && self.gyro_noise_density >= 0.0
            && self.accel_noise_density >= 0.0
            && self.range_sigma >= 0.0
            && self.dropout.gap_rate >= 0.0
            && self.dropout.gap_duration >= 0.0;
        if !ok {
            return Err(Error::Config("sensor rates must be positive and noise levels non-negative".into()));
        }
        let mut ids: Vec<u32> = self.landmarks.iter().map(|l| l.0).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateLandmark(w[0]));
        }
        Ok(())
    }
}

/// Position derivatives and attitude rates at one instant.
#[derive(Clone, Copy, Debug)]
pub struct Kinematics {
    pub pose: ExtendedPose,
    pub accel_world: Vector3<f64>,
    pub omega_body: Vector3<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruthSample {
    pub t: f64,
    pub pose: ExtendedPose,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimOutput {
    pub truth: Vec<TruthSample>,
    pub imu: Vec<ImuSample>,
    pub ranges: Vec<RangeSample>,
    pub landmarks: Vec<(u32, Vector3<f64>)>,
}

/// Natural cubic spline through `(t_k, y_k)`, stored as per-knot second derivatives.
#[derive(Clone, Debug)]
struct CubicSpline {
    t: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl CubicSpline {
    fn new(t: Vec<f64>, y: Vec<f64>) -> Self {
        let n = t.len();
        let mut a = DMatrix::zeros(n, n);
        let mut rhs = DVector::zeros(n);
        a[(0, 0)] = 1.0;
        a[(n - 1, n - 1)] = 1.0;
        for i in 1..n - 1 {
            let h0 = t[i] - t[i - 1];
            let h1 = t[i + 1] - t[i];
            a[(i, i - 1)] = h0 / 6.0;
            a[(i, i)] = (h0 + h1) / 3.0;
            a[(i, i + 1)] = h1 / 6.0;
            rhs[i] = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
        }
        let m = a
            .lu()
            .solve(&rhs)
            .expect("spline system is diagonally dominant");
        Self {
            t,
            y,
            m: m.iter().copied().collect(),
        }
    }

    /// Value and first two derivatives. Outside the knots the spline continues along its
    /// end tangent; the natural end conditions keep that twice differentiable.
    fn eval(&self, s: f64) -> (f64, f64, f64) {
        let n = self.t.len();
        let end = if s < self.t[0] {
            Some(self.t[0])
        } else if s > self.t[n - 1] {
            Some(self.t[n - 1])
        } else {
            None
        };
        if let Some(end) = end {
            let (val, d1, _) = self.eval(end);
            return (val + d1 * (s - end), d1, 0.0);
        }
        let i = match self.t.iter().position(|&tk| tk > s) {
            Some(0) => 0,
            Some(k) => k - 1,
            None => n - 2,
        };
        let (t0, t1) = (self.t[i], self.t[i + 1]);
        let h = t1 - t0;
        let (a, b) = ((t1 - s) / h, (s - t0) / h);
        let (m0, m1) = (self.m[i], self.m[i + 1]);
        let (y0, y1) = (self.y[i], self.y[i + 1]);
        let val = a * y0 + b * y1 + ((a.powi(3) - a) * m0 + (b.powi(3) - b) * m1) * h * h / 6.0;
        let d1 = (y1 - y0) / h + (-(3.0 * a * a - 1.0) * m0 + (3.0 * b * b - 1.0) * m1) * h / 6.0;
        let d2 = a * m0 + b * m1;
        (val, d1, d2)
    }
}

/// Analytic trajectory built from a [`TrajectorySpec`].
#[derive(Clone, Debug)]
pub struct Trajectory {
    spec: TrajectorySpec,
    spline: Option<(CubicSpline, CubicSpline)>,
}

impl Trajectory {
    pub fn new(spec: TrajectorySpec) -> Result<Self> {
        if !(spec.duration > 0.0) || !(spec.speed > 0.0) {
            return Err(Error::Config("trajectory duration and speed must be positive".into()));
        }
        if spec.altitude_period <= 0.0 || spec.tilt_period <= 0.0 {
            return Err(Error::Config("oscillation periods must be positive".into()));
        }
        let spline = match &spec.path {
            PathKind::Circle { radius, .. } if !(*radius > 0.0) => {
                return Err(Error::Config("circle radius must be positive".into()))
            }
            PathKind::WaypointSpline { waypoints } => {
                if waypoints.len() < 3 {
                    return Err(Error::Config("waypoint spline needs at least 3 waypoints".into()));
                }
                let mut knots = vec![0.0];
                for w in waypoints.windows(2) {
                    let d = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
                    if d <= 0.0 {
                        return Err(Error::Config("repeated waypoint makes the spline non-differentiable".into()));
                    }
                    knots.push(knots.last().unwrap() + d / spec.speed);
                }
                let xs = waypoints.iter().map(|w| w[0]).collect();
                let ys = waypoints.iter().map(|w| w[1]).collect();
                Some((CubicSpline::new(knots.clone(), xs), CubicSpline::new(knots, ys)))
            }
            _ => None,
        };
        Ok(Self { spec, spline })
    }

    pub fn spec(&self) -> &TrajectorySpec {
        &self.spec
    }

    /// Horizontal position, velocity, acceleration.
    fn horizontal(&self, t: f64) -> ([f64; 2], [f64; 2], [f64; 2]) {
        use std::f64::consts::TAU;
        match &self.spec.path {
            PathKind::Circle { center, radius } => {
                let w = self.spec.speed / radius;
                let th = w * t;
                let (s, c) = th.sin_cos();
                (
                    [center[0] + radius * c, center[1] + radius * s],
                    [-radius * w * s, radius * w * c],
                    [-radius * w * w * c, -radius * w * w * s],
                )
            }
            PathKind::Lissajous {
                center,
                amplitude,
                frequency,
                phase,
            } => {
                let mut p = [0.0; 2];
                let mut v = [0.0; 2];
                let mut a = [0.0; 2];
                for k in 0..2 {
                    let w = TAU * frequency[k];
                    let (s, c) = (w * t + phase[k]).sin_cos();
                    p[k] = center[k] + amplitude[k] * s;
                    v[k] = amplitude[k] * w * c;
                    a[k] = -amplitude[k] * w * w * s;
                }
                (p, v, a)
            }
            PathKind::WaypointSpline { .. } => {
                let (sx, sy) = self.spline.as_ref().expect("built in new");
                let (x, vx, ax) = sx.eval(t);
                let (y, vy, ay) = sy.eval(t);
                ([x, y], [vx, vy], [ax, ay])
            }
        }
    }

    /// Full kinematics at time `t`.
    pub fn at(&self, t: f64) -> Kinematics {
        use std::f64::consts::TAU;
        let (p, v, a) = self.horizontal(t);
        let s = &self.spec;
        let wz = TAU / s.altitude_period;
        let (sz, cz) = (wz * t).sin_cos();
        // z is down
        let z = -(s.altitude + s.altitude_amplitude * sz);
        let vz = -s.altitude_amplitude * wz * cz;
        let az = s.altitude_amplitude * wz * wz * sz;

        // heading follows the horizontal velocity
        let speed2 = v[0] * v[0] + v[1] * v[1];
        let (yaw, yaw_rate) = if speed2 > 1e-12 {
            (v[1].atan2(v[0]), (v[0] * a[1] - v[1] * a[0]) / speed2)
        } else {
            (0.0, 0.0)
        };
        let wt = TAU / s.tilt_period;
        let roll = s.tilt_amplitude * (wt * t).sin();
        let roll_rate = s.tilt_amplitude * wt * (wt * t).cos();
        let pitch = s.tilt_amplitude * (0.5 * wt * t).sin();
        let pitch_rate = s.tilt_amplitude * 0.5 * wt * (0.5 * wt * t).cos();

        let rx = Rot3::exp(&(Vector3::x() * roll));
        let ry = Rot3::exp(&(Vector3::y() * pitch));
        let rz = Rot3::exp(&(Vector3::z() * yaw));
        let rot = rz.compose(&ry).compose(&rx);
        // body rate of R = Rz(yaw) Ry(pitch) Rx(roll)
        let omega_body = Vector3::x() * roll_rate
            + rx.matrix().tr_mul(&(Vector3::y() * pitch_rate))
            + ry.compose(&rx).matrix().tr_mul(&(Vector3::z() * yaw_rate));

        Kinematics {
            pose: ExtendedPose::new(
                rot,
                Vector3::new(v[0], v[1], vz),
                Vector3::new(p[0], p[1], z),
            ),
            accel_world: Vector3::new(a[0], a[1], az),
            omega_body,
        }
    }

    /// Noiseless IMU reading at `t`.
    pub fn imu_at(&self, t: f64, gravity: f64) -> ImuSample {
        let k = self.at(t);
        let specific = k.accel_world - Vector3::new(0.0, 0.0, gravity);
        ImuSample::new(t, k.omega_body, k.pose.rot.matrix().tr_mul(&specific))
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Random gap windows `(id, start, end)` over `[0, duration]` for each landmark.
pub fn dropout_windows(ids: &[u32], spec: &DropoutSpec, duration: f64, seed: u64) -> Vec<(u32, f64, f64)> {
    let mut out = spec.windows.clone();
    if spec.gap_rate > 0.0 {
        let exp = Exp::new(spec.gap_rate).expect("positive rate");
        let mut rng = stream_rng(seed, 3);
        for &id in ids {
            let mut t = 0.0;
            loop {
                t += exp.sample(&mut rng);
                if t >= duration {
                    break;
                }
                out.push((id, t, t + spec.gap_duration));
                t += spec.gap_duration;
            }
        }
    }
    out
}

/// Removes range samples that fall inside any gap window of their landmark.
pub fn apply_dropout(ranges: &[RangeSample], windows: &[(u32, f64, f64)]) -> Vec<RangeSample> {
    ranges
        .iter()
        .filter(|r| {
            !windows
                .iter()
                .any(|(id, a, b)| *id == r.landmark_id && r.t >= *a && r.t < *b)
        })
        .copied()
        .collect()
}

/// Generates truth, IMU and range streams. Identical inputs give identical outputs.
pub fn generate(traj: &TrajectorySpec, sensors: &SensorSpec, seed: u64) -> Result<SimOutput> {
    sensors.validate()?;
    let trajectory = Trajectory::new(traj.clone())?;
    let g = sensors.gravity;
    let n_imu = (traj.duration * sensors.imu_rate).round() as usize;
    let dt = 1.0 / sensors.imu_rate;
    let gyro_sd = sensors.gyro_noise_density * sensors.imu_rate.sqrt();
    let accel_sd = sensors.accel_noise_density * sensors.imu_rate.sqrt();
    let mut imu_rng = stream_rng(seed, 1);
    let mut range_rng = stream_rng(seed, 2);
    let noise3 = |rng: &mut ChaCha8Rng, sd: f64| {
        Vector3::from_fn(|_, _| {
            let z: f64 = rng.sample(StandardNormal);
            z * sd
        })
    };

    let mut truth = Vec::with_capacity(n_imu + 1);
    let mut imu = Vec::with_capacity(n_imu + 1);
    for k in 0..=n_imu {
        let t = k as f64 * dt;
        let kin = trajectory.at(t);
        truth.push(TruthSample { t, pose: kin.pose });
        let clean = trajectory.imu_at(t, g);
        let omega = clean.omega + noise3(&mut imu_rng, gyro_sd);
        let accel = clean.accel + noise3(&mut imu_rng, accel_sd);
        imu.push(ImuSample::new(t, omega, accel));
    }

    let landmarks: Vec<(u32, Vector3<f64>)> = sensors
        .landmarks
        .iter()
        .map(|(id, p)| (*id, Vector3::from(*p)))
        .collect();
    let mut sorted = landmarks.clone();
    sorted.sort_by_key(|l| l.0);

    let n_range = (traj.duration * sensors.range_rate).floor() as usize;
    let mut ranges = Vec::with_capacity(n_range * sorted.len());
    for j in 0..=n_range {
        let t = j as f64 / sensors.range_rate;
        if t > traj.duration {
            break;
        }
        let x = trajectory.at(t).pose.position;
        for (id, p) in &sorted {
            let z: f64 = range_rng.sample(StandardNormal);
            let r = ((p - x).norm() + z * sensors.range_sigma).max(1e-3);
            ranges.push(RangeSample::new(t, *id, r));
        }
    }
    let ids: Vec<u32> = sorted.iter().map(|l| l.0).collect();
    let windows = dropout_windows(&ids, &sensors.dropout, traj.duration, seed);
    let ranges = apply_dropout(&ranges, &windows);

    Ok(SimOutput {
        truth,
        imu,
        ranges,
        landmarks: sorted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stationary_hover_imu() {
        let mut spec = TrajectorySpec::circle(1.0, 1e-9, 5.0);
        spec.path = PathKind::Lissajous {
            center: [1.0, 2.0],
            amplitude: [0.0, 0.0],
            frequency: [0.1, 0.1],
            phase: [0.0, 0.0],
        };
        let traj = Trajectory::new(spec).unwrap();
        let u = traj.imu_at(2.0, 9.81);
        assert_eq!(u.omega, Vector3::zeros());
        assert!((u.accel - Vector3::new(0.0, 0.0, -9.81)).norm() < 1e-12);
    }

    #[test]
    fn circle_centripetal() {
        let traj = Trajectory::new(TrajectorySpec::circle(20.0, 4.0, 60.0)).unwrap();
        let k = traj.at(3.7);
        let horiz = k.accel_world.xy().norm();
        assert!((horiz - 16.0 / 20.0).abs() < 1e-12);
    }

    #[test]
    fn spline_interpolates_waypoints() {
        let mut spec = TrajectorySpec::circle(1.0, 2.0, 30.0);
        spec.path = PathKind::WaypointSpline {
            waypoints: vec![[0.0, 0.0], [10.0, 0.0], [10.0, 10.0], [0.0, 10.0]],
        };
        let traj = Trajectory::new(spec).unwrap();
        let k = traj.at(5.0);
        assert!((k.pose.position.xy() - nalgebra::Vector2::new(10.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn no_gaps_is_identity() {
        let r = vec![RangeSample::new(0.0, 1, 2.0), RangeSample::new(0.1, 1, 2.1)];
        assert_eq!(apply_dropout(&r, &[]), r);
    }

    #[test]
    fn explicit_gap_window() {
        let r: Vec<RangeSample> = (0..300)
            .map(|k| RangeSample::new(k as f64 * 0.1, (k % 2) as u32, 5.0))
            .collect();
        let out = apply_dropout(&r, &[(1, 5.0, 15.0)]);
        assert!(out.iter().all(|s| !(s.landmark_id == 1 && s.t >= 5.0 && s.t < 15.0)));
        assert_eq!(r.len() - out.len(), 50);
    }
}
