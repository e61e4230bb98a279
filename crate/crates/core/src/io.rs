//! On-disk data contract: four CSV streams and the TOML run configuration.
//!
//! Every CSV file is UTF-8, comma separated, with exactly one header line.
//! Times are seconds, positions metres, rates rad/s, accelerations m/s^2.
//!
//! | file            | header                                   |
//! |-----------------|------------------------------------------|
//! | `imu.csv`       | `t,wx,wy,wz,ax,ay,az`                    |
//! | `range.csv`     | `t,landmark_id,range`                    |
//! | `truth.csv`     | `t,px,py,pz,qw,qx,qy,qz,vx,vy,vz`        |
//! | `landmarks.csv` | `landmark_id,px,py,pz`                   |
//!
//! Floats are written in the shortest decimal form that parses back to the
//! same `f64`, so write followed by read is the identity on every column
//! except the truth attitude, which passes through a quaternion.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::{Matrix6, Vector3};
use serde::{Deserialize, Serialize};

use crate::ekf::{EkfConfig, AERIAL_LANDMARK_VARIANCE, GROUND_LANDMARK_VARIANCE};
use crate::eqf::{EqfConfig, ImuSample, NoiseConfig, RangeSample, ResetMode, DEFAULT_GRAVITY};
use crate::error::{Error, Result};
use crate::filter::FilterKind;
use crate::harness::{Dataset, FilterSetup, LandmarkInit};
use crate::lie::se23::Matrix9;
use crate::lie::{ExtendedPose, Rot3};
use crate::sim::{SensorSpec, TrajectorySpec, TruthSample};

pub const IMU_HEADER: [&str; 7] = ["t", "wx", "wy", "wz", "ax", "ay", "az"];
pub const RANGE_HEADER: [&str; 3] = ["t", "landmark_id", "range"];
pub const TRUTH_HEADER: [&str; 11] = [
    "t", "px", "py", "pz", "qw", "qx", "qy", "qz", "vx", "vy", "vz",
];
pub const LANDMARK_HEADER: [&str; 4] = ["landmark_id", "px", "py", "pz"];

pub const IMU_FILE: &str = "imu.csv";
pub const RANGE_FILE: &str = "range.csv";
pub const TRUTH_FILE: &str = "truth.csv";
pub const LANDMARK_FILE: &str = "landmarks.csv";

/// Allowed deviation of a truth quaternion from unit norm.
pub const QUATERNION_TOLERANCE: f64 = 1e-6;

/// Shortest round-trip decimal.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// One parsed data row with its 1-based line number.
struct Row<'a> {
    path: &'a Path,
    line: usize,
    header: &'a [&'a str],
    rec: csv::StringRecord,
}

impl Row<'_> {
    fn f64(&self, col: usize) -> Result<f64> {
        let raw = &self.rec[col];
        let v: f64 = raw.parse().map_err(|_| {
            parse_err(
                self.path,
                self.line,
                format!("column '{}': invalid number '{raw}'", self.header[col]),
            )
        })?;
        if !v.is_finite() {
            return Err(parse_err(
                self.path,
                self.line,
                format!("column '{}': non-finite value '{raw}'", self.header[col]),
            ));
        }
        Ok(v)
    }

    fn id(&self, col: usize) -> Result<u32> {
        let raw = &self.rec[col];
        raw.parse().map_err(|_| {
            parse_err(
                self.path,
                self.line,
                format!("column '{}': invalid landmark id '{raw}'", self.header[col]),
            )
        })
    }

    fn vec3(&self, col: usize) -> Result<Vector3<f64>> {
        Ok(Vector3::new(self.f64(col)?, self.f64(col + 1)?, self.f64(col + 2)?))
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        parse_err(self.path, self.line, msg)
    }
}

fn read_rows<'a, R: Read>(
    reader: R,
    path: &'a Path,
    header: &'a [&'a str],
) -> Result<Vec<Row<'a>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    let csv_err = |e: csv::Error| {
        let line = e.position().map_or(0, |p| p.line() as usize);
        parse_err(path, line, e.to_string())
    };
    match records.next() {
        None => return Err(parse_err(path, 1, "missing header line")),
        Some(r) => {
            let got = r.map_err(csv_err)?;
            if got.len() != header.len() {
                return Err(parse_err(
                    path,
                    1,
                    format!("header has {} columns, expected '{}'", got.len(), header.join(",")),
                ));
            }
            for (i, (g, want)) in got.iter().zip(header).enumerate() {
                if g != *want {
                    return Err(parse_err(
                        path,
                        1,
                        format!("header column {} is '{g}', expected '{want}'", i + 1),
                    ));
                }
            }
        }
    }
    let mut rows = Vec::new();
    for r in records {
        let rec = r.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != header.len() {
            return Err(parse_err(
                path,
                line,
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        rows.push(Row {
            path,
            line,
            header,
            rec,
        });
    }
    Ok(rows)
}

fn check_time(row: &Row, t: f64, prev: Option<f64>, strict: bool) -> Result<()> {
    if let Some(p) = prev {
        if t < p || (strict && t == p) {
            return Err(row.err(format!("column 't': timestamp {t} does not increase after {p}")));
        }
    }
    Ok(())
}

pub fn read_imu<R: Read>(reader: R, path: &Path) -> Result<Vec<ImuSample>> {
    let rows = read_rows(reader, path, &IMU_HEADER)?;
    let mut out: Vec<ImuSample> = Vec::with_capacity(rows.len());
    for row in &rows {
        let t = row.f64(0)?;
        check_time(row, t, out.last().map(|s| s.t), true)?;
        out.push(ImuSample::new(t, row.vec3(1)?, row.vec3(4)?));
    }
    Ok(out)
}

/// Ranges may share a timestamp (simultaneous beacons) but never go back in time.
pub fn read_ranges<R: Read>(reader: R, path: &Path) -> Result<Vec<RangeSample>> {
    let rows = read_rows(reader, path, &RANGE_HEADER)?;
    let mut out: Vec<RangeSample> = Vec::with_capacity(rows.len());
    for row in &rows {
        let t = row.f64(0)?;
        check_time(row, t, out.last().map(|s| s.t), false)?;
        let id = row.id(1)?;
        let range = row.f64(2)?;
        if range < 0.0 {
            return Err(row.err(format!("column 'range': negative range {range}")));
        }
        out.push(RangeSample::new(t, id, range));
    }
    Ok(out)
}

pub fn read_truth<R: Read>(reader: R, path: &Path) -> Result<Vec<TruthSample>> {
    let rows = read_rows(reader, path, &TRUTH_HEADER)?;
    let mut out: Vec<TruthSample> = Vec::with_capacity(rows.len());
    for row in &rows {
        let t = row.f64(0)?;
        check_time(row, t, out.last().map(|s| s.t), true)?;
        let position = row.vec3(1)?;
        let (w, x, y, z) = (row.f64(4)?, row.f64(5)?, row.f64(6)?, row.f64(7)?);
        let norm = (w * w + x * x + y * y + z * z).sqrt();
        if (norm - 1.0).abs() > QUATERNION_TOLERANCE {
            return Err(row.err(format!("columns 'qw'..'qz': quaternion norm {norm} is not 1")));
        }
        let velocity = row.vec3(8)?;
        out.push(TruthSample {
            t,
            pose: ExtendedPose::new(Rot3::from_quaternion(w, x, y, z), velocity, position),
        });
    }
    Ok(out)
}

pub fn read_landmarks<R: Read>(reader: R, path: &Path) -> Result<Vec<(u32, Vector3<f64>)>> {
    let rows = read_rows(reader, path, &LANDMARK_HEADER)?;
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(rows.len());
    for row in &rows {
        let id = row.id(0)?;
        if !seen.insert(id) {
            return Err(row.err(format!("column 'landmark_id': duplicate id {id}")));
        }
        out.push((id, row.vec3(1)?));
    }
    Ok(out)
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

pub fn load_imu_csv(path: impl AsRef<Path>) -> Result<Vec<ImuSample>> {
    let path = path.as_ref();
    read_imu(open(path)?, path)
}

pub fn load_range_csv(path: impl AsRef<Path>) -> Result<Vec<RangeSample>> {
    let path = path.as_ref();
    read_ranges(open(path)?, path)
}

pub fn load_truth_csv(path: impl AsRef<Path>) -> Result<Vec<TruthSample>> {
    let path = path.as_ref();
    read_truth(open(path)?, path)
}

pub fn load_landmarks_csv(path: impl AsRef<Path>) -> Result<Vec<(u32, Vector3<f64>)>> {
    let path = path.as_ref();
    read_landmarks(open(path)?, path)
}

fn finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

fn write_table<W: Write>(
    writer: W,
    header: &[&str],
    rows: impl Iterator<Item = Result<Vec<String>>>,
) -> std::io::Result<std::result::Result<(), Error>> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header)?;
    for r in rows {
        match r {
            Ok(fields) => w.write_record(&fields)?,
            Err(e) => return Ok(Err(e)),
        }
    }
    w.flush()?;
    Ok(Ok(()))
}

fn finish(res: std::io::Result<std::result::Result<(), Error>>, path: &Path) -> Result<()> {
    res.map_err(|e| Error::io(path, e))?
}

fn v3(v: &Vector3<f64>) -> [String; 3] {
    [fmt_f64(v.x), fmt_f64(v.y), fmt_f64(v.z)]
}

pub fn write_imu<W: Write>(writer: W, path: &Path, imu: &[ImuSample]) -> Result<()> {
    let rows = imu.iter().map(|s| {
        finite(&[s.t], "imu")?;
        finite(s.omega.as_slice(), "imu")?;
        finite(s.accel.as_slice(), "imu")?;
        let mut r = vec![fmt_f64(s.t)];
        r.extend(v3(&s.omega));
        r.extend(v3(&s.accel));
        Ok(r)
    });
    finish(write_table(writer, &IMU_HEADER, rows), path)
}

pub fn write_ranges<W: Write>(writer: W, path: &Path, ranges: &[RangeSample]) -> Result<()> {
    let rows = ranges.iter().map(|s| {
        finite(&[s.t, s.range], "range")?;
        Ok(vec![fmt_f64(s.t), s.landmark_id.to_string(), fmt_f64(s.range)])
    });
    finish(write_table(writer, &RANGE_HEADER, rows), path)
}

pub fn write_truth<W: Write>(writer: W, path: &Path, truth: &[TruthSample]) -> Result<()> {
    let rows = truth.iter().map(|s| {
        if !s.pose.is_finite() || !s.t.is_finite() {
            return Err(Error::NonFinite("truth"));
        }
        let q = s.pose.rot.to_quaternion();
        let mut r = vec![fmt_f64(s.t)];
        r.extend(v3(&s.pose.position));
        r.extend(q.iter().map(|&c| fmt_f64(c)));
        r.extend(v3(&s.pose.velocity));
        Ok(r)
    });
    finish(write_table(writer, &TRUTH_HEADER, rows), path)
}

pub fn write_landmarks<W: Write>(
    writer: W,
    path: &Path,
    landmarks: &[(u32, Vector3<f64>)],
) -> Result<()> {
    let rows = landmarks.iter().map(|(id, p)| {
        finite(p.as_slice(), "landmarks")?;
        let mut r = vec![id.to_string()];
        r.extend(v3(p));
        Ok(r)
    });
    finish(write_table(writer, &LANDMARK_HEADER, rows), path)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

pub fn save_imu_csv(path: impl AsRef<Path>, imu: &[ImuSample]) -> Result<()> {
    let path = path.as_ref();
    write_imu(create(path)?, path, imu)
}

pub fn save_range_csv(path: impl AsRef<Path>, ranges: &[RangeSample]) -> Result<()> {
    let path = path.as_ref();
    write_ranges(create(path)?, path, ranges)
}

pub fn save_truth_csv(path: impl AsRef<Path>, truth: &[TruthSample]) -> Result<()> {
    let path = path.as_ref();
    write_truth(create(path)?, path, truth)
}

pub fn save_landmarks_csv(path: impl AsRef<Path>, landmarks: &[(u32, Vector3<f64>)]) -> Result<()> {
    let path = path.as_ref();
    write_landmarks(create(path)?, path, landmarks)
}

/// Writes the four files into an existing directory.
pub fn save_dataset(dir: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "output directory does not exist"),
        ));
    }
    save_imu_csv(dir.join(IMU_FILE), &data.imu)?;
    save_range_csv(dir.join(RANGE_FILE), &data.ranges)?;
    save_truth_csv(dir.join(TRUTH_FILE), &data.truth)?;
    save_landmarks_csv(dir.join(LANDMARK_FILE), &data.landmarks)
}

/// IMU and range files are required; truth and landmark files are optional.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let optional = |name: &str| {
        let p = dir.join(name);
        p.exists().then_some(p)
    };
    Ok(Dataset {
        imu: load_imu_csv(dir.join(IMU_FILE))?,
        ranges: load_range_csv(dir.join(RANGE_FILE))?,
        truth: optional(TRUTH_FILE)
            .map(load_truth_csv)
            .transpose()?
            .unwrap_or_default(),
        landmarks: optional(LANDMARK_FILE)
            .map(load_landmarks_csv)
            .transpose()?
            .unwrap_or_default(),
    })
}

// ---------------------------------------------------------------------------
// Run configuration

/// Named EKF landmark priors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LandmarkProfile {
    /// 50 m^2 per axis.
    Aerial,
    /// 10 m^2 per axis.
    Ground,
}

impl LandmarkProfile {
    pub fn variance(self) -> f64 {
        match self {
            LandmarkProfile::Aerial => AERIAL_LANDMARK_VARIANCE,
            LandmarkProfile::Ground => GROUND_LANDMARK_VARIANCE,
        }
    }
}

/// EKF landmark prior: a profile name or three variances in m^2.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EkfLandmarkPrior {
    Profile(LandmarkProfile),
    Diagonal([f64; 3]),
}

impl EkfLandmarkPrior {
    pub fn diagonal(&self) -> [f64; 3] {
        match self {
            EkfLandmarkPrior::Profile(p) => [p.variance(); 3],
            EkfLandmarkPrior::Diagonal(d) => *d,
        }
    }
}

/// Process and measurement noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    /// Gyro white-noise PSD, (rad/s)^2/Hz.
    pub gyro_psd: f64,
    /// Accelerometer white-noise PSD, (m/s^2)^2/Hz.
    pub accel_psd: f64,
    /// Range standard deviation, m.
    pub range_sigma: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        let n = NoiseConfig::default();
        Self {
            gyro_psd: n.input_gain[(0, 0)],
            accel_psd: n.input_gain[(3, 3)],
            range_sigma: n.range_variance.sqrt(),
        }
    }
}

/// Initial covariances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitSection {
    /// Navigation error variances: rotation (rad^2) x3, velocity ((m/s)^2) x3, position (m^2) x3.
    pub nav: [f64; 9],
    /// EqF landmark variances in chart coordinates (two bearing, one log-range).
    pub landmark: [f64; 3],
    /// EKF landmark variances, `"aerial"`, `"ground"` or `[x, y, z]` in m^2.
    pub ekf_landmark: EkfLandmarkPrior,
}

impl Default for InitSection {
    fn default() -> Self {
        let n = NoiseConfig::default();
        let mut nav = [0.0; 9];
        for (i, v) in nav.iter_mut().enumerate() {
            *v = n.initial_nav[(i, i)];
        }
        Self {
            nav,
            landmark: [
                n.initial_landmark[(0, 0)],
                n.initial_landmark[(1, 1)],
                n.initial_landmark[(2, 2)],
            ],
            ekf_landmark: EkfLandmarkPrior::Profile(LandmarkProfile::Aerial),
        }
    }
}

/// Simulated scene used by `simulate`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    pub trajectory: TrajectorySpec,
    pub sensors: SensorSpec,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            trajectory: TrajectorySpec::nominal_aerial(60.0),
            sensors: SensorSpec::nominal(),
        }
    }
}

/// Directories; relative entries resolve against the config file's directory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    pub dataset_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

/// Everything a `simulate` or `run` invocation needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub filter: FilterKind,
    /// Simulation seed.
    pub seed: u64,
    /// Gravity magnitude, m/s^2, acting along +e3 (down).
    pub gravity: f64,
    pub reset_mode: ResetMode,
    /// Squared Mahalanobis gate per range; absent disables gating.
    pub gate: Option<f64>,
    pub landmark_init: LandmarkInit,
    pub noise: NoiseSection,
    pub init: InitSection,
    pub scenario: ScenarioSection,
    pub paths: PathsSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            filter: FilterKind::Eqf,
            seed: 0,
            gravity: DEFAULT_GRAVITY,
            reset_mode: ResetMode::default(),
            gate: None,
            landmark_init: LandmarkInit::default(),
            noise: NoiseSection::default(),
            init: InitSection::default(),
            scenario: ScenarioSection::default(),
            paths: PathsSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg =
            Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.paths.dataset_dir, &mut cfg.paths.out_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.gravity.is_finite() && self.gravity >= 0.0) {
            return bad(format!("gravity must be finite and >= 0, got {}", self.gravity));
        }
        if let Some(g) = self.gate {
            if !(g > 0.0) {
                return bad(format!("gate must be positive, got {g}"));
            }
        }
        if !(self.noise.range_sigma > 0.0) {
            return bad(format!("noise.range_sigma must be positive, got {}", self.noise.range_sigma));
        }
        if !(self.noise.gyro_psd >= 0.0 && self.noise.accel_psd >= 0.0) {
            return bad("noise PSDs must be non-negative".into());
        }
        if self.init.ekf_landmark.diagonal().iter().any(|v| !(*v > 0.0)) {
            return bad("init.ekf_landmark variances must be positive".into());
        }
        self.noise_config().validate()
    }

    pub fn noise_config(&self) -> NoiseConfig {
        let mut input = [0.0; 6];
        input[..3].fill(self.noise.gyro_psd);
        input[3..].fill(self.noise.accel_psd);
        NoiseConfig {
            input_gain: Matrix6::from_diagonal(&input.into()),
            range_variance: self.noise.range_sigma * self.noise.range_sigma,
            initial_nav: Matrix9::from_diagonal(&self.init.nav.into()),
            initial_landmark: nalgebra::Matrix3::from_diagonal(&self.init.landmark.into()),
        }
    }

    pub fn setup(&self) -> FilterSetup {
        let noise = self.noise_config();
        FilterSetup {
            kind: self.filter,
            eqf: EqfConfig {
                noise: noise.clone(),
                gravity: self.gravity,
                reset_mode: self.reset_mode,
                gate: self.gate,
            },
            ekf: EkfConfig {
                noise,
                landmark_variance: self.init.ekf_landmark.diagonal().into(),
                gravity: self.gravity,
            },
            landmark_init: self.landmark_init,
            initial_pose: None,
        }
    }
}
