//! Run reports, plot-ready tables and run comparison.
//!
//! Files written by [`write_run_outputs`]:
//!
//! - `report.txt`: human-readable summary
//! - `metrics.csv`: `run,filter,converged,rmse_whole,rmse_last40,map_mean,map_std,failure`
//! - `path.csv`: `series,t,x,y,z` with series `estimate`, `aligned` and `truth`
//! - `landmarks.csv`: `series,landmark_id,x,y,z` with the same series
//! - `landmark_error.csv`: `t,landmark_id,error` (unaligned, metres)
//!
//! All output is a pure function of the inputs, so repeated runs are byte-identical.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::eval::match_times;
use crate::filter::FilterKind;
use crate::harness::{Dataset, Metrics, RunResult};
use crate::io::fmt_f64;

pub const METRICS_HEADER: [&str; 8] = [
    "run",
    "filter",
    "converged",
    "rmse_whole",
    "rmse_last40",
    "map_mean",
    "map_std",
    "failure",
];

pub const REPORT_FILE: &str = "report.txt";
pub const METRICS_FILE: &str = "metrics.csv";
pub const PATH_FILE: &str = "path.csv";
pub const LANDMARKS_FILE: &str = "landmarks.csv";
pub const LANDMARK_ERROR_FILE: &str = "landmark_error.csv";
pub const COMPARE_FILE: &str = "compare.csv";

/// One line of `metrics.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub run: String,
    pub filter: FilterKind,
    pub converged: bool,
    pub metrics: Option<Metrics>,
    pub failure: Option<String>,
}

impl MetricsRow {
    pub fn from_result(run: &str, r: &RunResult) -> Self {
        Self {
            run: run.to_string(),
            filter: r.kind,
            converged: r.converged,
            metrics: r.metrics.clone(),
            failure: r.failure.clone(),
        }
    }

    fn values(&self) -> [Option<f64>; 4] {
        match &self.metrics {
            Some(m) => [
                Some(m.rmse_whole),
                Some(m.rmse_last40),
                Some(m.map_mean),
                Some(m.map_std),
            ],
            None => [None; 4],
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

pub fn write_metrics<W: Write>(w: W, rows: &[MetricsRow]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(METRICS_HEADER)?;
    for r in rows {
        let [a, b, c, d] = r.values();
        w.write_record([
            r.run.clone(),
            r.filter.name().to_string(),
            r.converged.to_string(),
            opt(a),
            opt(b),
            opt(c),
            opt(d),
            r.failure.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<MetricsRow>> {
    let path = path.as_ref();
    let perr = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => perr(1, format!("{other:?}")),
        })?;
    let header = rdr.headers().map_err(|e| perr(1, e.to_string()))?.clone();
    if header.iter().ne(METRICS_HEADER) {
        return Err(perr(1, format!("expected header '{}'", METRICS_HEADER.join(","))));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| perr(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let num = |i: usize| -> Result<Option<f64>> {
            if rec[i].is_empty() {
                return Ok(None);
            }
            rec[i]
                .parse()
                .map(Some)
                .map_err(|_| perr(line, format!("column '{}': invalid number '{}'", METRICS_HEADER[i], &rec[i])))
        };
        let filter = rec[1]
            .parse()
            .map_err(|_| perr(line, format!("column 'filter': unknown filter '{}'", &rec[1])))?;
        let converged = rec[2]
            .parse()
            .map_err(|_| perr(line, format!("column 'converged': expected true/false, got '{}'", &rec[2])))?;
        let metrics = match (num(3)?, num(4)?, num(5)?, num(6)?) {
            (Some(a), Some(b), Some(c), Some(d)) => Some(Metrics {
                rmse_whole: a,
                rmse_last40: b,
                map_mean: c,
                map_std: d,
            }),
            _ => None,
        };
        rows.push(MetricsRow {
            run: rec[0].to_string(),
            filter,
            converged,
            metrics,
            failure: (!rec[7].is_empty()).then(|| rec[7].to_string()),
        });
    }
    Ok(rows)
}

/// Human-readable single-run summary.
pub fn report_text(run: &str, r: &RunResult) -> String {
    let mut s = String::new();
    let f = |v: f64| format!("{v:.6}");
    let _ = writeln!(s, "run: {run}");
    let _ = writeln!(s, "filter: {}", r.kind.name());
    let _ = writeln!(s, "converged: {}", if r.converged { "yes" } else { "NO" });
    if let Some(msg) = &r.failure {
        let _ = writeln!(s, "failure: {msg}");
    }
    if let Some((t0, t1)) = r.path.first().zip(r.path.last()).map(|(a, b)| (a.0, b.0)) {
        let _ = writeln!(s, "time span: {} s .. {} s", f(t0), f(t1));
    }
    match &r.metrics {
        Some(m) => {
            let _ = writeln!(s, "rmse whole (m): {}", f(m.rmse_whole));
            let _ = writeln!(s, "rmse last 40% (m): {}", f(m.rmse_last40));
            let _ = writeln!(s, "mapping error (m): {} +- {}", f(m.map_mean), f(m.map_std));
        }
        None => {
            let _ = writeln!(s, "metrics: unavailable");
        }
    }
    let last_err: BTreeMap<u32, f64> = r.landmark_errors.iter().map(|&(_, id, e)| (id, e)).collect();
    let _ = writeln!(s, "landmarks: {}", r.final_landmarks.len());
    let _ = writeln!(s, "  {:>6} {:>12} {:>8} {:>14}", "id", "first_t_s", "ranges", "final_err_m");
    for (id, _) in &r.final_landmarks {
        let (t0, n) = r.observations.get(id).copied().unwrap_or((f64::NAN, 0));
        let err = last_err.get(id).map_or("-".to_string(), |e| f(*e));
        let _ = writeln!(s, "  {id:>6} {:>12} {n:>8} {err:>14}", f(t0));
    }
    s
}

fn write_file(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(io_err(path))?;
    fs::write(path, buf).map_err(io_err(path))
}

fn xyz(v: &Vector3<f64>) -> [String; 3] {
    [fmt_f64(v.x), fmt_f64(v.y), fmt_f64(v.z)]
}

/// Writes every output of one run into an existing directory.
pub fn write_run_outputs(dir: &Path, run: &str, r: &RunResult, data: &Dataset) -> Result<()> {
    if !dir.is_dir() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "output directory does not exist"),
        ));
    }
    fs::write(dir.join(REPORT_FILE), report_text(run, r)).map_err(io_err(&dir.join(REPORT_FILE)))?;
    write_file(&dir.join(METRICS_FILE), |b| {
        write_metrics(b, &[MetricsRow::from_result(run, r)])
    })?;

    write_file(&dir.join(PATH_FILE), |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["series", "t", "x", "y", "z"])?;
        for (t, p) in &r.path {
            let [x, y, z] = xyz(&p.position);
            w.write_record(["estimate", &fmt_f64(*t), &x, &y, &z])?;
        }
        if let Some(tf) = &r.alignment {
            for (t, p) in &r.path {
                let [x, y, z] = xyz(&tf.apply(&p.position));
                w.write_record(["aligned", &fmt_f64(*t), &x, &y, &z])?;
            }
        }
        if !data.truth.is_empty() {
            let est_t: Vec<f64> = r.path.iter().map(|p| p.0).collect();
            let truth_t: Vec<f64> = data.truth.iter().map(|s| s.t).collect();
            for k in match_times(&est_t, &truth_t).into_iter().flatten() {
                let s = &data.truth[k];
                let [x, y, z] = xyz(&s.pose.position);
                w.write_record(["truth", &fmt_f64(s.t), &x, &y, &z])?;
            }
        }
        w.flush()
    })?;

    write_file(&dir.join(LANDMARKS_FILE), |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["series", "landmark_id", "x", "y", "z"])?;
        let mut put = |series: &str, id: u32, p: &Vector3<f64>| {
            let [x, y, z] = xyz(p);
            w.write_record([series, &id.to_string(), &x, &y, &z])
        };
        for (id, p) in &r.final_landmarks {
            put("estimate", *id, p)?;
        }
        if let Some(tf) = &r.alignment {
            for (id, p) in &r.final_landmarks {
                put("aligned", *id, &tf.apply(p))?;
            }
        }
        for (id, p) in &data.landmarks {
            put("truth", *id, p)?;
        }
        w.flush()
    })?;

    write_file(&dir.join(LANDMARK_ERROR_FILE), |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["t", "landmark_id", "error"])?;
        for (t, id, e) in &r.landmark_errors {
            w.write_record([fmt_f64(*t), id.to_string(), fmt_f64(*e)])?;
        }
        w.flush()
    })
}

const COLUMNS: [&str; 4] = ["rmse_whole", "rmse_last40", "map_mean", "map_std"];

/// Merged runs with the best converged value of each metric.
#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub rows: Vec<MetricsRow>,
    /// Row index holding the minimum of each metric column, among converged runs.
    pub best: [Option<usize>; 4],
}

pub fn compare(rows: Vec<MetricsRow>) -> Comparison {
    let mut best = [None; 4];
    for (c, slot) in best.iter_mut().enumerate() {
        let mut top: Option<(usize, f64)> = None;
        for (i, r) in rows.iter().enumerate() {
            if !r.converged {
                continue;
            }
            if let Some(v) = r.values()[c].filter(|v| v.is_finite()) {
                if top.is_none_or(|(_, b)| v < b) {
                    top = Some((i, v));
                }
            }
        }
        *slot = top.map(|t| t.0);
    }
    Comparison { rows, best }
}

impl Comparison {
    fn is_best(&self, row: usize, col: usize) -> bool {
        self.best[col] == Some(row)
    }

    /// Fixed-width table; `*` marks the best value per column, failed runs are flagged.
    pub fn table_text(&self) -> String {
        let width = self.rows.iter().map(|r| r.run.len()).max().unwrap_or(3).max(3);
        let mut s = String::new();
        let _ = write!(s, "{:<width$}  {:<6} {:<10}", "run", "filter", "status");
        for c in COLUMNS {
            let _ = write!(s, " {c:>12}");
        }
        s.push('\n');
        for (i, r) in self.rows.iter().enumerate() {
            let status = if r.converged { "ok" } else { "DIVERGED" };
            let _ = write!(s, "{:<width$}  {:<6} {:<10}", r.run, r.filter.name(), status);
            for (c, v) in r.values().iter().enumerate() {
                let cell = match v {
                    Some(v) => format!("{v:.4}{}", if self.is_best(i, c) { "*" } else { " " }),
                    None => "-".to_string(),
                };
                let _ = write!(s, " {cell:>12}");
            }
            s.push('\n');
        }
        s.push_str("* best per column among converged runs\n");
        if self.rows.iter().any(|r| !r.converged) {
            s.push_str("DIVERGED: filter failed to converge; excluded from ranking\n");
        }
        s
    }

    /// Metrics rows plus a `best` column listing the metrics each row wins.
    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(w);
        let mut header: Vec<&str> = METRICS_HEADER.to_vec();
        header.push("best");
        w.write_record(&header)?;
        for (i, r) in self.rows.iter().enumerate() {
            let [a, b, c, d] = r.values();
            let best: Vec<&str> = (0..4).filter(|&c| self.is_best(i, c)).map(|c| COLUMNS[c]).collect();
            w.write_record([
                r.run.clone(),
                r.filter.name().to_string(),
                r.converged.to_string(),
                opt(a),
                opt(b),
                opt(c),
                opt(d),
                r.failure.clone().unwrap_or_default(),
                best.join(";"),
            ])?;
        }
        w.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(run: &str, v: Option<f64>, converged: bool) -> MetricsRow {
        MetricsRow {
            run: run.into(),
            filter: FilterKind::Eqf,
            converged,
            metrics: v.map(|v| Metrics {
                rmse_whole: v,
                rmse_last40: v,
                map_mean: v,
                map_std: v,
            }),
            failure: (!converged).then(|| "diverged".into()),
        }
    }

    #[test]
    fn single_report_single_row() {
        let c = compare(vec![row("a", Some(1.0), true)]);
        assert_eq!(c.rows.len(), 1);
        assert_eq!(c.best, [Some(0); 4]);
    }

    #[test]
    fn minimum_is_marked_best() {
        let c = compare(vec![row("a", Some(2.0), true), row("b", Some(1.0), true)]);
        assert_eq!(c.best, [Some(1); 4]);
        let t = c.table_text();
        assert!(t.contains("1.0000*") && !t.contains("2.0000*"), "{t}");
    }

    #[test]
    fn diverged_run_is_flagged_and_not_ranked() {
        let c = compare(vec![row("a", Some(2.0), true), row("b", Some(1.0), false)]);
        assert_eq!(c.best, [Some(0); 4]);
        assert!(c.table_text().contains("DIVERGED"));
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().nth(2).unwrap().starts_with("b,eqf,false"), "{text}");
    }
}
