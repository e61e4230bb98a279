//! `rslam`: simulate datasets, run the filters and compare results.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 filter divergence.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rslam_core::filter::FilterKind;
use rslam_core::harness::{run_filter, Dataset};
use rslam_core::io::{load_dataset, save_dataset, RunConfig};
use rslam_core::report::{self, compare, read_metrics, write_run_outputs};
use rslam_core::sim::generate;
use rslam_core::Error;

#[derive(Parser)]
#[command(name = "rslam", version, about = "Range-only inertial SLAM: EqF and EKF")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic dataset (imu, range, truth, landmark CSVs).
    Simulate {
        /// TOML run configuration; built-in nominal scenario when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Existing directory to write the dataset into.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run one filter over a dataset and write the report and plot data.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dataset directory; when absent the configured scenario is simulated in memory.
        #[arg(long)]
        dataset_dir: Option<PathBuf>,
        /// Existing directory for outputs; only the report is printed when absent.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        filter: Option<FilterKind>,
        /// Seed for the in-memory simulation.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Merge metrics from several runs into one table.
    Compare {
        /// `metrics.csv` files or run output directories.
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        /// Directory to write `compare.csv` into.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

enum Failure {
    Usage(Error),
    Diverged,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Usage(e)
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, Error> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn out_dir(flag: Option<PathBuf>, cfg: &RunConfig) -> Option<PathBuf> {
    flag.or_else(|| cfg.paths.out_dir.clone())
}

fn simulate(config: Option<PathBuf>, out: Option<PathBuf>, seed: Option<u64>) -> Result<(), Failure> {
    let cfg = load_config(config.as_deref())?;
    let dir = out_dir(out, &cfg)
        .ok_or_else(|| Error::InvalidArgument("simulate needs --out-dir".into()))?;
    let sim = generate(
        &cfg.scenario.trajectory,
        &cfg.scenario.sensors,
        seed.unwrap_or(cfg.seed),
    )?;
    let data: Dataset = sim.into();
    save_dataset(&dir, &data)?;
    println!(
        "wrote {} imu, {} range, {} truth samples and {} landmarks to {}",
        data.imu.len(),
        data.ranges.len(),
        data.truth.len(),
        data.landmarks.len(),
        dir.display()
    );
    Ok(())
}

fn run(
    config: Option<PathBuf>,
    dataset: Option<PathBuf>,
    out: Option<PathBuf>,
    filter: Option<FilterKind>,
    seed: Option<u64>,
) -> Result<(), Failure> {
    let mut cfg = load_config(config.as_deref())?;
    if let Some(f) = filter {
        cfg.filter = f;
    }
    let data = match dataset.or_else(|| cfg.paths.dataset_dir.clone()) {
        Some(dir) => load_dataset(dir)?,
        None => generate(
            &cfg.scenario.trajectory,
            &cfg.scenario.sensors,
            seed.unwrap_or(cfg.seed),
        )?
        .into(),
    };
    let result = run_filter(&cfg.setup(), &data)?;
    let label = cfg.filter.name();
    print!("{}", report::report_text(label, &result));
    if let Some(dir) = out_dir(out, &cfg) {
        write_run_outputs(&dir, label, &result, &data)?;
    }
    if result.converged {
        Ok(())
    } else {
        Err(Failure::Diverged)
    }
}

fn compare_cmd(reports: Vec<PathBuf>, out: Option<PathBuf>) -> Result<(), Failure> {
    let mut rows = Vec::new();
    for p in &reports {
        let file = if p.is_dir() { p.join(report::METRICS_FILE) } else { p.clone() };
        let source = file
            .parent()
            .and_then(|d| d.file_name())
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        rows.extend(read_metrics(&file)?.into_iter().map(|r| (r, source.clone())));
    }
    let duplicated = |run: &str| rows.iter().filter(|(r, _)| r.run == run).count() > 1;
    let labelled: Vec<_> = rows
        .iter()
        .map(|(r, src)| {
            let mut r = r.clone();
            if duplicated(&r.run) && !src.is_empty() {
                r.run = format!("{}@{src}", r.run);
            }
            r
        })
        .collect();
    let table = compare(labelled);
    print!("{}", table.table_text());
    if let Some(dir) = out {
        let path = dir.join(report::COMPARE_FILE);
        let mut buf = Vec::new();
        table
            .write_csv(&mut buf)
            .and_then(|_| std::fs::write(&path, buf))
            .map_err(|e| Error::Io { path, source: e })?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match cli.cmd {
        Cmd::Simulate { config, out_dir, seed } => simulate(config, out_dir, seed),
        Cmd::Run {
            config,
            dataset_dir,
            out_dir,
            filter,
            seed,
        } => run(config, dataset_dir, out_dir, filter, seed),
        Cmd::Compare { reports, out_dir } => compare_cmd(reports, out_dir),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Diverged) => {
            eprintln!("error: filter failed to converge");
            ExitCode::from(2)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
