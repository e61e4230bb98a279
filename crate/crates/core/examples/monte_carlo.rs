//! Monte Carlo comparison of the EqF and the EKF on the nominal scenario.
//!
//! cargo run --release --example monte_carlo -- [runs] [first_seed] [duration_s]

use rslam_core::filter::FilterKind;
use rslam_core::harness::{landmark_convergence, run_filter, Dataset, FilterSetup, RunResult};
use rslam_core::sim::{generate, SensorSpec, TrajectorySpec};

fn arg<T: std::str::FromStr>(i: usize, default: T) -> T {
    std::env::args()
        .nth(i)
        .map(|s| s.parse().unwrap_or_else(|_| panic!("bad argument {s}")))
        .unwrap_or(default)
}

fn cell(r: &RunResult) -> String {
    match &r.metrics {
        Some(m) if r.converged => format!(
            "{:7.3} {:7.3} {:7.3}",
            m.rmse_last40,
            m.map_mean,
            landmark_convergence(r, 20.0, 20).unwrap_or(f64::NAN)
        ),
        _ => format!("{:>23}", "diverged"),
    }
}

fn main() {
    let runs: u64 = arg(1, 20);
    let first: u64 = arg(2, 0);
    let duration: f64 = arg(3, 180.0);
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let seeds: Vec<u64> = (first..first + runs).collect();

    let mut results = Vec::new();
    for chunk in seeds.chunks(threads) {
        std::thread::scope(|s| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|&seed| {
                    s.spawn(move || {
                        let data: Dataset =
                            generate(&TrajectorySpec::nominal_aerial(duration), &SensorSpec::nominal(), seed)
                                .expect("nominal scenario is valid")
                                .into();
                        let eqf = run_filter(&FilterSetup::new(FilterKind::Eqf), &data).unwrap();
                        let ekf = run_filter(&FilterSetup::new(FilterKind::Ekf), &data).unwrap();
                        (seed, eqf, ekf)
                    })
                })
                .collect();
            results.extend(handles.into_iter().map(|h| h.join().unwrap()));
        });
    }

    println!("seed | eqf last40  map  lm@20s | ekf last40  map  lm@20s");
    let (mut map_wins, mut rmse_wins) = (0, 0);
    for (seed, e, k) in &results {
        println!("{seed:4} | {} | {}", cell(e), cell(k));
        match (&e.metrics, &k.metrics) {
            (Some(me), Some(mk)) if k.converged => {
                map_wins += (me.map_mean < mk.map_mean) as usize;
                rmse_wins += (me.rmse_last40 < mk.rmse_last40) as usize;
            }
            (Some(_), _) if e.converged => {
                map_wins += 1;
                rmse_wins += 1;
            }
            _ => {}
        }
    }
    println!("EqF better mapping in {map_wins}/{runs} runs, better last-40% RMSE in {rmse_wins}/{runs}");
}
