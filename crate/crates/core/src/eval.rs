//! Rigid alignment and error metrics.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::lie::Rot3;

/// Rigid transform `p -> R p + t` (scale fixed to one).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform {
    pub rot: Rot3,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rot: Rot3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rot.act(p) + self.translation
    }
}

/// Least-squares rigid registration of `est` onto `truth` (Umeyama without scale).
pub fn umeyama_align(est: &[Vector3<f64>], truth: &[Vector3<f64>]) -> Result<RigidTransform> {
    if est.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "{} estimated points vs {} true points",
            est.len(),
            truth.len()
        )));
    }
    if est.len() < 3 {
        return Err(Error::DegeneratePoints("need at least three correspondences"));
    }
    let n = est.len() as f64;
    let mu_e = est.iter().sum::<Vector3<f64>>() / n;
    let mu_t = truth.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    for (e, t) in est.iter().zip(truth) {
        cov += (t - mu_t) * (e - mu_e).transpose();
    }
    cov /= n;
    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut sv = svd.singular_values;
    // sort is not guaranteed by nalgebra; the rank test only needs the two largest
    sv.as_mut_slice().sort_by(|a, b| b.partial_cmp(a).unwrap());
    let scale = sv[0].max(f64::MIN_POSITIVE);
    if sv[1] <= 1e-12 * scale || sv[0] <= 0.0 {
        return Err(Error::DegeneratePoints("points are collinear or coincident"));
    }
    let mut s = Matrix3::identity();
    if (u.determinant() * v_t.determinant()) < 0.0 {
        s[(2, 2)] = -1.0;
    }
    let r = u * s * v_t;
    let rot = Rot3::from_matrix_unchecked(r);
    Ok(RigidTransform {
        rot,
        translation: mu_t - rot.act(&mu_e),
    })
}

/// Evaluation window for the path RMSE.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Window {
    Whole,
    /// Samples with `t >= t0 + 0.6 (t1 - t0)`.
    Last40,
}

/// Maximum time offset accepted when pairing estimate and truth samples.
pub const MATCH_TOLERANCE: f64 = 0.010;

/// For each estimate time, the index of the nearest truth sample within
/// [`MATCH_TOLERANCE`]. `truth_t` must be sorted.
pub fn match_times(est_t: &[f64], truth_t: &[f64]) -> Vec<Option<usize>> {
    est_t
        .iter()
        .map(|&t| {
            let k = truth_t.partition_point(|&x| x < t);
            let mut best: Option<usize> = None;
            for j in [k.wrapping_sub(1), k] {
                if j < truth_t.len() {
                    let d = (truth_t[j] - t).abs();
                    if d <= MATCH_TOLERANCE && best.is_none_or(|b| d < (truth_t[b] - t).abs()) {
                        best = Some(j);
                    }
                }
            }
            best
        })
        .collect()
}

/// Root-mean-square position error over time-stamped pairs `(t, est, truth)`.
pub fn rmse_position(pairs: &[(f64, Vector3<f64>, Vector3<f64>)], window: Window) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no matched samples".into()));
    }
    let t0 = pairs.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let t1 = pairs.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let start = match window {
        Window::Whole => f64::NEG_INFINITY,
        Window::Last40 => t0 + 0.6 * (t1 - t0),
    };
    let (sum, count) = pairs
        .iter()
        .filter(|p| p.0 >= start)
        .fold((0.0, 0usize), |(s, c), (_, e, g)| (s + (e - g).norm_squared(), c + 1));
    Ok((sum / count as f64).sqrt())
}

/// Mean and population standard deviation of per-landmark position errors.
pub fn mapping_error(est: &[Vector3<f64>], truth: &[Vector3<f64>]) -> Result<(f64, f64)> {
    if est.len() != truth.len() || est.is_empty() {
        return Err(Error::Dimension("landmark sets must be non-empty and paired".into()));
    }
    let errs: Vec<f64> = est.iter().zip(truth).map(|(e, t)| (e - t).norm()).collect();
    let n = errs.len() as f64;
    let mean = errs.iter().sum::<f64>() / n;
    let var = errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(errs: &[f64]) -> Vec<(f64, Vector3<f64>, Vector3<f64>)> {
        errs.iter()
            .enumerate()
            .map(|(i, e)| (i as f64, Vector3::new(*e, 0.0, 0.0), Vector3::zeros()))
            .collect()
    }

    #[test]
    fn rmse_cases() {
        assert_eq!(rmse_position(&pairs(&[0.0, 0.0]), Window::Whole).unwrap(), 0.0);
        assert_eq!(rmse_position(&pairs(&[1.0, 1.0, 1.0]), Window::Whole).unwrap(), 1.0);
        let r = rmse_position(&pairs(&[0.0, 3.0, 4.0]), Window::Whole).unwrap();
        assert!((r - (25.0f64 / 3.0).sqrt()).abs() < 1e-15);
        // t = 0..=10: last 40% keeps t >= 6
        let p = pairs(&[9.0, 9.0, 9.0, 9.0, 9.0, 9.0, 2.0, 2.0, 2.0, 2.0, 2.0]);
        assert_eq!(rmse_position(&p, Window::Last40).unwrap(), 2.0);
    }

    #[test]
    fn mapping_cases() {
        let z = vec![Vector3::zeros(); 4];
        let ones: Vec<_> = (0..4).map(|_| Vector3::new(0.0, 1.0, 0.0)).collect();
        assert_eq!(mapping_error(&z, &z).unwrap(), (0.0, 0.0));
        assert_eq!(mapping_error(&ones, &z).unwrap(), (1.0, 0.0));
        let e = [Vector3::zeros(), Vector3::new(2.0, 0.0, 0.0)];
        assert_eq!(mapping_error(&e, &z[..2]).unwrap(), (1.0, 1.0));
    }

    #[test]
    fn matching_respects_tolerance() {
        let truth = [0.0, 0.0025, 0.005, 1.0];
        let m = match_times(&[0.0026, 0.5, 1.009], &truth);
        assert_eq!(m, vec![Some(1), None, Some(3)]);
    }

    #[test]
    fn collinear_rejected() {
        let pts: Vec<_> = (0..5).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
        assert!(umeyama_align(&pts, &pts).is_err());
    }
}
