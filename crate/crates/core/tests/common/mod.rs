//! Finite-difference oracles and random samples shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rslam_core::eqf::{FilterBelief, ImuSample};
use rslam_core::lie::{ExtendedPose, ScaledRot, Se23Tangent};
use rslam_core::symmetry::{lift, state_action, theta, theta_inv, Origin, SymmetryElement};

pub const G: f64 = 9.81;

/// Fourth-order central difference of a vector function of one scalar.
pub fn d_dt<F: Fn(f64) -> DVector<f64>>(f: F, h: f64) -> DVector<f64> {
    (f(-2.0 * h) - f(2.0 * h) + (f(h) - f(-h)) * 8.0) / (12.0 * h)
}

pub fn jacobian<F: Fn(&DVector<f64>) -> DVector<f64>>(
    f: F,
    at: &DVector<f64>,
    h: f64,
) -> DMatrix<f64> {
    let n = at.len();
    let m = f(at).len();
    let mut j = DMatrix::zeros(m, n);
    for k in 0..n {
        let col = d_dt(
            |s| {
                let mut x = at.clone();
                x[k] += s;
                f(&x)
            },
            h,
        );
        j.set_column(k, &col);
    }
    j
}

pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max() / b.abs().max().max(1.0)
}

pub fn pose(seed: [f64; 9]) -> ExtendedPose {
    ExtendedPose::exp(&Se23Tangent::from_column_slice(&seed))
}

pub fn scaled(w: [f64; 3], s: f64) -> ScaledRot {
    ScaledRot::exp(&Vector4::new(w[0], w[1], w[2], s))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform3(rng: &mut impl Rng, lo: f64, hi: f64) -> Vector3<f64> {
    Vector3::new(
        rng.random_range(lo..hi),
        rng.random_range(lo..hi),
        rng.random_range(lo..hi),
    )
}

/// Random extended pose: rotation angle below 2.5 rad, velocity and position bounded.
pub fn random_pose(rng: &mut impl Rng) -> ExtendedPose {
    let w = uniform3(rng, -1.4, 1.4);
    let mut t = [0.0; 9];
    t[..3].copy_from_slice(w.as_slice());
    t[3..6].copy_from_slice(uniform3(rng, -5.0, 5.0).as_slice());
    t[6..].copy_from_slice(uniform3(rng, -20.0, 20.0).as_slice());
    pose(t)
}

/// Random scaled rotation with scale in `[e^-3, e^0.5]`.
pub fn random_scaled(rng: &mut impl Rng) -> ScaledRot {
    let w = uniform3(rng, -1.4, 1.4);
    scaled([w.x, w.y, w.z], rng.random_range(-3.0..0.5))
}

pub fn random_element(rng: &mut impl Rng, n: usize) -> SymmetryElement {
    SymmetryElement {
        nav: random_pose(rng),
        lm: (0..n).map(|_| random_scaled(rng)).collect(),
    }
}

/// Body-frame landmark with range in `[0.5, 50]` m.
pub fn random_landmark(rng: &mut impl Rng) -> Vector3<f64> {
    loop {
        let v = uniform3(rng, -1.0, 1.0);
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n * rng.random_range(0.5..50.0);
        }
    }
}

pub fn random_imu(rng: &mut impl Rng) -> ImuSample {
    ImuSample::new(
        0.0,
        uniform3(rng, -1.0, 1.0),
        uniform3(rng, -3.0, 3.0) - Vector3::new(0.0, 0.0, G),
    )
}

/// Random belief with identity covariance and ids `0..n`.
pub fn random_belief(rng: &mut impl Rng, n: usize, origin: Origin) -> FilterBelief {
    let xhat = random_element(rng, n);
    let dim = 9 + 3 * n;
    FilterBelief::from_parts(
        xhat,
        DMatrix::identity(dim, dim),
        (0..n as u32).collect(),
        origin,
    )
    .unwrap()
}

pub fn compose_all(parts: &[SymmetryElement]) -> SymmetryElement {
    parts
        .iter()
        .skip(1)
        .fold(parts[0].clone(), |acc, x| acc.compose(x).unwrap())
}

/// Normal coordinates of the error `phi(X_t^-1, xi_t)` after time `t` when the true
/// input is `u_true` and the observer integrates `u_obs`.
pub fn error_after(
    b: &FilterBelief,
    eps: &DVector<f64>,
    u_true: &ImuSample,
    u_obs: &ImuSample,
    t: f64,
) -> DVector<f64> {
    let xi_hat = b.state_estimate();
    let xi = state_action(&b.xhat, &theta_inv(eps, &b.origin).unwrap()).unwrap();
    let lam = lift(&xi, &u_true.omega, &u_true.accel, G).unwrap();
    let lam_hat = lift(&xi_hat, &u_obs.omega, &u_obs.accel, G).unwrap();
    let e = compose_all(&[
        SymmetryElement::exp(&lam.scaled(t)),
        SymmetryElement::exp(&lam_hat.scaled(-t)),
        b.xhat.inverse(),
    ]);
    theta(&state_action(&e, &xi).unwrap(), &b.origin).unwrap()
}

/// Finite-difference state matrix.
pub fn oracle_a(b: &FilterBelief, u: &ImuSample) -> DMatrix<f64> {
    jacobian(
        |eps| d_dt(|t| error_after(b, eps, u, u, t), 1e-3),
        &DVector::zeros(b.dim()),
        1e-4,
    )
}

/// Finite-difference input matrix.
pub fn oracle_b(b: &FilterBelief, u: &ImuSample) -> DMatrix<f64> {
    let zero = DVector::zeros(b.dim());
    jacobian(
        |du| {
            let ut = ImuSample::new(
                0.0,
                u.omega + Vector3::new(du[0], du[1], du[2]),
                u.accel + Vector3::new(du[3], du[4], du[5]),
            );
            d_dt(|t| error_after(b, &zero, &ut, u, t), 1e-3)
        },
        &DVector::zeros(6),
        1e-4,
    )
}

/// Finite-difference equivariant output matrix: the output action's rate along each
/// coordinate direction, averaged between the measured and predicted outputs.
pub fn oracle_cstar(b: &FilterBelief, y: &[f64]) -> DMatrix<f64> {
    use rslam_core::symmetry::{self, AlgebraElement};
    let y_hat = rslam_core::symmetry::output_h(&b.state_estimate()).unwrap();
    let n = b.n_landmarks();
    let ad_inv = b.xhat.inverse().adjoint();
    let to_alg = symmetry::dphi_origin_pinv(n) * symmetry::dtheta_origin_inv(n);
    let dim = b.dim();
    let mut oracle = DMatrix::zeros(n, dim);
    for k in 0..dim {
        let mut unit = DVector::zeros(dim);
        unit[k] = 1.0;
        let u = AlgebraElement::from_vector(&(&ad_inv * &to_alg * unit)).unwrap();
        let rate = |yy: &[f64]| {
            d_dt(
                |t| {
                    DVector::from_vec(
                        symmetry::output_action(&SymmetryElement::exp(&u.scaled(t)), yy).unwrap(),
                    )
                },
                1e-3,
            )
        };
        oracle.set_column(k, &((rate(y) + rate(&y_hat)) * 0.5));
    }
    oracle
}
