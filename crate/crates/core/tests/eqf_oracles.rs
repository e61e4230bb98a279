//! Filter matrices against finite differences of the exact error dynamics.

use nalgebra::{DMatrix, DVector, Vector3};
use rslam_core::eqf::{Eqf, FilterBelief, ImuSample, RangeSample};
use rslam_core::lie::{ExtendedPose, Rot3};
use rslam_core::symmetry::{output_h, state_action, theta, theta_inv, Origin, SlamState, SymmetryElement};

mod common;

use common::{jacobian, oracle_a, oracle_b, oracle_cstar, pose, rel_err, scaled, G};

fn belief(origin: Origin) -> FilterBelief {
    let xhat = SymmetryElement {
        nav: pose([0.4, -0.3, 1.2, 1.5, -0.7, 0.2, 3.0, -2.0, -8.0]),
        lm: vec![
            scaled([0.3, -0.2, 0.5], -1.6),
            scaled([-1.1, 0.4, 0.2], -2.4),
            scaled([0.2, 0.9, -0.7], -0.5),
        ],
    };
    let n = xhat.lm.len();
    let dim = 9 + 3 * n;
    FilterBelief::from_parts(xhat, DMatrix::identity(dim, dim), vec![1, 4, 6], origin).unwrap()
}

fn origins() -> Vec<Origin> {
    vec![
        Origin::default(),
        Origin::new(pose([-0.2, 0.5, 0.1, 0.3, 0.1, -0.4, 1.0, 2.0, -3.0])),
    ]
}

fn imu() -> ImuSample {
    ImuSample::new(0.0, Vector3::new(0.3, -0.5, 0.8), Vector3::new(0.4, 1.1, -9.5))
}

#[test]
fn state_matrix_matches_error_dynamics() {
    for origin in origins() {
        let b = belief(origin);
        let u = imu();
        let a = Eqf::default().mat_a(&b, &u);
        let oracle = oracle_a(&b, &u);
        let err = rel_err(&a, &oracle);
        assert!(err < 1e-6, "A mismatch {err}\n{a}\n{oracle}");
    }
}

#[test]
fn input_matrix_matches_error_dynamics() {
    for origin in origins() {
        let b = belief(origin);
        let u = imu();
        let bm = Eqf::default().mat_b(&b, &u);
        let oracle = oracle_b(&b, &u);
        let err = rel_err(&bm, &oracle);
        assert!(err < 1e-6, "B mismatch {err}\n{bm}\n{oracle}");
    }
}

#[test]
fn output_matrix_matches_linearised_output() {
    for origin in origins() {
        let b = belief(origin);
        let eqf = Eqf::default();
        let xi_hat = b.state_estimate();
        let y_hat = output_h(&xi_hat).unwrap();
        // at y == y_hat the equivariant matrix is the plain output Jacobian
        let oracle = jacobian(
            |eps| {
                let xi = state_action(&b.xhat, &theta_inv(eps, &b.origin).unwrap()).unwrap();
                DVector::from_vec(output_h(&xi).unwrap())
            },
            &DVector::zeros(b.dim()),
            1e-4,
        );
        let ys: Vec<RangeSample> = b
            .ids
            .iter()
            .zip(&y_hat)
            .map(|(id, r)| RangeSample::new(0.0, *id, *r))
            .collect();
        let c = eqf.mat_cstar(&b, &ys).unwrap();
        assert!(rel_err(&c, &oracle) < 1e-8);
    }
}

#[test]
fn output_matrix_matches_averaged_output_action() {
    for origin in origins() {
        let b = belief(origin);
        let y_hat = output_h(&b.state_estimate()).unwrap();
        let y = [y_hat[0] * 1.3, y_hat[1] * 0.8, y_hat[2] + 0.4];
        let ys: Vec<RangeSample> = b
            .ids
            .iter()
            .zip(&y)
            .map(|(id, r)| RangeSample::new(0.0, *id, *r))
            .collect();
        let c = Eqf::default().mat_cstar(&b, &ys).unwrap();
        let oracle = oracle_cstar(&b, &y);
        assert!(rel_err(&c, &oracle) < 1e-9, "{c}\n{oracle}");
    }
}

/// Classical RK4 on the true dynamics with body-frame landmarks.
fn rk4(xi: &SlamState, u: &ImuSample, dt: f64, steps: usize) -> SlamState {
    type S = (nalgebra::Matrix3<f64>, Vector3<f64>, Vector3<f64>, Vec<Vector3<f64>>);
    let rate = |s: &S| -> S {
        let (r, v, _x, q) = s;
        (
            r * rslam_core::lie::hat(&u.omega),
            r * u.accel + Vector3::new(0.0, 0.0, G),
            *v,
            q.iter().map(|qi| -u.omega.cross(qi) - r.tr_mul(v)).collect(),
        )
    };
    let axpy = |s: &S, k: &S, h: f64| -> S {
        (
            s.0 + k.0 * h,
            s.1 + k.1 * h,
            s.2 + k.2 * h,
            s.3.iter().zip(&k.3).map(|(a, b)| a + b * h).collect(),
        )
    };
    let mut s: S = (
        *xi.pose.rot.matrix(),
        xi.pose.velocity,
        xi.pose.position,
        xi.landmarks.clone(),
    );
    for _ in 0..steps {
        let k1 = rate(&s);
        let k2 = rate(&axpy(&s, &k1, dt / 2.0));
        let k3 = rate(&axpy(&s, &k2, dt / 2.0));
        let k4 = rate(&axpy(&s, &k3, dt));
        let k = (
            k1.0 + (k2.0 + k3.0) * 2.0 + k4.0,
            k1.1 + (k2.1 + k3.1) * 2.0 + k4.1,
            k1.2 + (k2.2 + k3.2) * 2.0 + k4.2,
            (0..k1.3.len())
                .map(|i| k1.3[i] + (k2.3[i] + k3.3[i]) * 2.0 + k4.3[i])
                .collect(),
        );
        s = axpy(&s, &k, dt / 6.0);
    }
    SlamState::new(
        ExtendedPose::new(Rot3::from_matrix_unchecked(s.0), s.1, s.2),
        s.3,
    )
}

#[test]
fn propagated_estimate_matches_rk4() {
    for origin in origins() {
        let eqf = Eqf::default();
        let mut b = belief(origin);
        let u = imu();
        let start = b.state_estimate();
        let dt = 0.005;
        let steps = 400;
        for _ in 0..steps {
            b = eqf.propagate(&b, &u, dt).unwrap();
        }
        let est = b.state_estimate();
        let truth = rk4(&start, &u, dt / 4.0, steps * 4);
        assert!((est.pose.rot.matrix() - truth.pose.rot.matrix()).norm() < 1e-9);
        assert!((est.pose.velocity - truth.pose.velocity).norm() < 1e-7);
        assert!((est.pose.position - truth.pose.position).norm() < 1e-7);
        for (a, t) in est.landmarks.iter().zip(&truth.landmarks) {
            assert!((a - t).norm() < 1e-7, "{a} vs {t}");
        }
    }
}

#[test]
fn riccati_step_is_first_order_consistent() {
    // residual against the continuous rate A S + S A^T + B M B^T shrinks like dt^2
    let eqf = Eqf::default();
    let b = belief(Origin::default());
    let u = imu();
    let a = eqf.mat_a(&b, &u);
    let bm = eqf.mat_b(&b, &u);
    let m = DMatrix::from_column_slice(6, 6, eqf.config.noise.input_gain.as_slice());
    let rate = &a * &b.sigma + &b.sigma * a.transpose() + &bm * m * bm.transpose();
    let residual = |dt: f64| {
        let next = eqf.propagate(&b, &u, dt).unwrap();
        (next.sigma - (&b.sigma + &rate * dt)).abs().max()
    };
    let (r1, r2) = (residual(1e-3), residual(5e-4));
    let ratio = r1 / r2;
    assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
}

#[test]
fn reset_transport_matches_coordinate_change() {
    // after an update, the posterior coordinates of a nearby true state relative to the
    // new observer must follow the transported covariance's linear map
    let eqf = Eqf::default();
    let b = belief(Origin::default());
    let ys = [
        RangeSample::new(0.0, 1, 3.0),
        RangeSample::new(0.0, 4, 12.0),
        RangeSample::new(0.0, 6, 1.2),
    ];
    let cfg_none = rslam_core::eqf::EqfConfig {
        reset_mode: rslam_core::eqf::ResetMode::None,
        ..Default::default()
    };
    let post_none = Eqf::new(cfg_none).update(&b, &ys).unwrap();
    let post = eqf.update(&b, &ys).unwrap();
    assert_eq!(post.xhat, post_none.xhat);
    // coordinates w.r.t. the old observer -> coordinates w.r.t. the new observer
    let map = |eps: &DVector<f64>| {
        let xi = state_action(&b.xhat, &theta_inv(eps, &b.origin).unwrap()).unwrap();
        theta(&state_action(&post.xhat.inverse(), &xi).unwrap(), &b.origin).unwrap()
    };
    let old_at_new = theta(
        &state_action(&b.xhat.inverse(), &post.state_estimate()).unwrap(),
        &b.origin,
    )
    .unwrap();
    let j = jacobian(map, &old_at_new, 1e-4);
    let expected = &j * &post_none.sigma * j.transpose();
    assert!(rel_err(&post.sigma, &expected) < 1e-6);
}
