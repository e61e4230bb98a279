//! Property tests for the Lie groups, the symmetry, the chart and the alignment.

mod common;

use nalgebra::{DMatrix, DVector, Matrix3, Matrix4, Matrix5, Vector3, Vector4};
use proptest::prelude::*;

use common::{d_dt, G};
use rslam_core::eval::{mapping_error, rmse_position, umeyama_align, RigidTransform, Window};
use rslam_core::lie::se23::{hat9, vee9};
use rslam_core::lie::sot3::hat4;
use rslam_core::lie::{hat, vee, ExtendedPose, Rot3, ScaledRot, Se23Tangent};
use rslam_core::symmetry::{
    dphi_origin, dphi_origin_pinv, output_h, output_h_world, sigma_sot3, sigma_sot3_inv,
    state_action, theta, theta_inv, transitivity_witness, AlgebraElement, Origin, SlamState,
    SymmetryElement,
};

fn vec3(r: f64) -> impl Strategy<Value = Vector3<f64>> {
    prop::array::uniform3(-r..r).prop_map(Vector3::from)
}

/// Rotation vector with norm below `max`.
fn rotvec(max: f64) -> impl Strategy<Value = Vector3<f64>> {
    vec3(1.0)
        .prop_filter("nonzero", |v| v.norm() > 1e-3 && v.norm() <= 1.0)
        .prop_flat_map(move |v| (Just(v.normalize()), 0.0..max))
        .prop_map(|(d, a)| d * a)
}

fn se23_tangent() -> impl Strategy<Value = Se23Tangent> {
    (rotvec(3.0), vec3(5.0), vec3(20.0)).prop_map(|(w, a, b)| {
        let mut u = Se23Tangent::zeros();
        u.fixed_rows_mut::<3>(0).copy_from(&w);
        u.fixed_rows_mut::<3>(3).copy_from(&a);
        u.fixed_rows_mut::<3>(6).copy_from(&b);
        u
    })
}

fn pose() -> impl Strategy<Value = ExtendedPose> {
    se23_tangent().prop_map(|u| ExtendedPose::exp(&u))
}

fn sot3_tangent() -> impl Strategy<Value = Vector4<f64>> {
    (rotvec(3.0), -3.0..3.0f64).prop_map(|(w, s)| Vector4::new(w.x, w.y, w.z, s))
}

fn scaled() -> impl Strategy<Value = ScaledRot> {
    sot3_tangent().prop_map(|u| ScaledRot::exp(&u))
}

/// Body-frame landmark with range between 0.5 and 50 m.
fn landmark() -> impl Strategy<Value = Vector3<f64>> {
    (rotvec(1.0).prop_filter("direction", |v| v.norm() > 0.1), 0.5..50.0f64)
        .prop_map(|(d, r)| d.normalize() * r)
}

fn element(n: usize) -> impl Strategy<Value = SymmetryElement> {
    (pose(), prop::collection::vec(scaled(), n)).prop_map(|(nav, lm)| SymmetryElement { nav, lm })
}

fn state(n: usize) -> impl Strategy<Value = SlamState> {
    (pose(), prop::collection::vec(landmark(), n)).prop_map(|(p, l)| SlamState::new(p, l))
}

/// Elements and states with matching landmark counts.
fn triple() -> impl Strategy<Value = (SymmetryElement, SymmetryElement, SlamState)> {
    (0usize..5).prop_flat_map(|n| (element(n), element(n), state(n)))
}

fn series_exp<const D: usize>(m: &nalgebra::SMatrix<f64, D, D>) -> nalgebra::SMatrix<f64, D, D>
where
    nalgebra::Const<D>: nalgebra::DimName,
{
    let mut term = nalgebra::SMatrix::<f64, D, D>::identity();
    let mut sum = term;
    for k in 1..30 {
        term = term * m / k as f64;
        sum += term;
    }
    sum
}

/// Block form `diag(w^, s)` of a scaled-rotation tangent.
fn block_alg(u: &Vector4<f64>) -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&hat(&u.xyz()));
    m[(3, 3)] = u[3];
    m
}

fn state_vec(xi: &SlamState) -> DVector<f64> {
    let mut v: Vec<f64> = xi.pose.to_matrix().as_slice().to_vec();
    for q in &xi.landmarks {
        v.extend(q.iter());
    }
    DVector::from_vec(v)
}

proptest! {
    #[test]
    fn hat_vee_exact(u in vec3(100.0)) {
        prop_assert_eq!(vee(&hat(&u)), u);
        let w = Se23Tangent::from_fn(|i, _| u[i % 3] * (i + 1) as f64);
        prop_assert_eq!(vee9(&hat9(&w)), w);
    }

    #[test]
    fn so3_exp_log_and_series(u in rotvec(3.0)) {
        let r = Rot3::exp(&u);
        prop_assert!((r.log().unwrap() - u).amax() < 1e-9);
        prop_assert!((r.matrix() - series_exp(&hat(&u))).amax() < 1e-9);
        prop_assert!((r.matrix().transpose() * r.matrix() - Matrix3::identity()).amax() < 1e-12);
    }

    #[test]
    fn so3_small_angle_crossover_is_continuous(d in rotvec(1.0).prop_filter("unit", |v| v.norm() > 0.1), k in 0.5..2.0f64) {
        let u = d.normalize() * 1e-6 * k;
        prop_assert!((Rot3::exp(&u).matrix() - series_exp(&hat(&u))).amax() < 1e-10);
        prop_assert!((Rot3::exp(&u).log().unwrap() - u).amax() < 1e-10);
    }

    #[test]
    fn so3_group_axioms(a in rotvec(3.0), b in rotvec(3.0), c in rotvec(3.0)) {
        let (ra, rb, rc) = (Rot3::exp(&a), Rot3::exp(&b), Rot3::exp(&c));
        let l = ra.compose(&rb).compose(&rc);
        let r = ra.compose(&rb.compose(&rc));
        prop_assert!((l.matrix() - r.matrix()).amax() < 1e-9);
        prop_assert!((ra.compose(&ra.inverse()).matrix() - Matrix3::identity()).amax() < 1e-9);
        prop_assert!((ra.compose(&Rot3::identity()).matrix() - ra.matrix()).amax() == 0.0);
    }

    #[test]
    fn se23_compose_is_matrix_product(a in pose(), b in pose(), c in pose()) {
        prop_assert!((a.compose(&b).to_matrix() - a.to_matrix() * b.to_matrix()).amax() < 1e-12);
        let l = a.compose(&b).compose(&c);
        let r = a.compose(&b.compose(&c));
        prop_assert!((l.to_matrix() - r.to_matrix()).amax() < 1e-9);
        prop_assert!((a.compose(&a.inverse()).to_matrix() - Matrix5::identity()).amax() < 1e-9);
        prop_assert!((a.compose(&ExtendedPose::identity()).to_matrix() - a.to_matrix()).amax() == 0.0);
    }

    #[test]
    fn se23_exp_log_and_series(u in se23_tangent()) {
        let p = ExtendedPose::exp(&u);
        prop_assert!((p.to_matrix() - series_exp(&hat9(&u))).amax() < 1e-9);
        prop_assert!((p.log().unwrap() - u).amax() < 1e-9);
    }

    #[test]
    fn se23_adjoint(p in pose(), q in pose(), u in se23_tangent()) {
        let conj = vee9(&(p.to_matrix() * hat9(&u) * p.inverse().to_matrix()));
        prop_assert!((p.adjoint() * u - conj).amax() < 1e-10 * (1.0 + conj.amax()));
        let hom = p.compose(&q).adjoint() - p.adjoint() * q.adjoint();
        prop_assert!(hom.amax() < 1e-10 * (1.0 + p.compose(&q).adjoint().amax()));
    }

    #[test]
    fn sot3_axioms_and_log(a in sot3_tangent(), b in scaled(), c in scaled()) {
        let qa = ScaledRot::exp(&a);
        prop_assert!((qa.log().unwrap() - a).amax() < 1e-9);
        let series = series_exp(&block_alg(&a));
        prop_assert!((qa.block_matrix() - series).amax() < 1e-9 * series.amax().max(1.0));
        prop_assert!((qa.matrix() - series_exp(&hat4(&a))).amax() < 1e-9 * qa.matrix().amax().max(1.0));
        let l = qa.compose(&b).compose(&c);
        let r = qa.compose(&b.compose(&c));
        prop_assert!((l.block_matrix() - r.block_matrix()).amax() < 1e-9 * l.block_matrix().amax().max(1.0));
        prop_assert!((qa.compose(&qa.inverse()).block_matrix() - Matrix4::identity()).amax() < 1e-9);
        // log of a product agrees with the block-matrix product
        let prod = qa.compose(&b);
        if let Ok(lg) = prod.log() {
            let back = ScaledRot::exp(&lg).block_matrix();
            prop_assert!((back - qa.block_matrix() * b.block_matrix()).amax() < 1e-9 * back.amax().max(1.0));
        }
    }

    #[test]
    fn right_action_axioms((x, y, xi) in triple()) {
        let lhs = state_action(&x, &state_action(&y, &xi).unwrap()).unwrap();
        let rhs = state_action(&y.compose(&x).unwrap(), &xi).unwrap();
        prop_assert!((state_vec(&lhs) - state_vec(&rhs)).amax() < 1e-10 * state_vec(&lhs).amax().max(1.0));
        let id = state_action(&SymmetryElement::identity(xi.n_landmarks()), &xi).unwrap();
        prop_assert_eq!(state_vec(&id), state_vec(&xi));
    }

    #[test]
    fn output_is_equivariant((x, _y, xi) in triple()) {
        let lhs = output_h(&state_action(&x, &xi).unwrap()).unwrap();
        let rhs = rslam_core::symmetry::output_action(&x, &output_h(&xi).unwrap()).unwrap();
        for (a, b) in lhs.iter().zip(&rhs) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn body_and_world_outputs_agree(xi in (0usize..5).prop_flat_map(state)) {
        let body = output_h(&xi).unwrap();
        let world = output_h_world(&xi.pose, &xi.world_landmarks());
        for (a, b) in body.iter().zip(&world) {
            prop_assert!((a - b).abs() < 1e-12 * a.max(1.0));
        }
    }

    #[test]
    fn transitivity_witness_maps_states((a, b) in (0usize..5).prop_flat_map(|n| (state(n), state(n)))) {
        let x = transitivity_witness(&a, &b).unwrap();
        let moved = state_action(&x, &a).unwrap();
        prop_assert!((state_vec(&moved) - state_vec(&b)).amax() < 1e-9 * state_vec(&b).amax().max(1.0));
    }

    #[test]
    fn group_adjoint(x in element(3), y in element(3), u in (se23_tangent(), prop::collection::vec(sot3_tangent(), 3))) {
        let u = AlgebraElement { nav: u.0, lm: u.1 };
        let hom = x.compose(&y).unwrap().adjoint() - x.adjoint() * y.adjoint();
        prop_assert!(hom.amax() < 1e-9 * x.compose(&y).unwrap().adjoint().amax().max(1.0));
        // per-block conjugation
        let v = AlgebraElement::from_vector(&(x.adjoint() * u.to_vector())).unwrap();
        let nav = vee9(&(x.nav.to_matrix() * hat9(&u.nav) * x.nav.inverse().to_matrix()));
        prop_assert!((v.nav - nav).amax() < 1e-10 * nav.amax().max(1.0));
        for ((q, ui), vi) in x.lm.iter().zip(&u.lm).zip(&v.lm) {
            let c = q.block_matrix() * block_alg(ui) * q.inverse().block_matrix();
            prop_assert!((block_alg(vi) - c).amax() < 1e-10 * c.amax().max(1.0));
        }
    }

    #[test]
    fn landmark_chart_round_trip(q in landmark()) {
        prop_assume!((q.normalize() + Vector3::z()).norm() > 1e-3);
        let back = sigma_sot3_inv(&sigma_sot3(&q).unwrap()).unwrap();
        prop_assert!((back - q).amax() < 1e-9 * q.norm().max(1.0));
    }

    #[test]
    fn state_chart_round_trip(origin in pose(), eps in prop::collection::vec(-2.0..2.0f64, 9 + 3 * 3)) {
        let origin = Origin::new(origin);
        let mut e = DVector::from_vec(eps);
        // stay inside the injectivity radius of the pose logarithm
        let w = e.fixed_rows::<3>(0).into_owned();
        if w.norm() > 3.0 {
            e.fixed_rows_mut::<3>(0).copy_from(&(w * (3.0 / w.norm())));
        }
        let back = theta(&theta_inv(&e, &origin).unwrap(), &origin).unwrap();
        prop_assert!((back - e).amax() < 1e-9);
        let zero = theta(&origin.state(3), &origin).unwrap();
        prop_assert!(zero.amax() == 0.0);
    }

    #[test]
    fn origin_differential_has_right_inverse(n in 0usize..4, dir in prop::collection::vec(-1.0..1.0f64, 9 + 4 * 3)) {
        let d = dphi_origin(n);
        let dp = dphi_origin_pinv(n);
        prop_assert!((&d * &dp - DMatrix::identity(9 + 3 * n, 9 + 3 * n)).amax() < 1e-12);
        // landmark block against central differences of (w, s) -> e^{-ts} exp(t w)^T e3
        if n > 0 {
            let u = Vector4::new(dir[9], dir[10], dir[11], dir[12]);
            let fd = d_dt(|t| {
                let q = ScaledRot::exp(&(u * t)).act(&Origin::landmark());
                DVector::from_column_slice(q.as_slice())
            }, 1e-4);
            let mut alg = DVector::zeros(9 + 4 * n);
            alg.fixed_rows_mut::<4>(9).copy_from(&u);
            let lin = (&d * alg).rows(9, 3).into_owned();
            prop_assert!((fd - lin).amax() < 1e-6);
        }
    }

    #[test]
    fn alignment_is_rigid_invariant(
        w in rotvec(3.0), t in vec3(50.0),
        noise in prop::collection::vec(vec3(0.5), 12),
    ) {
        let truth: Vec<Vector3<f64>> = (0..12)
            .map(|i| Vector3::new((i as f64 * 1.7).sin() * 20.0, (i as f64 * 0.9).cos() * 15.0, i as f64 - 6.0))
            .collect();
        let est: Vec<Vector3<f64>> = truth.iter().zip(&noise).map(|(p, n)| p + n).collect();
        let g = RigidTransform { rot: Rot3::exp(&w), translation: t };
        let moved: Vec<Vector3<f64>> = est.iter().map(|p| g.apply(p)).collect();
        let score = |e: &[Vector3<f64>]| {
            let tf = umeyama_align(e, &truth).unwrap();
            let pairs: Vec<_> = e.iter().zip(&truth).enumerate()
                .map(|(i, (p, q))| (i as f64, tf.apply(p), *q)).collect();
            let aligned: Vec<_> = e.iter().map(|p| tf.apply(p)).collect();
            (rmse_position(&pairs, Window::Whole).unwrap(), mapping_error(&aligned, &truth).unwrap().0)
        };
        let (a, b) = (score(&est), score(&moved));
        prop_assert!((a.0 - b.0).abs() < 1e-9 && (a.1 - b.1).abs() < 1e-9);
    }
}

#[test]
fn umeyama_beats_random_transforms() {
    let mut rng = common::rng(42);
    let truth: Vec<Vector3<f64>> = (0..30).map(|_| common::uniform3(&mut rng, -25.0, 25.0)).collect();
    let est: Vec<Vector3<f64>> = truth
        .iter()
        .map(|p| Rot3::exp(&Vector3::new(0.1, -0.2, 0.3)).act(p) + Vector3::new(3.0, -1.0, 2.0) + common::uniform3(&mut rng, -0.3, 0.3))
        .collect();
    let rmse = |tf: &RigidTransform| {
        (est.iter().zip(&truth).map(|(e, t)| (tf.apply(e) - t).norm_squared()).sum::<f64>() / est.len() as f64).sqrt()
    };
    let best = rmse(&umeyama_align(&est, &truth).unwrap());
    let opt = umeyama_align(&est, &truth).unwrap();
    for _ in 0..100 {
        let jitter = RigidTransform {
            rot: Rot3::exp(&common::uniform3(&mut rng, -0.05, 0.05)).compose(&opt.rot),
            translation: opt.translation + common::uniform3(&mut rng, -0.5, 0.5),
        };
        assert!(rmse(&jitter) >= best - 1e-12);
        let wild = RigidTransform {
            rot: Rot3::exp(&common::uniform3(&mut rng, -1.5, 1.5)),
            translation: common::uniform3(&mut rng, -10.0, 10.0),
        };
        assert!(rmse(&wild) >= best);
    }
}

#[test]
fn lift_matches_kinematics_on_random_states() {
    // spot check with a fixed generator, complementing the acceptance run
    let mut rng = common::rng(7);
    for _ in 0..50 {
        let xi = SlamState::new(common::random_pose(&mut rng), vec![common::random_landmark(&mut rng)]);
        let u = common::random_imu(&mut rng);
        let lam = rslam_core::symmetry::lift(&xi, &u.omega, &u.accel, G).unwrap();
        let fd = d_dt(|t| state_vec(&state_action(&SymmetryElement::exp(&lam.scaled(t)), &xi).unwrap()), 1e-4);
        let f = rslam_core::symmetry::dynamics(&xi, &u.omega, &u.accel, G);
        let mut p = Matrix5::zeros();
        p.fixed_view_mut::<3, 3>(0, 0).copy_from(&f.rot);
        p.fixed_view_mut::<3, 1>(0, 3).copy_from(&f.velocity);
        p.fixed_view_mut::<3, 1>(0, 4).copy_from(&f.position);
        let mut exact: Vec<f64> = p.as_slice().to_vec();
        exact.extend(f.landmarks[0].iter());
        assert!((fd - DVector::from_vec(exact)).amax() < 1e-6);
    }
}
