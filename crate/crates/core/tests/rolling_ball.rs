use nalgebra::DVector;

use nonholo::geometry::delta_gamma_basis;
use nonholo::jump::{self, Verdict};
use nonholo::models::rolling_ball::{self, OrthonormalFrame};
use nonholo::models::{self, RollingBallParams};
use nonholo::{integrate, projection_set, ControlSignal, IntegratorConfig, ReducedState, RhsSelector};

fn q0() -> DVector<f64> {
    DVector::from_vec(vec![0.2, 1.1, -0.4, 0.3, -0.5, 0.0])
}

#[test]
fn fit_for_jumps() {
    let model = models::rolling_ball(RollingBallParams::default()).unwrap();
    let r = jump::psi_scan(&model.spec, &model.sampler(5), 200, jump::DEFAULT_TOL);
    assert_eq!(r.verdict, Verdict::Fit, "{r:?}");
    assert!(r.max_psi_norm < 1e-8);
    let t = jump::theta_on_iii_scan(&model.spec, &model.sampler(5), 200, jump::DEFAULT_TOL);
    assert_eq!(t.verdict, Verdict::Fit);
}

#[test]
fn sufficient_conditions_hold() {
    for params in [RollingBallParams::default(), RollingBallParams { r: 0.5, kappa2: 1.3 }] {
        let model = models::rolling_ball(params).unwrap();
        let report = jump::theorem62_check(
            &model.spec,
            model.reference_frame.as_ref(),
            model.flat_normal_bundle,
            &model.sampler(9),
            100,
            1e-9,
        )
        .unwrap();
        assert!(report.all_hold(), "{report:?}");
    }
}

#[test]
fn inverse_metric_does_not_see_the_disc() {
    let p = RollingBallParams::default();
    let mut q = q0();
    let base = rolling_ball::metric_inverse(&p, &q).unwrap();
    for u in [-2.0, 0.7, 3.0] {
        q[5] = u;
        assert!((rolling_ball::metric_inverse(&p, &q).unwrap() - &base).amax() < 1e-10);
    }
}

#[test]
fn frame_is_orthonormal() {
    let p = RollingBallParams { r: 0.7, kappa2: 0.25 };
    let gram = rolling_ball::frame_gram(&p, &q0()).unwrap();
    assert!((gram - nalgebra::DMatrix::identity(6, 6)).amax() < 1e-12);
    assert!(OrthonormalFrame { params: p }.vectors(&DVector::from_vec(vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0])).is_err());
}

#[test]
fn contact_velocity_vanishes_on_delta_gamma() {
    let p = RollingBallParams::default();
    let spec = rolling_ball::spec(p).unwrap();
    let q = q0();
    let basis = delta_gamma_basis(&spec, &q).unwrap();
    assert_eq!(basis.ncols(), 3);
    let omega = spec.omega(&q).unwrap();
    assert!((omega * &basis).amax() < 1e-12);
    // Directions in Δ leave the disc angle alone.
    assert!(basis.row(5).amax() < 1e-12);
}

#[test]
fn vibrating_disc_from_rest_stays_at_rest() {
    let p = RollingBallParams::default();
    let model = models::rolling_ball(p).unwrap();
    let state = ReducedState::new(q0(), DVector::zeros(6));
    let control = ControlSignal::sinusoid(&[0.0], &[1.0], 0.05);
    let config = IntegratorConfig::new(1e-3, 0.0, 1.0);
    let traj = integrate(&model.spec, RhsSelector::Ambient, &state, &control, &config).unwrap();
    assert!(traj.max_p_i_norm() < 1e-6);
    assert!(traj.max_constraint_residual() < 1e-6);
    // The ball is carried along by the disc.
    assert!((traj.final_q().rows(0, 5) - q0().rows(0, 5)).amax() > 1e-4);

    let frame = model.frame.clone().unwrap();
    let traj = integrate(&model.spec, RhsSelector::Frame(frame.as_ref()), &state, &control, &config).unwrap();
    assert!(traj.max_p_i_norm() < 1e-6);
}

#[test]
fn rolling_conserves_energy_at_constant_disc_angle() {
    let p = RollingBallParams::default();
    let model = models::rolling_ball(p).unwrap();
    let q = q0();
    let proj = projection_set(&model.spec, &q).unwrap();
    let p0 = &proj.pstar_i * DVector::from_vec(vec![0.3, -0.2, 0.5, 0.1, 0.4, 0.0]);
    let traj = integrate(
        &model.spec,
        RhsSelector::Ambient,
        &ReducedState::new(q, p0),
        &ControlSignal::constant(&[0.0]),
        &IntegratorConfig::new(1e-3, 0.0, 2.0),
    )
    .unwrap();
    assert!(traj.energy_drift() < 1e-8 * 2.0);
    assert!(traj.max_dalembert_residual() < 1e-4);
}
