use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nonholo::jump::{self, Verdict};
use nonholo::models::roller_racer::{self, ClosedForm, ClosedFormFrame};
use nonholo::models::{self, RollerRacerParams};
use nonholo::simulate::{averaged_rate_oracle, RollerRacerTwoScale, TwoScaleModel};
use nonholo::{integrate, ControlSignal, Error, IntegratorConfig, ReducedState, RhsSelector};

fn params() -> RollerRacerParams {
    RollerRacerParams::default()
}

/// Plain RK4 on the closed equations with frozen steering.
fn closed_flow(p: &RollerRacerParams, x0: [f64; 4], u: f64, dt: f64, steps: usize) -> [f64; 4] {
    let f = |x: [f64; 4]| roller_racer::closed_rhs(p, x[1], u, x[3], 0.0).unwrap();
    let add = |x: [f64; 4], k: [f64; 4], h: f64| [x[0] + h * k[0], x[1] + h * k[1], x[2] + h * k[2], x[3] + h * k[3]];
    let mut x = x0;
    for _ in 0..steps {
        let k1 = f(x);
        let k2 = f(add(x, k1, 0.5 * dt));
        let k3 = f(add(x, k2, 0.5 * dt));
        let k4 = f(add(x, k3, dt));
        for i in 0..4 {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    x
}

#[test]
fn literal_closed_form_values() {
    let p = params();
    let r = roller_racer::closed_rhs(&p, 0.7, 0.0, 0.0, 1.0).unwrap();
    assert_eq!(r, [0.0, 0.0, 0.0, 2.0 * p.j_small / (p.rho * p.rho)]);
    let r = roller_racer::closed_rhs(&p, FRAC_PI_2, 0.0, 1.0, 0.0).unwrap();
    assert!((r[0] - 2.0 * p.rho).abs() < 1e-15);
    assert!(r[1..].iter().all(|x| x.abs() < 1e-15));
}

#[test]
fn averaged_values() {
    let p = params();
    let r = roller_racer::averaged_rhs(&p, 0.0, 1.0, 0.4, 0.7).unwrap();
    assert_eq!(r[1], 0.0);
    let d1 = p.delta1(0.0);
    assert!((r[3] - 4.0 * p.j_small * p.rho * p.rho / (d1 * d1)).abs() < 1e-15);
    assert!(r[3] > 0.0);
    assert_eq!(roller_racer::averaged_rhs(&p, 0.3, 0.0, 0.4, 0.0).unwrap(), [0.0; 4]);
    assert!(roller_racer::averaged_rhs(&p, FRAC_PI_2, 1.0, 0.4, 0.2).unwrap()[3].abs() < 1e-16);
}

#[test]
fn invalid_parameters_are_rejected() {
    let bad = RollerRacerParams { rho: 0.0, ..params() };
    assert!(roller_racer::spec(bad).is_err());
    assert!(matches!(roller_racer::spec(bad), Err(Error::InvalidSpec(_))));
}

#[test]
fn generic_pipeline_matches_rederived_form_for_random_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for seed in 0..5 {
        let p = RollerRacerParams {
            rho: rng.random_range(0.5..2.0),
            i_big: rng.random_range(0.5..3.0),
            j_small: rng.random_range(0.2..2.0),
        };
        let spec = roller_racer::spec(p).unwrap();
        let r = roller_racer::oracle_compare(&spec, &p, ClosedForm::Corrected, 100, seed).unwrap();
        assert!(r.max_deviation < 1e-5, "{p:?}: {r:?}");
    }
}

#[test]
fn literal_and_rederived_forms_share_first_order_terms() {
    let p = params();
    for (q2, u, xi) in [(0.3, 0.2, 0.5), (-1.0, 0.9, -1.2)] {
        let a = roller_racer::closed_rhs(&p, q2, u, xi, 0.0).unwrap();
        let b = roller_racer::corrected_closed_rhs(&p, q2, u, xi, 0.0).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn corrupted_metric_is_detected() {
    let p = params();
    let spec = roller_racer::corrupted_spec(p, 0.1).unwrap();
    let r = roller_racer::oracle_compare(&spec, &p, ClosedForm::Corrected, 30, 0).unwrap();
    assert!(r.max_deviation > 1e-3);
}

#[test]
fn constant_steering_follows_closed_flow() {
    let p = params();
    let model = models::roller_racer(p).unwrap();
    let q0 = DVector::from_vec(vec![0.0, 0.3, 0.0, 0.3]);
    let p0 = roller_racer::momentum_from_xi(&p, &q0, 0.1);
    let traj = integrate(
        &model.spec,
        RhsSelector::Ambient,
        &ReducedState::new(q0, p0),
        &ControlSignal::constant(&[0.3]),
        &IntegratorConfig::new(1e-3, 0.0, 5.0),
    )
    .unwrap();
    assert_eq!(traj.len(), 5001);
    let oracle = closed_flow(&p, [0.0, 0.3, 0.0, 0.1], 0.3, 1e-3, 5000);
    let end = traj.final_q();
    let xi = roller_racer::xi_from_momentum(&p, end, traj.p_i.last().unwrap());
    for i in 0..3 {
        assert!((end[i] - oracle[i]).abs() < 1e-6, "{i}: {} vs {}", end[i], oracle[i]);
    }
    assert!((xi - oracle[3]).abs() < 1e-6);
}

#[test]
fn frame_and_ambient_integrations_agree() {
    let p = params();
    let model = models::roller_racer(p).unwrap();
    let frame = ClosedFormFrame { params: p };
    let q0 = DVector::from_vec(vec![0.0, 0.8, 0.0, 0.1]);
    let p0 = roller_racer::momentum_from_xi(&p, &q0, 0.4);
    let control = ControlSignal::sinusoid(&[0.1], &[0.8], 0.1);
    let config = IntegratorConfig::new(1e-3, 0.0, 1.0);
    let state = ReducedState::new(q0, p0);
    let a = integrate(&model.spec, RhsSelector::Ambient, &state, &control, &config).unwrap();
    let b = integrate(&model.spec, RhsSelector::Frame(&frame), &state, &control, &config).unwrap();
    assert!((a.final_q() - b.final_q()).amax() < 1e-8);
    assert!((a.p_i.last().unwrap() - b.p_i.last().unwrap()).amax() < 1e-8);
    assert!(b.xi.is_some() && a.xi.is_none());
}

#[test]
fn frame_chart_boundary_is_reported() {
    let p = params();
    let model = models::roller_racer(p).unwrap();
    let q0 = DVector::from_vec(vec![0.0, 0.0, 0.0, 0.2]);
    let state = ReducedState::new(q0, DVector::zeros(4));
    let control = ControlSignal::constant(&[0.2]);
    let config = IntegratorConfig::new(1e-2, 0.0, 0.1);
    let err = integrate(&model.spec, RhsSelector::Frame(&ClosedFormFrame { params: p }), &state, &control, &config)
        .unwrap_err();
    assert!(matches!(err, Error::ChartDomain(_)));
    assert!(integrate(&model.spec, RhsSelector::Ambient, &state, &control, &config).is_ok());
}

#[test]
fn not_fit_with_witness() {
    let model = models::roller_racer(params()).unwrap();
    let r = jump::psi_scan(&model.spec, &model.sampler(3), 100, jump::DEFAULT_TOL);
    assert_eq!(r.verdict, Verdict::NotFit);
    assert!(r.worst_point.is_some() && r.max_psi_norm > 0.1);
    let t = jump::theta_on_iii_scan(&model.spec, &model.sampler(3), 100, jump::DEFAULT_TOL);
    assert_eq!(t.verdict, Verdict::NotFit);
}

#[test]
fn euclideanised_racer_leaf_metric_tracks_psi() {
    let model = models::roller_racer_flat(params()).unwrap();
    let r = jump::psi_scan(&model.spec, &model.sampler(1), 50, jump::DEFAULT_TOL);
    assert_eq!(r.verdict, Verdict::Fit);
    let mut largest: f64 = 0.0;
    for q in model.sampler(1).points(50) {
        let proj = nonholo::projection_set(&model.spec, &q).unwrap();
        let w = &proj.p_i * DVector::from_vec(vec![1.0, 0.5, -0.3, 0.0]);
        let d = jump::leaf_metric_derivative(&model.spec, &q, &DVector::from_element(1, 1.0), &w).unwrap();
        largest = largest.max(d.abs());
    }
    assert!(largest < 1e-8, "{largest}");
}

#[test]
fn two_timescale_oracle_reproduces_both_averaged_forms() {
    let x = DVector::from_vec(vec![0.0, 0.4, 0.0, 0.2]);
    for form in [ClosedForm::Literal, ClosedForm::Corrected] {
        let m = RollerRacerTwoScale { params: params(), form };
        for (ubar, k) in [(0.0, 1.0), (0.5, 2.0), (-PI / 5.0, 0.5)] {
            let ubar = DVector::from_element(1, ubar);
            let k = DVector::from_element(1, k);
            let oracle = averaged_rate_oracle(&m, &x, &ubar, &k, 0.01).unwrap();
            let formula = m.averaged_rhs(&x, &ubar, &k).unwrap();
            assert!((oracle - &formula).amax() < 1e-3 * formula.amax(), "{form:?}");
        }
    }
}
