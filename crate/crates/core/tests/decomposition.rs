use nalgebra::DVector;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use nonholo::geometry::{argmin_certificate, audit_decomposition, check_transversality};
use nonholo::models::{self, Model, RollerRacerParams, RollingBallParams};
use nonholo::projection_set;

fn point_in(model: &Model, unit: &[f64]) -> DVector<f64> {
    DVector::from_fn(model.lower.len(), |i, _| {
        model.lower[i] + unit[i % unit.len()] * (model.upper[i] - model.lower[i])
    })
}

fn all_models() -> Vec<Model> {
    vec![
        models::roller_racer(RollerRacerParams::default()).unwrap(),
        models::rolling_ball(RollingBallParams::default()).unwrap(),
        models::euclidean_toy(3, 2).unwrap(),
        models::roller_racer_flat(RollerRacerParams::default()).unwrap(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn identities_hold(unit in prop::collection::vec(0.0..1.0f64, 6)) {
        for model in all_models() {
            let q = point_in(&model, &unit);
            let a = audit_decomposition(&model.spec, &q).unwrap();
            prop_assert!(a.ranks_ok, "{}", model.name);
            prop_assert!(a.worst() < 1e-10, "{}: {a:?}", model.name);
        }
    }

    #[test]
    fn lever_is_horizontal_and_dual(
        unit in prop::collection::vec(0.0..1.0f64, 6),
        v in prop::collection::vec(-2.0..2.0f64, 2),
    ) {
        for model in all_models() {
            let q = point_in(&model, &unit);
            let proj = projection_set(&model.spec, &q).unwrap();
            let m = model.spec.n_control();
            let v = DVector::from_fn(m, |i, _| v[i % 2]);
            let hv = proj.lift(&v);
            let omega = model.spec.omega(&q).unwrap();
            prop_assert!((&omega * &hv).amax() < 1e-10 * hv.amax().max(1.0));
            let n = model.spec.n_free();
            prop_assert!((hv.rows(n, m) - &v).amax() < 1e-12);
            prop_assert!((&proj.k - &proj.g * &proj.h).amax() < 1e-10 * proj.g.amax().max(1.0));
        }
    }
}

#[test]
fn lift_minimises_kinetic_energy() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for model in all_models() {
        for q in model.sampler(4).points(10) {
            let v = DVector::from_element(model.spec.n_control(), 0.8);
            assert!(argmin_certificate(&model.spec, &q, &v, 2000, &mut rng).unwrap(), "{}", model.name);
        }
    }
}

#[test]
fn transversality_is_reported() {
    for model in all_models() {
        let t = check_transversality(&model.spec, &model.sampler(0).points(1)[0]).unwrap();
        assert!(t.holds && t.rank == model.spec.n_constraints(), "{}", model.name);
    }
}
