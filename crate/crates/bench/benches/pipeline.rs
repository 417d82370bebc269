use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::DVector;
use std::hint::black_box;

use nonholo::dynamics::reduced_rhs;
use nonholo::jump;
use nonholo::models::{self, roller_racer, RollerRacerParams, RollingBallParams};
use nonholo::{projection_set, ControlSignal, LocalTensors, ReducedState};

fn pipeline(c: &mut Criterion) {
    let p = RollerRacerParams::default();
    let racer = models::roller_racer(p).unwrap();
    let ball = models::rolling_ball(RollingBallParams::default()).unwrap();
    let rq = DVector::from_vec(vec![0.1, 0.4, -0.2, 0.3]);
    let bq = DVector::from_vec(vec![0.2, 1.1, -0.4, 0.3, -0.5, 0.0]);

    c.bench_function("projection_set/roller_racer", |b| {
        b.iter(|| projection_set(&racer.spec, black_box(&rq)).unwrap())
    });
    c.bench_function("projection_set/rolling_ball", |b| {
        b.iter(|| projection_set(&ball.spec, black_box(&bq)).unwrap())
    });
    c.bench_function("local_tensors/rolling_ball", |b| {
        b.iter(|| LocalTensors::at(&ball.spec, black_box(&bq)).unwrap())
    });

    let state = ReducedState::new(rq.clone(), roller_racer::momentum_from_xi(&p, &rq, 0.5));
    let control = ControlSignal::sinusoid(&[0.3], &[1.0], 0.1);
    c.bench_function("reduced_rhs/roller_racer", |b| {
        b.iter(|| reduced_rhs(&racer.spec, black_box(0.0), &state, &control).unwrap())
    });

    let sampler = ball.sampler(0);
    c.bench_function("psi_scan/rolling_ball_50", |b| {
        b.iter(|| jump::psi_scan(&ball.spec, &sampler, 50, jump::DEFAULT_TOL))
    });
}

criterion_group!(benches, pipeline);
criterion_main!(benches);
