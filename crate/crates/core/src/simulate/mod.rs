//! Fixed-step RK4 integration of the reduced equations with per-step
//! diagnostics.

use nalgebra::{DMatrix, DVector};

use crate::control::ControlSignal;
use crate::dynamics::{self, LocalTensors, ReducedState};
use crate::error::{Error, Result};
use crate::geometry::{self, FrameField};
use crate::system::{directional_difference, SystemSpec};

mod averaging;
mod csv;

pub use averaging::{
    averaged_rate_oracle, oscillation_sweep, DtRule, RollerRacerTwoScale, SweepResult, SweepRow, TwoScaleModel,
};
pub use csv::write_csv;

/// A step whose constraint residual exceeds this is rejected.
pub const MAX_STEP_RESIDUAL: f64 = 1e-3;

/// Floor for the denominator of the relative d'Alembert residual.
pub const REACTION_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t0: f64,
    pub t1: f64,
    pub reproject_each_step: bool,
    /// Record every `diagnostics_stride`-th step (the final step is always
    /// recorded).
    pub diagnostics_stride: usize,
}

impl IntegratorConfig {
    pub fn new(dt: f64, t0: f64, t1: f64) -> Self {
        Self {
            dt,
            t0,
            t1,
            reproject_each_step: true,
            diagnostics_stride: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidSpec(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t1 > self.t0) {
            return Err(Error::InvalidSpec(format!("t1 = {} must exceed t0 = {}", self.t1, self.t0)));
        }
        if self.diagnostics_stride == 0 {
            return Err(Error::InvalidSpec("diagnostics_stride must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of steps and the step actually used, `(t1 - t0) / steps`.
    pub fn grid(&self) -> (usize, f64) {
        let span = self.t1 - self.t0;
        let steps = ((span / self.dt).round() as usize).max(1);
        (steps, span / steps as f64)
    }
}

/// Which form of the equations to integrate.
#[derive(Clone, Copy)]
pub enum RhsSelector<'a> {
    /// `(q, p_I)` in ambient coordinates.
    Ambient,
    /// `(q, ξ)` with `ξ_m = p_I(V_m)` in the supplied frame.
    Frame(&'a dyn FrameField),
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub n_free: usize,
    pub n_control: usize,
    pub times: Vec<f64>,
    pub q: Vec<DVector<f64>>,
    pub p_i: Vec<DVector<f64>>,
    /// Present when a frame was integrated.
    pub xi: Option<Vec<DVector<f64>>>,
    pub hamiltonian: Vec<f64>,
    /// `|ω q̇| / |q̇|`.
    pub constraint_residual: Vec<f64>,
    /// `|P*_I R|` relative to the size of the terms summed into `R`
    /// (`ṗ_I`, `d(k u̇)/dt`, `∂H/∂q`, `F`), floored at `REACTION_FLOOR`.
    pub dalembert_residual: Vec<f64>,
    pub control: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_q(&self) -> &DVector<f64> {
        self.q.last().expect("trajectories are never empty")
    }

    pub fn max_constraint_residual(&self) -> f64 {
        self.constraint_residual.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_dalembert_residual(&self) -> f64 {
        self.dalembert_residual.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_p_i_norm(&self) -> f64 {
        self.p_i.iter().map(|p| p.norm()).fold(0.0, f64::max)
    }

    /// Largest `|H(t) - H(t₀)|`.
    pub fn energy_drift(&self) -> f64 {
        let h0 = self.hamiltonian[0];
        self.hamiltonian.iter().map(|h| (h - h0).abs()).fold(0.0, f64::max)
    }

    /// Largest gap between controlled coordinates and the recorded control.
    pub fn control_deviation(&self) -> f64 {
        self.q
            .iter()
            .zip(&self.control)
            .map(|(q, u)| (q.rows(self.n_free, self.n_control) - u).amax())
            .fold(0.0, f64::max)
    }
}

struct StageEval {
    qdot: DVector<f64>,
    sdot: DVector<f64>,
}

fn column(v: DVector<f64>) -> DMatrix<f64> {
    let n = v.len();
    DMatrix::from_vec(n, 1, v.data.into())
}

/// `p_I`, the full momentum `p = p_I + k u̇`, its time derivative along the
/// flow at one sample and the summed size of the terms of that derivative.
/// `d/dt` of the state-dependent factors is a directional difference along
/// `q̇`; `u̇` and `ü` are exact.
#[allow(clippy::too_many_arguments)]
fn momentum_and_rate(
    spec: &SystemSpec,
    selector: RhsSelector<'_>,
    control: &ControlSignal,
    t: f64,
    q: &DVector<f64>,
    s: &DVector<f64>,
    qdot: &DVector<f64>,
    sdot: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>, f64)> {
    let udot = control.udot(t);
    let uddot = control.uddot(t);
    let speed = qdot.amax();
    let step = spec.fd_step * q.amax().max(1.0) / speed.max(f64::MIN_POSITIVE);
    let along = |f: &dyn Fn(&DVector<f64>) -> Result<DMatrix<f64>>| -> Result<DMatrix<f64>> {
        if speed == 0.0 {
            return Ok(f(q)? * 0.0);
        }
        directional_difference(f, q, qdot, step)
    };
    let k = geometry::projection_set(spec, q)?.k;
    let k_dot = along(&|x| Ok(geometry::projection_set(spec, x)?.k))?;
    let (p_i, p_i_dot) = match selector {
        RhsSelector::Ambient => (s.clone(), sdot.clone()),
        RhsSelector::Frame(f) => {
            let frame = f.frame_at(q)?;
            let moving = along(&|x| Ok(column(f.frame_at(x)?.block_i_covector(s))))?;
            (frame.block_i_covector(s), moving.column(0) + frame.block_i_covector(sdot))
        }
    };
    let p = &p_i + &k * &udot;
    let moving = k_dot * &udot;
    let accelerating = &k * uddot;
    let scale = p_i_dot.norm() + moving.norm() + accelerating.norm();
    Ok((p_i, p, p_i_dot + moving + accelerating, scale))
}

fn set_control(q: &mut DVector<f64>, n_free: usize, u: &DVector<f64>) {
    q.rows_mut(n_free, u.len()).copy_from(u);
}

/// Integrates from `state0` with classical RK4. The controlled coordinates
/// are overwritten with `u(t)` at every stage and step, and `p_I` is
/// re-projected after each step when configured.
pub fn integrate(
    spec: &SystemSpec,
    selector: RhsSelector<'_>,
    state0: &ReducedState,
    control: &ControlSignal,
    config: &IntegratorConfig,
) -> Result<Trajectory> {
    config.validate()?;
    control.validate()?;
    let n_free = spec.n_free();
    let m = spec.n_control();
    let dim = spec.dim();
    if state0.p_i.len() != dim {
        return Err(Error::Dimension(format!("p_I has {} entries, chart has {dim}", state0.p_i.len())));
    }
    dynamics::check_adapted(spec, config.t0, &state0.q, &control.u(config.t0))?;
    let (_, _, _, pstar0) = geometry::first_block(spec, &state0.q)?;
    let drift = (&pstar0 * &state0.p_i - &state0.p_i).amax();
    if drift > 1e-8 * state0.p_i.amax().max(1.0) {
        return Err(Error::InvalidSpec(format!(
            "initial momentum is not in the image of P*_I (|P*_I p - p| = {drift:.3e})"
        )));
    }

    let eval = |t: f64, q: &DVector<f64>, s: &DVector<f64>| -> Result<StageEval> {
        let udot = control.udot(t);
        match selector {
            RhsSelector::Ambient => {
                let local = LocalTensors::at(spec, q)?;
                let state = ReducedState::new(q.clone(), s.clone());
                let (qdot, sdot) = dynamics::rhs_from_local(spec, &local, t, &state, &udot);
                Ok(StageEval { qdot, sdot })
            }
            RhsSelector::Frame(frame_field) => {
                let c = dynamics::frame_coefficients(spec, frame_field, t, q, s, &udot)?;
                Ok(StageEval {
                    qdot: c.q_dot(s, &udot),
                    sdot: c.xi_dot(s, &udot),
                })
            }
        }
    };

    let (steps, dt) = config.grid();
    let mut q = state0.q.clone();
    let mut s = match selector {
        RhsSelector::Ambient => state0.p_i.clone(),
        RhsSelector::Frame(f) => f.frame_at(&q)?.block_i_components(&state0.p_i),
    };
    let omega_residual = |q: &DVector<f64>, qdot: &DVector<f64>| -> Result<f64> {
        let n = qdot.norm();
        if n == 0.0 || spec.n_constraints() == 0 {
            return Ok(0.0);
        }
        Ok((spec.omega(q)? * qdot).norm() / n)
    };

    let mut times = Vec::with_capacity(steps + 1);
    let mut qs = Vec::with_capacity(steps + 1);
    let mut ss = Vec::with_capacity(steps + 1);
    let mut rates = Vec::with_capacity(steps + 1);
    let mut residuals = Vec::with_capacity(steps + 1);

    for step in 0..=steps {
        let t = config.t0 + step as f64 * dt;
        let k1 = eval(t, &q, &s)?;
        let res = omega_residual(&q, &k1.qdot)?;
        if !(res <= MAX_STEP_RESIDUAL) {
            return Err(Error::StepRejected {
                t,
                reason: format!("constraint residual {res:.3e}"),
            });
        }
        times.push(t);
        qs.push(q.clone());
        ss.push(s.clone());
        residuals.push(res);
        if step == steps {
            rates.push(k1);
            break;
        }

        let stage = |c: f64, kq: &DVector<f64>, ks: &DVector<f64>| -> Result<StageEval> {
            let tc = t + c * dt;
            let mut qc = &q + kq * (c * dt);
            set_control(&mut qc, n_free, &control.u(tc));
            eval(tc, &qc, &(&s + ks * (c * dt)))
        };
        let k2 = stage(0.5, &k1.qdot, &k1.sdot)?;
        let k3 = stage(0.5, &k2.qdot, &k2.sdot)?;
        let k4 = stage(1.0, &k3.qdot, &k3.sdot)?;
        q += (&k1.qdot + &k2.qdot * 2.0 + &k3.qdot * 2.0 + &k4.qdot) * (dt / 6.0);
        s += (&k1.sdot + &k2.sdot * 2.0 + &k3.sdot * 2.0 + &k4.sdot) * (dt / 6.0);
        rates.push(k1);
        set_control(&mut q, n_free, &control.u(t + dt));
        if !q.iter().chain(s.iter()).all(|x| x.is_finite()) {
            return Err(Error::StepRejected {
                t: t + dt,
                reason: "state is not finite".into(),
            });
        }
        if config.reproject_each_step {
            if let RhsSelector::Ambient = selector {
                let (_, _, _, pstar) = geometry::first_block(spec, &q)?;
                s = pstar * &s;
            }
        }
    }

    let mut keep: Vec<usize> = (0..times.len()).step_by(config.diagnostics_stride).collect();
    if *keep.last().unwrap() != times.len() - 1 {
        keep.push(times.len() - 1);
    }

    let mut out = Trajectory {
        n_free,
        n_control: m,
        times: Vec::with_capacity(keep.len()),
        q: Vec::with_capacity(keep.len()),
        p_i: Vec::with_capacity(keep.len()),
        xi: matches!(selector, RhsSelector::Frame(_)).then(|| Vec::with_capacity(keep.len())),
        hamiltonian: Vec::with_capacity(keep.len()),
        constraint_residual: Vec::with_capacity(keep.len()),
        dalembert_residual: Vec::with_capacity(keep.len()),
        control: Vec::with_capacity(keep.len()),
    };
    for &i in &keep {
        let t = times[i];
        let (p_i, p, p_dot, rate_scale) =
            momentum_and_rate(spec, selector, control, t, &qs[i], &ss[i], &rates[i].qdot, &rates[i].sdot)?;
        let reaction = dynamics::reaction_force(spec, t, &qs[i], &p, &p_dot)?;
        out.times.push(t);
        out.hamiltonian.push(dynamics::hamiltonian(spec, &qs[i], &p)?);
        out.constraint_residual.push(residuals[i]);
        out.dalembert_residual
            .push(reaction.residual / reaction.scale.max(rate_scale).max(REACTION_FLOOR));
        out.control.push(control.u(t));
        out.q.push(qs[i].clone());
        out.p_i.push(p_i);
        if let Some(xi) = out.xi.as_mut() {
            xi.push(ss[i].clone());
        }
    }
    Ok(out)
}

/// Classical RK4 for `ẋ = f(t, x)` over `steps` steps of size `dt`.
pub fn rk4<F>(f: F, t0: f64, x0: &DVector<f64>, dt: f64, steps: usize) -> Result<DVector<f64>>
where
    F: Fn(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    let mut x = x0.clone();
    for i in 0..steps {
        let t = t0 + i as f64 * dt;
        let k1 = f(t, &x)?;
        let k2 = f(t + 0.5 * dt, &(&x + &k1 * (0.5 * dt)))?;
        let k3 = f(t + 0.5 * dt, &(&x + &k2 * (0.5 * dt)))?;
        let k4 = f(t + dt, &(&x + &k3 * dt))?;
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    }
    Ok(x)
}
