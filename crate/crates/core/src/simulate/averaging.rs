//! Fast-oscillation sweeps against an averaged system.

use std::f64::consts::TAU;

use nalgebra::DVector;
use rayon::prelude::*;

use super::rk4;
use crate::error::{Error, Result};
use crate::models::roller_racer::{self, ClosedForm, RollerRacerParams};

/// A system driven by `u = ū + εK sin(t/ε)` that comes with a candidate
/// averaged system.
pub trait TwoScaleModel: Sync {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn fast_rhs(&self, x: &DVector<f64>, u: &DVector<f64>, udot: &DVector<f64>) -> Result<DVector<f64>>;
    fn averaged_rhs(&self, x: &DVector<f64>, ubar: &DVector<f64>, k: &DVector<f64>) -> Result<DVector<f64>>;
}

/// The closed Roller Racer equations in `(q¹, q², q³, ξ)`.
#[derive(Debug, Clone, Copy)]
pub struct RollerRacerTwoScale {
    pub params: RollerRacerParams,
    pub form: ClosedForm,
}

impl TwoScaleModel for RollerRacerTwoScale {
    fn state_dim(&self) -> usize {
        4
    }

    fn control_dim(&self) -> usize {
        1
    }

    fn fast_rhs(&self, x: &DVector<f64>, u: &DVector<f64>, udot: &DVector<f64>) -> Result<DVector<f64>> {
        let r = roller_racer::closed_rhs_with(self.form, &self.params, x[1], u[0], x[3], udot[0])?;
        Ok(DVector::from_row_slice(&r))
    }

    fn averaged_rhs(&self, x: &DVector<f64>, ubar: &DVector<f64>, k: &DVector<f64>) -> Result<DVector<f64>> {
        let r = roller_racer::averaged_rhs_with(self.form, &self.params, ubar[0], k[0], x[1], x[3])?;
        Ok(DVector::from_row_slice(&r))
    }
}

/// Step size as a fraction of ε, shrunk so the step divides the horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtRule {
    pub eps_fraction: f64,
    pub min_steps_per_period: usize,
}

impl Default for DtRule {
    fn default() -> Self {
        Self {
            eps_fraction: 1.0 / 50.0,
            min_steps_per_period: 20,
        }
    }
}

impl DtRule {
    /// `(steps, dt)` covering `[0, t_final]` for the given ε.
    pub fn grid(&self, eps: f64, t_final: f64) -> Result<(usize, f64)> {
        let nominal = self.eps_fraction * eps;
        if !(nominal > 0.0) {
            return Err(Error::InvalidSpec(format!("step for eps = {eps} is not positive")));
        }
        let steps = (t_final / nominal).ceil() as usize;
        let dt = t_final / steps as f64;
        let per_period = TAU * eps / dt;
        if per_period < self.min_steps_per_period as f64 {
            return Err(Error::StepRejected {
                t: 0.0,
                reason: format!(
                    "{per_period:.1} steps per forcing period at eps = {eps}, need {}",
                    self.min_steps_per_period
                ),
            });
        }
        Ok((steps, dt))
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub eps: f64,
    pub dt: f64,
    pub endpoint: DVector<f64>,
    /// Averaged system integrated on the same grid.
    pub averaged_endpoint: DVector<f64>,
    pub error: f64,
    /// `error / previous error`, absent on the first row.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Averaged trajectory on the finest grid, at roughly 100 samples.
    pub averaged_samples: Vec<(f64, DVector<f64>)>,
}

impl SweepResult {
    pub fn errors_decrease(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].error < w[0].error)
    }
}

fn check_dims(model: &dyn TwoScaleModel, x0: &DVector<f64>, ubar: &DVector<f64>, k: &DVector<f64>) -> Result<()> {
    if x0.len() != model.state_dim() || ubar.len() != model.control_dim() || k.len() != model.control_dim() {
        return Err(Error::Dimension(format!(
            "state {} / control {} expected, got {} / {} / {}",
            model.state_dim(),
            model.control_dim(),
            x0.len(),
            ubar.len(),
            k.len()
        )));
    }
    Ok(())
}

fn fast_endpoint(
    model: &dyn TwoScaleModel,
    x0: &DVector<f64>,
    ubar: &DVector<f64>,
    k: &DVector<f64>,
    eps: f64,
    dt: f64,
    steps: usize,
) -> Result<DVector<f64>> {
    rk4(
        |t, x| {
            let (s, c) = (t / eps).sin_cos();
            let u = ubar + k * (eps * s);
            let udot = k * c;
            model.fast_rhs(x, &u, &udot)
        },
        0.0,
        x0,
        dt,
        steps,
    )
}

/// Integrates the oscillating system for each ε and the averaged system on
/// the same grid, reporting endpoint errors at `t_final`.
pub fn oscillation_sweep(
    model: &dyn TwoScaleModel,
    x0: &DVector<f64>,
    ubar: &DVector<f64>,
    k: &DVector<f64>,
    epsilons: &[f64],
    t_final: f64,
    rule: DtRule,
) -> Result<SweepResult> {
    check_dims(model, x0, ubar, k)?;
    if !(t_final > 0.0) {
        return Err(Error::InvalidSpec(format!("t_final must be positive, got {t_final}")));
    }
    if epsilons.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidSpec("every eps must be positive".into()));
    }
    let grids = epsilons
        .iter()
        .map(|&e| rule.grid(e, t_final))
        .collect::<Result<Vec<_>>>()?;
    let averaged = |x: &DVector<f64>| model.averaged_rhs(x, ubar, k);

    let runs = epsilons
        .par_iter()
        .zip(grids.par_iter())
        .map(|(&eps, &(steps, dt))| -> Result<(DVector<f64>, DVector<f64>)> {
            let fast = fast_endpoint(model, x0, ubar, k, eps, dt, steps)?;
            let avg = rk4(|_, x| averaged(x), 0.0, x0, dt, steps)?;
            Ok((fast, avg))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows: Vec<SweepRow> = Vec::with_capacity(runs.len());
    for ((&eps, &(_, dt)), (endpoint, averaged_endpoint)) in epsilons.iter().zip(&grids).zip(runs) {
        let error = (&endpoint - &averaged_endpoint).norm();
        let ratio = rows.last().map(|prev| error / prev.error);
        rows.push(SweepRow {
            eps,
            dt,
            endpoint,
            averaged_endpoint,
            error,
            ratio,
        });
    }

    let (steps, dt) = grids
        .iter()
        .copied()
        .max_by_key(|g| g.0)
        .unwrap_or(((t_final / 1e-3).ceil() as usize, 0.0));
    let dt = if dt > 0.0 { dt } else { t_final / steps as f64 };
    let chunk = (steps / 100).max(1);
    let mut samples = vec![(0.0, x0.clone())];
    let mut x = x0.clone();
    let mut done = 0;
    while done < steps {
        let n = chunk.min(steps - done);
        x = rk4(|_, x| averaged(x), 0.0, &x, dt, n)?;
        done += n;
        samples.push((done as f64 * dt, x.clone()));
    }
    Ok(SweepResult {
        rows,
        averaged_samples: samples,
    })
}

/// Mean drift of the oscillating system over one forcing period, extrapolated
/// to ε → 0 from ε₀, ε₀/2 and ε₀/4. Independent of the averaged formula.
pub fn averaged_rate_oracle(
    model: &dyn TwoScaleModel,
    x: &DVector<f64>,
    ubar: &DVector<f64>,
    k: &DVector<f64>,
    eps0: f64,
) -> Result<DVector<f64>> {
    check_dims(model, x, ubar, k)?;
    const STEPS: usize = 4000;
    let rate = |eps: f64| -> Result<DVector<f64>> {
        let period = TAU * eps;
        let end = fast_endpoint(model, x, ubar, k, eps, period / STEPS as f64, STEPS)?;
        Ok((end - x) / period)
    };
    let r1 = rate(eps0)?;
    let r2 = rate(0.5 * eps0)?;
    let r4 = rate(0.25 * eps0)?;
    Ok((r4 * 8.0 - r2 * 6.0 + r1) / 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rr(form: ClosedForm) -> RollerRacerTwoScale {
        RollerRacerTwoScale {
            params: RollerRacerParams::default(),
            form,
        }
    }

    #[test]
    fn coarse_rule_is_rejected() {
        let rule = DtRule {
            eps_fraction: 1.0,
            min_steps_per_period: 20,
        };
        let err = rule.grid(0.1, 1.0).unwrap_err();
        assert!(matches!(err, Error::StepRejected { .. }));
        assert!(DtRule::default().grid(0.1, 1.0).is_ok());
    }

    #[test]
    fn oracle_matches_corrected_average() {
        let m = rr(ClosedForm::Corrected);
        let x = DVector::from_vec(vec![0.0, 0.4, 0.0, 0.3]);
        let ubar = DVector::from_element(1, 0.2);
        let k = DVector::from_element(1, 1.5);
        let oracle = averaged_rate_oracle(&m, &x, &ubar, &k, 0.01).unwrap();
        let avg = m.averaged_rhs(&x, &ubar, &k).unwrap();
        assert!((&oracle - &avg).amax() < 1e-3 * avg.amax(), "{oracle} {avg}");
    }

    #[test]
    fn zero_amplitude_has_zero_error() {
        let m = rr(ClosedForm::Literal);
        let x0 = DVector::from_vec(vec![0.0, 0.3, 0.0, 0.5]);
        let res = oscillation_sweep(
            &m,
            &x0,
            &DVector::from_element(1, 0.2),
            &DVector::zeros(1),
            &[0.1, 0.05],
            1.0,
            DtRule::default(),
        )
        .unwrap();
        assert!(res.rows.iter().all(|r| r.error == 0.0));
    }
}
