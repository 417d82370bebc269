//! Prescribed control trajectories `u(t)` and their rates.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};

pub type SignalFn = Arc<dyn Fn(f64) -> DVector<f64> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlKind {
    Constant,
    Polynomial,
    Sinusoid,
    Ramp,
    Custom,
}

/// A control signal together with its exact time derivative.
#[derive(Clone)]
pub enum ControlSignal {
    Constant(DVector<f64>),
    /// `u(t) = c₀ + c₁ t + c₂ t² + ...`, one coefficient vector per power.
    Polynomial(Vec<DVector<f64>>),
    /// `u(t) = ū + ε K sin(t/ε)`.
    Sinusoid {
        ubar: DVector<f64>,
        k: DVector<f64>,
        eps: f64,
    },
    /// Monotone transition from `from` to `to` over `[start, start + duration]`
    /// with the C² profile `6s⁵ - 15s⁴ + 10s³`, constant outside.
    Ramp {
        from: DVector<f64>,
        to: DVector<f64>,
        start: f64,
        duration: f64,
    },
    Custom { dim: usize, u: SignalFn, udot: SignalFn },
}

impl fmt::Debug for ControlSignal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(v) => f.debug_tuple("Constant").field(&v.as_slice()).finish(),
            Self::Polynomial(c) => f.debug_tuple("Polynomial").field(&c.len()).finish(),
            Self::Sinusoid { ubar, k, eps } => f
                .debug_struct("Sinusoid")
                .field("ubar", &ubar.as_slice())
                .field("k", &k.as_slice())
                .field("eps", eps)
                .finish(),
            Self::Ramp {
                from,
                to,
                start,
                duration,
            } => f
                .debug_struct("Ramp")
                .field("from", &from.as_slice())
                .field("to", &to.as_slice())
                .field("start", start)
                .field("duration", duration)
                .finish(),
            Self::Custom { dim, .. } => f.debug_struct("Custom").field("dim", dim).finish(),
        }
    }
}

/// Value and first two derivatives of the ramp profile.
fn smootherstep(s: f64) -> (f64, f64, f64) {
    if s <= 0.0 {
        (0.0, 0.0, 0.0)
    } else if s >= 1.0 {
        (1.0, 0.0, 0.0)
    } else {
        let v = s * s * s * (s * (6.0 * s - 15.0) + 10.0);
        let d = 30.0 * s * s * (s - 1.0) * (s - 1.0);
        let dd = 60.0 * s * (s - 1.0) * (2.0 * s - 1.0);
        (v, d, dd)
    }
}

impl ControlSignal {
    pub fn constant(values: &[f64]) -> Self {
        Self::Constant(DVector::from_column_slice(values))
    }

    pub fn sinusoid(ubar: &[f64], k: &[f64], eps: f64) -> Self {
        Self::Sinusoid {
            ubar: DVector::from_column_slice(ubar),
            k: DVector::from_column_slice(k),
            eps,
        }
    }

    pub fn ramp(from: &[f64], to: &[f64], start: f64, duration: f64) -> Self {
        Self::Ramp {
            from: DVector::from_column_slice(from),
            to: DVector::from_column_slice(to),
            start,
            duration,
        }
    }

    pub fn kind(&self) -> ControlKind {
        match self {
            Self::Constant(_) => ControlKind::Constant,
            Self::Polynomial(_) => ControlKind::Polynomial,
            Self::Sinusoid { .. } => ControlKind::Sinusoid,
            Self::Ramp { .. } => ControlKind::Ramp,
            Self::Custom { .. } => ControlKind::Custom,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Constant(v) => v.len(),
            Self::Polynomial(c) => c.first().map_or(0, |v| v.len()),
            Self::Sinusoid { ubar, .. } => ubar.len(),
            Self::Ramp { from, .. } => from.len(),
            Self::Custom { dim, .. } => *dim,
        }
    }

    /// Checks parameter shapes and ranges.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        match self {
            Self::Constant(v) if v.is_empty() => bad("constant control has no channels".into()),
            Self::Polynomial(c) => {
                if c.is_empty() {
                    return bad("polynomial control has no coefficients".into());
                }
                if c.iter().any(|v| v.len() != c[0].len()) {
                    return bad("polynomial coefficients differ in length".into());
                }
                Ok(())
            }
            Self::Sinusoid { ubar, k, eps } => {
                if ubar.len() != k.len() {
                    return bad(format!("sinusoid: ubar has {} channels, K has {}", ubar.len(), k.len()));
                }
                if !(*eps > 0.0) {
                    return bad(format!("sinusoid: eps must be positive, got {eps}"));
                }
                Ok(())
            }
            Self::Ramp {
                from, to, duration, ..
            } => {
                if from.len() != to.len() {
                    return bad("ramp endpoints differ in length".into());
                }
                if !(*duration > 0.0) {
                    return bad(format!("ramp duration must be positive, got {duration}"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn u(&self, t: f64) -> DVector<f64> {
        match self {
            Self::Constant(v) => v.clone(),
            Self::Polynomial(c) => {
                let mut acc = DVector::zeros(self.dim());
                for coeff in c.iter().rev() {
                    acc = acc * t + coeff;
                }
                acc
            }
            Self::Sinusoid { ubar, k, eps } => ubar + k * (eps * (t / eps).sin()),
            Self::Ramp {
                from,
                to,
                start,
                duration,
            } => {
                let (s, _, _) = smootherstep((t - start) / duration);
                from + (to - from) * s
            }
            Self::Custom { u, .. } => u(t),
        }
    }

    pub fn udot(&self, t: f64) -> DVector<f64> {
        match self {
            Self::Constant(v) => DVector::zeros(v.len()),
            Self::Polynomial(c) => {
                let mut acc = DVector::zeros(self.dim());
                for (n, coeff) in c.iter().enumerate().skip(1).rev() {
                    acc = acc * t + coeff * n as f64;
                }
                acc
            }
            Self::Sinusoid { k, eps, .. } => k * (t / eps).cos(),
            Self::Ramp {
                from,
                to,
                start,
                duration,
            } => {
                let (_, d, _) = smootherstep((t - start) / duration);
                (to - from) * (d / duration)
            }
            Self::Custom { udot, .. } => udot(t),
        }
    }

    /// Second derivative; custom signals are differenced numerically.
    pub fn uddot(&self, t: f64) -> DVector<f64> {
        match self {
            Self::Constant(v) => DVector::zeros(v.len()),
            Self::Polynomial(c) => {
                let mut acc = DVector::zeros(self.dim());
                for (n, coeff) in c.iter().enumerate().skip(2).rev() {
                    acc = acc * t + coeff * (n * (n - 1)) as f64;
                }
                acc
            }
            Self::Sinusoid { k, eps, .. } => k * (-(t / eps).sin() / eps),
            Self::Ramp {
                from,
                to,
                start,
                duration,
            } => {
                let (_, _, dd) = smootherstep((t - start) / duration);
                (to - from) * (dd / (duration * duration))
            }
            Self::Custom { udot, .. } => {
                let h = 1e-6 * t.abs().max(1.0);
                (udot(t + h) - udot(t - h)) / (2.0 * h)
            }
        }
    }

    /// Largest gap between `udot` and the centred difference of `u` over the
    /// grid `t₀, t₀ + dt, ...`, a check on user-supplied derivatives.
    pub fn rate_mismatch(&self, t0: f64, dt: f64, steps: usize) -> f64 {
        (1..steps)
            .map(|i| {
                let t = t0 + i as f64 * dt;
                let fd = (self.u(t + dt) - self.u(t - dt)) / (2.0 * dt);
                (fd - self.udot(t)).amax()
            })
            .fold(0.0, f64::max)
    }
}
