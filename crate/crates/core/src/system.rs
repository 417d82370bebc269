//! The mechanical problem: metric, constraint forms, dimensions, forces.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// A matrix-valued field on the configuration chart.
pub type MatrixField = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// Partial derivatives of the inverse metric, one matrix per coordinate.
pub type MatrixFieldDerivative = Arc<dyn Fn(&DVector<f64>) -> Vec<DMatrix<f64>> + Send + Sync>;

/// External force covector `F(t, q, p)`.
pub type ForceField = Arc<dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>;

/// Default relative finite-difference step for derivatives in `q`.
pub const DEFAULT_FD_STEP: f64 = 5e-6;

/// A non-holonomic system whose last `n_control` coordinates are prescribed
/// by the control (`q[N + a] = u[a]`), so that the fibres of the control map
/// are spanned by the first `n_free` coordinate directions.
#[derive(Clone)]
pub struct SystemSpec {
    pub name: String,
    n_free: usize,
    n_control: usize,
    n_constraints: usize,
    metric: MatrixField,
    metric_inverse: Option<MatrixField>,
    metric_inverse_derivative: Option<MatrixFieldDerivative>,
    omega: MatrixField,
    force: Option<ForceField>,
    pub fd_step: f64,
}

impl fmt::Debug for SystemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemSpec")
            .field("name", &self.name)
            .field("n_free", &self.n_free)
            .field("n_control", &self.n_control)
            .field("n_constraints", &self.n_constraints)
            .field("has_inverse", &self.metric_inverse.is_some())
            .field("has_force", &self.force.is_some())
            .field("fd_step", &self.fd_step)
            .finish()
    }
}

impl SystemSpec {
    /// `omega(q)` must return an `n_constraints x (n_free + n_control)` matrix
    /// whose rows are the constraint one-forms.
    pub fn new(
        name: impl Into<String>,
        n_free: usize,
        n_control: usize,
        n_constraints: usize,
        metric: MatrixField,
        omega: MatrixField,
    ) -> Result<Self> {
        if n_control == 0 {
            return Err(Error::InvalidSpec("at least one controlled coordinate is required".into()));
        }
        if n_constraints > n_free {
            return Err(Error::InvalidSpec(format!(
                "{n_constraints} constraint forms exceed {n_free} free coordinates; transversality is impossible"
            )));
        }
        Ok(Self {
            name: name.into(),
            n_free,
            n_control,
            n_constraints,
            metric,
            metric_inverse: None,
            metric_inverse_derivative: None,
            omega,
            force: None,
            fd_step: DEFAULT_FD_STEP,
        })
    }

    pub fn with_metric_inverse(mut self, inv: MatrixField) -> Self {
        self.metric_inverse = Some(inv);
        self
    }

    /// Analytic `∂g⁻¹/∂q^i`; when absent, central differences are used.
    pub fn with_metric_inverse_derivative(mut self, d: MatrixFieldDerivative) -> Self {
        self.metric_inverse_derivative = Some(d);
        self
    }

    pub fn with_force(mut self, force: ForceField) -> Self {
        self.force = Some(force);
        self
    }

    pub fn with_fd_step(mut self, step: f64) -> Self {
        self.fd_step = step;
        self
    }

    pub fn n_free(&self) -> usize {
        self.n_free
    }

    pub fn n_control(&self) -> usize {
        self.n_control
    }

    pub fn n_constraints(&self) -> usize {
        self.n_constraints
    }

    /// Chart dimension `N + M`.
    pub fn dim(&self) -> usize {
        self.n_free + self.n_control
    }

    /// Expected block dimensions `(N - ν, ν, M)`.
    pub fn block_dims(&self) -> (usize, usize, usize) {
        (self.n_free - self.n_constraints, self.n_constraints, self.n_control)
    }

    pub fn has_force(&self) -> bool {
        self.force.is_some()
    }

    fn check_point(&self, q: &DVector<f64>) -> Result<()> {
        if q.len() != self.dim() {
            return Err(Error::Dimension(format!("point has {} entries, chart has {}", q.len(), self.dim())));
        }
        Ok(())
    }

    /// Metric at `q`, checked for symmetry and positive-definiteness.
    pub fn metric(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_point(q)?;
        let g = (self.metric)(q);
        if g.shape() != (self.dim(), self.dim()) {
            return Err(Error::Dimension(format!("metric callback returned {:?}", g.shape())));
        }
        linalg::cholesky(&g)?;
        Ok(g)
    }

    /// `(g, g⁻¹)` at `q`.
    pub fn metric_pair(&self, q: &DVector<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        self.check_point(q)?;
        let g = (self.metric)(q);
        if g.shape() != (self.dim(), self.dim()) {
            return Err(Error::Dimension(format!("metric callback returned {:?}", g.shape())));
        }
        let inv = match &self.metric_inverse {
            Some(f) => {
                linalg::cholesky(&g)?;
                f(q)
            }
            None => linalg::spd_inverse(&g)?,
        };
        Ok((g, inv))
    }

    pub fn metric_inverse(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.metric_pair(q)?.1)
    }

    /// Constraint matrix (rows are the one-forms ω^k).
    pub fn omega(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_point(q)?;
        let w = (self.omega)(q);
        if w.shape() != (self.n_constraints, self.dim()) {
            return Err(Error::Dimension(format!(
                "constraint callback returned {:?}, expected ({}, {})",
                w.shape(),
                self.n_constraints,
                self.dim()
            )));
        }
        Ok(w)
    }

    /// External force, zero when the system is force-free.
    pub fn force(&self, t: f64, q: &DVector<f64>, p: &DVector<f64>) -> DVector<f64> {
        match &self.force {
            Some(f) => f(t, q, p),
            None => DVector::zeros(self.dim()),
        }
    }

    /// Finite-difference step for coordinate `i` at `q`.
    pub fn fd_step_at(&self, q: &DVector<f64>, i: usize) -> f64 {
        self.fd_step * q[i].abs().max(1.0)
    }

    /// `∂g⁻¹/∂q^i` for every coordinate, analytic when available.
    pub fn metric_inverse_derivatives(&self, q: &DVector<f64>) -> Result<Vec<DMatrix<f64>>> {
        if let Some(d) = &self.metric_inverse_derivative {
            return Ok(d(q));
        }
        (0..self.dim())
            .map(|i| central_difference(|x| self.metric_inverse(x), q, i, self.fd_step_at(q, i)))
            .collect()
    }

    /// Selection matrix `Dπ` (the last `M` coordinates).
    pub fn control_selector(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n_control, self.dim());
        for a in 0..self.n_control {
            d[(a, self.n_free + a)] = 1.0;
        }
        d
    }

    /// Returns a copy with the metric replaced; used to build corrupted
    /// fixtures and parameter variants.
    pub fn with_metric(mut self, metric: MatrixField) -> Self {
        self.metric = metric;
        self.metric_inverse = None;
        self.metric_inverse_derivative = None;
        self
    }
}

/// Five-point central difference of `f` along coordinate `i`, exact for
/// quartics.
pub(crate) fn central_difference<F>(f: F, q: &DVector<f64>, i: usize, h: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DMatrix<f64>>,
{
    let mut e = DVector::zeros(q.len());
    e[i] = 1.0;
    directional_difference(f, q, &e, h)
}

/// Five-point central difference of `f` along `dir` with parameter step `h`.
pub(crate) fn directional_difference<F>(f: F, q: &DVector<f64>, dir: &DVector<f64>, h: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DMatrix<f64>>,
{
    let at = |k: f64| f(&(q + dir * (k * h)));
    Ok((at(-2.0)? - at(2.0)? + (at(1.0)? - at(-1.0)?) * 8.0) / (12.0 * h))
}
