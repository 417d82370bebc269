//! The Roller Racer: two planar bodies joined at a steering joint.
//!
//! Coordinates `(q¹, q², q³, u)`: `q¹, q³` locate the large body, `q²` is its
//! heading and `u` the steering angle (the control). Both bodies carry wheels
//! that roll without slipping.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::control::ControlSignal;
use crate::dynamics::{self, ReducedState};
use crate::error::{Error, Result};
use crate::geometry::{BlockRanges, Frame, FrameField};
use crate::system::SystemSpec;

/// Smallest |sin q²| and |cos u| accepted by the closed-form frame.
pub const FRAME_CHART_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RollerRacerParams {
    /// Distance between the joint and the large body's centre of mass.
    pub rho: f64,
    /// Moment of inertia of the large body.
    pub i_big: f64,
    /// Moment of inertia of the small body.
    pub j_small: f64,
}

impl Default for RollerRacerParams {
    fn default() -> Self {
        Self {
            rho: 1.0,
            i_big: 2.0,
            j_small: 1.0,
        }
    }
}

impl RollerRacerParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("rho", self.rho), ("i_big", self.i_big), ("j_small", self.j_small)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidSpec(format!("roller racer parameter {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// `Δ₀ = ρ² cos²u + (I+J) sin²u`.
    pub fn delta0(&self, u: f64) -> f64 {
        let (s, c) = u.sin_cos();
        self.rho * self.rho * c * c + (self.i_big + self.j_small) * s * s
    }

    /// `Δ₁ = I + J + ρ² + (ρ² − I − J) cos 2u`.
    pub fn delta1(&self, u: f64) -> f64 {
        let ij = self.i_big + self.j_small;
        let r2 = self.rho * self.rho;
        ij + r2 + (r2 - ij) * (2.0 * u).cos()
    }

    pub fn metric(&self) -> DMatrix<f64> {
        let (i, j) = (self.i_big, self.j_small);
        DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0, 0.0, 0.0, 0.0, //
                0.0, i + j, 0.0, j, //
                0.0, 0.0, 1.0, 0.0, //
                0.0, j, 0.0, j,
            ],
        )
    }

    pub fn metric_inverse(&self) -> DMatrix<f64> {
        let (i, j) = (self.i_big, self.j_small);
        DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0, 0.0, 0.0, 0.0, //
                0.0, 1.0 / i, 0.0, -1.0 / i, //
                0.0, 0.0, 1.0, 0.0, //
                0.0, -1.0 / i, 0.0, (i + j) / (i * j),
            ],
        )
    }

    pub fn constraints(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let (q2, u) = (q[1], q[3]);
        DMatrix::from_row_slice(
            2,
            4,
            &[
                q2.cos(),
                0.0,
                -q2.sin(),
                0.0,
                (q2 + u).cos(),
                self.rho * u.cos(),
                -(q2 + u).sin(),
                0.0,
            ],
        )
    }

    /// The spanning vector `w₁` of Δ ∩ Γ.
    pub fn w1(&self, q2: f64, u: f64) -> DVector<f64> {
        let (su, cu) = u.sin_cos();
        let (s2, c2) = q2.sin_cos();
        DVector::from_vec(vec![2.0 * self.rho * cu * s2, 2.0 * su, 2.0 * self.rho * cu * c2, 0.0])
    }

    /// `v₄`, which equals the lever `h(1)`.
    pub fn v4(&self, q2: f64, u: f64) -> DVector<f64> {
        let d0 = self.delta0(u);
        let (s2, c2) = q2.sin_cos();
        let s2u = (2.0 * u).sin();
        let j = self.j_small;
        DVector::from_vec(vec![
            -0.5 * j * self.rho * s2 * s2u / d0,
            -j * u.sin().powi(2) / d0,
            -0.5 * j * self.rho * c2 * s2u / d0,
            1.0,
        ])
    }
}

pub fn spec(params: RollerRacerParams) -> Result<SystemSpec> {
    params.validate()?;
    let g = params.metric();
    let g_inv = params.metric_inverse();
    Ok(SystemSpec::new(
        "roller-racer",
        3,
        1,
        2,
        Arc::new(move |_| g.clone()),
        Arc::new(move |q| params.constraints(q)),
    )?
    .with_metric_inverse(Arc::new(move |_| g_inv.clone()))
    .with_metric_inverse_derivative(Arc::new(|_| vec![DMatrix::zeros(4, 4); 4])))
}

/// Same constraint forms with the Euclidean metric.
pub fn flat_spec(params: RollerRacerParams) -> Result<SystemSpec> {
    params.validate()?;
    SystemSpec::new(
        "roller-racer-flat",
        3,
        1,
        2,
        Arc::new(|_| DMatrix::identity(4, 4)),
        Arc::new(move |q| params.constraints(q)),
    )
}

/// A spec whose steering coupling is scaled by `1 + amount`; a negative
/// control for oracle comparisons.
pub fn corrupted_spec(params: RollerRacerParams, amount: f64) -> Result<SystemSpec> {
    let base = spec(params)?;
    let mut g = params.metric();
    g[(1, 3)] *= 1.0 + amount;
    g[(3, 1)] *= 1.0 + amount;
    let mut s = base.with_metric(Arc::new(move |_| g.clone()));
    s.name = "roller-racer-corrupted".into();
    Ok(s)
}

/// The closed-form frame `{w₁, v₂, v₃, v₄}`, unnormalised.
#[derive(Debug, Clone, Copy)]
pub struct ClosedFormFrame {
    pub params: RollerRacerParams,
}

impl ClosedFormFrame {
    pub fn vectors(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        let (q2, u) = (q[1], q[3]);
        if q2.sin().abs() < FRAME_CHART_TOL {
            return Err(Error::ChartDomain(format!("sin q2 = {:.3e}", q2.sin())));
        }
        if u.cos().abs() < FRAME_CHART_TOL {
            return Err(Error::ChartDomain(format!("cos u = {:.3e}", u.cos())));
        }
        let w1 = self.params.w1(q2, u);
        let v2 = DVector::from_vec(vec![self.params.i_big * u.tan() / (q2.sin() * self.params.rho), -1.0, 0.0, 1.0]);
        let v3 = DVector::from_vec(vec![-q2.cos() / q2.sin(), 0.0, 1.0, 0.0]);
        let v4 = self.params.v4(q2, u);
        Ok(DMatrix::from_columns(&[w1, v2, v3, v4]))
    }
}

impl FrameField for ClosedFormFrame {
    fn frame_at(&self, q: &DVector<f64>) -> Result<Frame> {
        Frame::new(self.vectors(q)?, &self.params.metric(), BlockRanges::from_dims(1, 2, 1))
    }
}

/// Which closed form to use for the scalar `ξ` equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClosedForm {
    /// Transcribed literally.
    Literal,
    /// Rederived from the metric and constraints.
    Corrected,
}

impl ClosedForm {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "literal" => Some(Self::Literal),
            "corrected" => Some(Self::Corrected),
            _ => None,
        }
    }

    /// Factors multiplying the literal `ξ u̇` and `u̇²` coefficients.
    fn factors(self) -> (f64, f64) {
        match self {
            Self::Literal => (1.0, 1.0),
            Self::Corrected => (0.5, 0.25),
        }
    }
}

fn nonsingular(p: &RollerRacerParams, u: f64) -> Result<(f64, f64)> {
    let d0 = p.delta0(u);
    let d1 = p.delta1(u);
    if d0.abs() < 1e-14 {
        return Err(Error::SingularDenominator("Delta0"));
    }
    if d1.abs() < 1e-14 {
        return Err(Error::SingularDenominator("Delta1"));
    }
    Ok((d0, d1))
}

/// The four closed equations in `(q¹, q², q³, ξ)`, where `q̇_I = ξ w₁`.
pub fn closed_rhs_with(
    form: ClosedForm,
    params: &RollerRacerParams,
    q2: f64,
    u: f64,
    xi: f64,
    udot: f64,
) -> Result<[f64; 4]> {
    let (d0, d1) = nonsingular(params, u)?;
    let RollerRacerParams { rho, i_big, j_small } = *params;
    let (su, cu) = u.sin_cos();
    let (s2, c2) = q2.sin_cos();
    let s2u = (2.0 * u).sin();
    let (fu, fpsi) = form.factors();
    Ok([
        2.0 * rho * cu * s2 * xi - j_small * rho * s2 * s2u / (2.0 * d0) * udot,
        2.0 * su * xi - j_small * su * su / d0 * udot,
        2.0 * rho * c2 * cu * xi - j_small * rho * c2 * s2u / (2.0 * d0) * udot,
        -fu * 2.0 * (i_big + j_small - rho * rho) * s2u / d1 * xi * udot
            + fpsi * 8.0 * j_small * rho * rho * cu / (d1 * d1) * udot * udot,
    ])
}

/// Literal closed form.
pub fn closed_rhs(params: &RollerRacerParams, q2: f64, u: f64, xi: f64, udot: f64) -> Result<[f64; 4]> {
    closed_rhs_with(ClosedForm::Literal, params, q2, u, xi, udot)
}

pub fn corrected_closed_rhs(params: &RollerRacerParams, q2: f64, u: f64, xi: f64, udot: f64) -> Result<[f64; 4]> {
    closed_rhs_with(ClosedForm::Corrected, params, q2, u, xi, udot)
}

/// Averaged system for `u = ū + εK sin(t/ε)`.
pub fn averaged_rhs_with(
    form: ClosedForm,
    params: &RollerRacerParams,
    ubar: f64,
    k: f64,
    q2: f64,
    xi: f64,
) -> Result<[f64; 4]> {
    let (_, d1) = nonsingular(params, ubar)?;
    let RollerRacerParams { rho, j_small, .. } = *params;
    let (su, cu) = ubar.sin_cos();
    let (s2, c2) = q2.sin_cos();
    let (_, fpsi) = form.factors();
    Ok([
        2.0 * rho * cu * s2 * xi,
        2.0 * su * xi,
        2.0 * rho * cu * c2 * xi,
        fpsi * 4.0 * j_small * rho * rho * cu * k * k / (d1 * d1),
    ])
}

pub fn averaged_rhs(params: &RollerRacerParams, ubar: f64, k: f64, q2: f64, xi: f64) -> Result<[f64; 4]> {
    averaged_rhs_with(ClosedForm::Literal, params, ubar, k, q2, xi)
}

pub fn corrected_averaged_rhs(params: &RollerRacerParams, ubar: f64, k: f64, q2: f64, xi: f64) -> Result<[f64; 4]> {
    averaged_rhs_with(ClosedForm::Corrected, params, ubar, k, q2, xi)
}

/// `p_I` whose velocity is `ξ w₁`.
pub fn momentum_from_xi(params: &RollerRacerParams, q: &DVector<f64>, xi: f64) -> DVector<f64> {
    params.metric() * params.w1(q[1], q[3]) * xi
}

/// Inverse of [`momentum_from_xi`] on the image of `P*_I`.
pub fn xi_from_momentum(params: &RollerRacerParams, q: &DVector<f64>, p_i: &DVector<f64>) -> f64 {
    p_i.dot(&params.w1(q[1], q[3])) / (4.0 * params.delta0(q[3]))
}

/// Generic reduced right-hand side at `(q, ξ, u̇)`, expressed in the
/// closed-form variables `(q̇¹, q̇², q̇³, ξ̇)`.
pub fn pipeline_in_closed_variables(
    spec: &SystemSpec,
    params: &RollerRacerParams,
    q: &DVector<f64>,
    xi: f64,
    udot: f64,
) -> Result<[f64; 4]> {
    let u = q[3];
    let p_i = momentum_from_xi(params, q, xi);
    let control = ControlSignal::Polynomial(vec![DVector::from_element(1, u), DVector::from_element(1, udot)]);
    let (qdot, pdot) = dynamics::reduced_rhs(spec, 0.0, &ReducedState::new(q.clone(), p_i.clone()), &control)?;

    let (su, cu) = u.sin_cos();
    let (s2, c2) = q[1].sin_cos();
    let rho = params.rho;
    let dw_dq2 = DVector::from_vec(vec![2.0 * rho * cu * c2, 0.0, -2.0 * rho * cu * s2, 0.0]);
    let dw_du = DVector::from_vec(vec![-2.0 * rho * su * s2, 2.0 * cu, -2.0 * rho * su * c2, 0.0]);
    let w_dot = dw_dq2 * qdot[1] + dw_du * qdot[3];
    let norm = 4.0 * params.delta0(u);
    let norm_dot = 4.0 * (params.i_big + params.j_small - rho * rho) * (2.0 * u).sin() * qdot[3];
    let w1 = params.w1(q[1], u);
    let xi_dot = (pdot.dot(&w1) + p_i.dot(&w_dot)) / norm - xi * norm_dot / norm;
    Ok([qdot[0], qdot[1], qdot[2], xi_dot])
}

/// Largest componentwise relative gap between `a` and the reference `b`.
/// Entries of `b` smaller than `1e-3 · max|b|` are measured against that
/// floor.
pub fn relative_deviation(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let floor = (1e-3 * scale).max(1e-12);
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(floor))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OraclePoint {
    pub q: [f64; 4],
    pub xi: f64,
    pub udot: f64,
    pub pipeline: [f64; 4],
    pub closed: [f64; 4],
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub samples: usize,
    /// Draws rejected as singular and redrawn.
    pub resampled: usize,
    pub max_deviation: f64,
    pub worst: Option<OraclePoint>,
}

/// Smallest Δ₀ accepted by [`oracle_compare`].
pub const ORACLE_DELTA_TOL: f64 = 1e-6;

/// Compares the generic reduced dynamics of `spec` with the closed form at
/// `n` seeded points with `q², u, ξ, u̇` drawn from `(-π, π) × (-1.3, 1.3) ×
/// (-2, 2)²`.
pub fn oracle_compare(
    spec: &SystemSpec,
    params: &RollerRacerParams,
    form: ClosedForm,
    n: usize,
    seed: u64,
) -> Result<OracleReport> {
    use rand::{Rng, SeedableRng};
    params.validate()?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut report = OracleReport {
        samples: 0,
        resampled: 0,
        max_deviation: 0.0,
        worst: None,
    };
    let max_draws = 100 * n.max(1);
    let mut draws = 0;
    while report.samples < n {
        if draws == max_draws {
            return Err(Error::InvalidSpec(format!("no regular sample found in {max_draws} draws")));
        }
        draws += 1;
        let q = [
            rng.random_range(-2.0..2.0),
            rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
            rng.random_range(-2.0..2.0),
            rng.random_range(-1.3..1.3),
        ];
        let xi = rng.random_range(-2.0..2.0);
        let udot = rng.random_range(-2.0..2.0);
        if params.delta0(q[3]) < ORACLE_DELTA_TOL {
            report.resampled += 1;
            continue;
        }
        let closed = match closed_rhs_with(form, params, q[1], q[3], xi, udot) {
            Ok(c) => c,
            Err(Error::SingularDenominator(_)) => {
                report.resampled += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let pipeline = pipeline_in_closed_variables(spec, params, &DVector::from_row_slice(&q), xi, udot)?;
        let deviation = relative_deviation(&pipeline, &closed);
        report.samples += 1;
        if report.worst.is_none() || deviation > report.max_deviation {
            report.max_deviation = deviation;
            report.worst = Some(OraclePoint {
                q,
                xi,
                udot,
                pipeline,
                closed,
                deviation,
            });
        }
    }
    Ok(report)
}
