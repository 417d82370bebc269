//! A ball rolling without sliding on a disc whose rotation angle is the
//! control.
//!
//! Chart `(φ, θ, ψ, x, y, u)`: Z-X-Z Euler angles of the ball, the contact
//! point, and the disc angle.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix3};

use crate::error::{Error, Result};
use crate::geometry::{self, BlockRanges, Frame, FrameField};
use crate::linalg;
use crate::system::SystemSpec;

/// Smallest |sin θ| accepted away from the gimbal locus.
pub const GIMBAL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RollingBallParams {
    pub r: f64,
    /// Moment of inertia of the ball about any axis.
    pub kappa2: f64,
}

impl Default for RollingBallParams {
    fn default() -> Self {
        // Unit-mass homogeneous ball of unit radius.
        Self { r: 1.0, kappa2: 0.4 }
    }
}

impl RollingBallParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("r", self.r), ("kappa2", self.kappa2)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidSpec(format!("rolling ball parameter {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn kappa(&self) -> f64 {
        self.kappa2.sqrt()
    }
}

/// Maps Euler-angle rates to the space angular velocity.
pub fn angular_velocity_matrix(phi: f64, theta: f64) -> Matrix3<f64> {
    let (sp, cp) = phi.sin_cos();
    let (st, ct) = theta.sin_cos();
    Matrix3::new(
        0.0, cp, st * sp, //
        0.0, sp, -st * cp, //
        1.0, 0.0, ct,
    )
}

fn metric(params: &RollingBallParams, q: &DVector<f64>) -> DMatrix<f64> {
    let e = angular_velocity_matrix(q[0], q[1]);
    let block = e.transpose() * e * params.kappa2;
    let mut g = DMatrix::identity(6, 6);
    g.view_mut((0, 0), (3, 3)).copy_from(&block);
    g
}

fn constraints(params: &RollingBallParams, q: &DVector<f64>) -> DMatrix<f64> {
    let e = angular_velocity_matrix(q[0], q[1]);
    let r = params.r;
    let (x, y) = (q[3], q[4]);
    DMatrix::from_row_slice(
        2,
        6,
        &[
            r * e[(1, 0)],
            r * e[(1, 1)],
            r * e[(1, 2)],
            1.0,
            0.0,
            y,
            -r * e[(0, 0)],
            -r * e[(0, 1)],
            -r * e[(0, 2)],
            0.0,
            1.0,
            -x,
        ],
    )
}

pub fn spec(params: RollingBallParams) -> Result<SystemSpec> {
    params.validate()?;
    SystemSpec::new(
        "rolling-ball",
        5,
        1,
        2,
        Arc::new(move |q| metric(&params, q)),
        Arc::new(move |q| constraints(&params, q)),
    )
}

fn check_chart(q: &DVector<f64>) -> Result<()> {
    if q[1].sin().abs() < GIMBAL_TOL {
        return Err(Error::ChartDomain(format!("Euler angle theta = {} is on the gimbal locus", q[1])));
    }
    Ok(())
}

/// The g-orthonormal frame `V₁..V₆`: `V₁..V₃` map to the unit angular
/// velocities `e_j / κ`, `V₄..V₆` are the coordinate directions.
#[derive(Debug, Clone, Copy)]
pub struct OrthonormalFrame {
    pub params: RollingBallParams,
}

impl OrthonormalFrame {
    pub fn vectors(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_chart(q)?;
        let e_inv = angular_velocity_matrix(q[0], q[1])
            .try_inverse()
            .ok_or_else(|| Error::ChartDomain("angular velocity matrix is singular".into()))?;
        let mut v = DMatrix::identity(6, 6);
        v.view_mut((0, 0), (3, 3)).copy_from(&(e_inv / self.params.kappa()));
        Ok(v)
    }
}

impl FrameField for OrthonormalFrame {
    fn frame_at(&self, q: &DVector<f64>) -> Result<Frame> {
        Frame::new(self.vectors(q)?, &metric(&self.params, q), BlockRanges::from_dims(3, 2, 1))
    }
}

/// Block-adapted frame built on `V₁..V₆`: block I is
/// `{V₁ + (r/κ)V₅, V₂ − (r/κ)V₄, V₃}`, block II is `g⁻¹ ωᵀ`, block III is `h`.
#[derive(Debug, Clone)]
pub struct AdaptedFrame {
    pub params: RollingBallParams,
    pub spec: SystemSpec,
}

impl AdaptedFrame {
    pub fn new(params: RollingBallParams) -> Result<Self> {
        Ok(Self { params, spec: spec(params)? })
    }
}

impl FrameField for AdaptedFrame {
    fn frame_at(&self, q: &DVector<f64>) -> Result<Frame> {
        let base = OrthonormalFrame { params: self.params }.vectors(q)?;
        let c = self.params.r / self.params.kappa();
        let col = |i: usize| base.column(i).into_owned();
        let proj = geometry::projection_set(&self.spec, q)?;
        let block_ii = &proj.g_inv * self.spec.omega(q)?.transpose();
        let mut v = DMatrix::zeros(6, 6);
        v.set_column(0, &(col(0) + col(4) * c));
        v.set_column(1, &(col(1) - col(3) * c));
        v.set_column(2, &col(2));
        v.set_column(3, &block_ii.column(0));
        v.set_column(4, &block_ii.column(1));
        v.set_column(5, &proj.h.column(0));
        Frame::new(v, &proj.g, BlockRanges::from_dims(3, 2, 1))
    }
}

/// Gram matrix of `V₁..V₆`; the identity when the frame is orthonormal.
pub fn frame_gram(params: &RollingBallParams, q: &DVector<f64>) -> Result<DMatrix<f64>> {
    let v = OrthonormalFrame { params: *params }.vectors(q)?;
    Ok(v.transpose() * metric(params, q) * v)
}

/// `g⁻¹` evaluated at `q`, via the checked SPD inverse.
pub fn metric_inverse(params: &RollingBallParams, q: &DVector<f64>) -> Result<DMatrix<f64>> {
    linalg::spd_inverse(&metric(params, q))
}
