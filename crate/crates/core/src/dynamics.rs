//! Closed reduced equations for `(q, p_I)` and their frame form.
//!
//! With `p = p_I + k(u̇)` the momentum equation is `ṗ_I = θ_I[p, p] + F_I`,
//! where
//!
//! ```text
//! θ_I[p, p̃] = Σ_i (g⁻¹p)^i ∂P*_I/∂q^i p̃ − ½ P*_I (p ∂g⁻¹/∂q p̃)
//! ```
//!
//! and the configuration moves by `q̇ = g⁻¹ p_I + h(u̇)`.

use nalgebra::{DMatrix, DVector};

use crate::control::ControlSignal;
use crate::error::{Error, Result};
use crate::geometry::{self, FrameField, ProjectionSet};
use crate::system::{central_difference, SystemSpec};

/// Allowed gap between the controlled coordinates and `u(t)`.
pub const ADAPTED_TOL: f64 = 1e-8;

/// Relative step-halving mismatch above which a frame is declared non-smooth.
pub const FRAME_SMOOTHNESS_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedState {
    pub q: DVector<f64>,
    /// Ambient representation of `p_I`.
    pub p_i: DVector<f64>,
}

impl ReducedState {
    pub fn new(q: DVector<f64>, p_i: DVector<f64>) -> Self {
        Self { q, p_i }
    }
}

/// Everything the bilinear form θ_I needs at one point: the projections and
/// the partial derivatives of `P*_I` and `g⁻¹`.
#[derive(Debug, Clone)]
pub struct LocalTensors {
    pub proj: ProjectionSet,
    pub dpstar_i: Vec<DMatrix<f64>>,
    pub dg_inv: Vec<DMatrix<f64>>,
}

impl LocalTensors {
    pub fn at(spec: &SystemSpec, q: &DVector<f64>) -> Result<Self> {
        let proj = geometry::projection_set(spec, q)?;
        let dpstar_i = (0..spec.dim())
            .map(|i| {
                let pstar = |x: &DVector<f64>| geometry::first_block(spec, x).map(|b| b.3);
                central_difference(pstar, q, i, spec.fd_step_at(q, i))
            })
            .collect::<Result<Vec<_>>>()?;
        let dg_inv = spec.metric_inverse_derivatives(q)?;
        Ok(Self { proj, dpstar_i, dg_inv })
    }

    pub fn theta(&self, p: &DVector<f64>, pt: &DVector<f64>) -> DVector<f64> {
        let v = &self.proj.g_inv * p;
        let n = v.len();
        let mut out = DVector::zeros(n);
        let mut c = DVector::zeros(n);
        for i in 0..n {
            if v[i] != 0.0 {
                out += &self.dpstar_i[i] * pt * v[i];
            }
            c[i] = p.dot(&(&self.dg_inv[i] * pt));
        }
        out - &self.proj.pstar_i * c * 0.5
    }

    /// `Υ[p_I, u̇] = θ_I[p_I, k u̇] + θ_I[k u̇, p_I]`.
    pub fn upsilon(&self, p_i: &DVector<f64>, udot: &DVector<f64>) -> DVector<f64> {
        let ku = self.proj.lift_covector(udot);
        self.theta(p_i, &ku) + self.theta(&ku, p_i)
    }

    /// `Ψ[u̇, u̇] = θ_I[k u̇, k u̇]`.
    pub fn psi(&self, udot: &DVector<f64>) -> DVector<f64> {
        let ku = self.proj.lift_covector(udot);
        self.theta(&ku, &ku)
    }
}

pub fn theta_i_apply(
    spec: &SystemSpec,
    q: &DVector<f64>,
    p: &DVector<f64>,
    pt: &DVector<f64>,
) -> Result<DVector<f64>> {
    Ok(LocalTensors::at(spec, q)?.theta(p, pt))
}

pub fn centrifugal_psi(spec: &SystemSpec, q: &DVector<f64>, udot: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(LocalTensors::at(spec, q)?.psi(udot))
}

/// Point values of the three pieces of the momentum equation and the
/// projected force.
#[derive(Debug, Clone)]
pub struct CoefficientTensors {
    pub theta: DVector<f64>,
    pub upsilon: DVector<f64>,
    pub psi: DVector<f64>,
    pub force_i: DVector<f64>,
}

impl CoefficientTensors {
    pub fn total(&self) -> DVector<f64> {
        &self.theta + &self.upsilon + &self.psi + &self.force_i
    }
}

pub fn coefficient_tensors(
    spec: &SystemSpec,
    t: f64,
    state: &ReducedState,
    udot: &DVector<f64>,
) -> Result<CoefficientTensors> {
    let local = LocalTensors::at(spec, &state.q)?;
    let p = &state.p_i + local.proj.lift_covector(udot);
    Ok(CoefficientTensors {
        theta: local.theta(&state.p_i, &state.p_i),
        upsilon: local.upsilon(&state.p_i, udot),
        psi: local.psi(udot),
        force_i: &local.proj.pstar_i * spec.force(t, &state.q, &p),
    })
}

pub(crate) fn check_adapted(spec: &SystemSpec, t: f64, q: &DVector<f64>, u: &DVector<f64>) -> Result<()> {
    let n = spec.n_free();
    if u.len() != spec.n_control() {
        return Err(Error::Dimension(format!(
            "control has {} channels, system has {}",
            u.len(),
            spec.n_control()
        )));
    }
    if q.len() != spec.dim() {
        return Err(Error::Dimension(format!("point has {} entries, chart has {}", q.len(), spec.dim())));
    }
    let deviation = (0..u.len()).map(|a| (q[n + a] - u[a]).abs()).fold(0.0, f64::max);
    if deviation > ADAPTED_TOL * u.amax().max(1.0) {
        return Err(Error::NonAdaptedState { t, deviation });
    }
    Ok(())
}

/// `(q̇, ṗ_I)` at `(t, q, p_I)`.
pub fn reduced_rhs(
    spec: &SystemSpec,
    t: f64,
    state: &ReducedState,
    control: &ControlSignal,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_adapted(spec, t, &state.q, &control.u(t))?;
    let udot = control.udot(t);
    let local = LocalTensors::at(spec, &state.q)?;
    Ok(rhs_from_local(spec, &local, t, state, &udot))
}

pub(crate) fn rhs_from_local(
    spec: &SystemSpec,
    local: &LocalTensors,
    t: f64,
    state: &ReducedState,
    udot: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let proj = &local.proj;
    let qdot = &proj.g_inv * &state.p_i + proj.lift(udot);
    let p = &state.p_i + proj.lift_covector(udot);
    let force = spec.force(t, &state.q, &p);
    let pdot = local.theta(&p, &p) + &proj.pstar_i * force;
    (qdot, pdot)
}

/// Coefficients of the frame equations at a point, indexed `[m][(a, b)]`
/// with `m` and `a` running over block I.
#[derive(Debug, Clone)]
pub struct FrameCoefficients {
    pub theta: Vec<DMatrix<f64>>,
    pub upsilon: Vec<DMatrix<f64>>,
    pub psi: Vec<DMatrix<f64>>,
    pub force: DVector<f64>,
    pub h: DMatrix<f64>,
    /// `V_ℓ / g[V_ℓ, V_ℓ]` for ℓ in block I, as columns.
    pub velocity_frame: DMatrix<f64>,
}

impl FrameCoefficients {
    pub fn xi_dot(&self, xi: &DVector<f64>, udot: &DVector<f64>) -> DVector<f64> {
        let d = xi.len();
        DVector::from_fn(d, |m, _| {
            (xi.transpose() * &self.theta[m] * xi)[0]
                + (xi.transpose() * &self.upsilon[m] * udot)[0]
                + (udot.transpose() * &self.psi[m] * udot)[0]
                + self.force[m]
        })
    }

    pub fn q_dot(&self, xi: &DVector<f64>, udot: &DVector<f64>) -> DVector<f64> {
        &self.velocity_frame * xi + &self.h * udot
    }
}

/// Partial derivatives of the block-I coframe rows, `[a][j]`, with the
/// step-halving smoothness test.
fn coframe_derivatives(
    spec: &SystemSpec,
    frame_field: &dyn FrameField,
    q: &DVector<f64>,
    dim_i: usize,
) -> Result<Vec<Vec<DVector<f64>>>> {
    let n = spec.dim();
    let rows = |x: &DVector<f64>| -> Result<DMatrix<f64>> {
        Ok(frame_field.frame_at(x)?.omega_frame.rows(0, dim_i).into_owned())
    };
    let base_scale = rows(q)?.amax().max(1.0);
    let mut out = vec![vec![DVector::zeros(n); n]; dim_i];
    for j in 0..n {
        let h = spec.fd_step_at(q, j);
        let diff = |step: f64| -> Result<DMatrix<f64>> {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[j] += step;
            qm[j] -= step;
            Ok((rows(&qp)? - rows(&qm)?) / (2.0 * step))
        };
        let d1 = diff(h)?;
        let d2 = diff(0.5 * h)?;
        let mismatch = (&d1 - &d2).amax() / d1.amax().max(base_scale);
        if mismatch > FRAME_SMOOTHNESS_TOL {
            return Err(Error::FrameNotSmooth { mismatch });
        }
        for a in 0..dim_i {
            out[a][j] = d1.row(a).transpose();
        }
    }
    Ok(out)
}

/// Assembles the frame coefficients at `q` for a frame whose first block
/// spans Δ ∩ Γ. `xi` and `udot` only enter through the force term.
pub fn frame_coefficients(
    spec: &SystemSpec,
    frame_field: &dyn FrameField,
    t: f64,
    q: &DVector<f64>,
    xi: &DVector<f64>,
    udot: &DVector<f64>,
) -> Result<FrameCoefficients> {
    let (dim_i, _, m_ctrl) = spec.block_dims();
    let n_free = spec.n_free();
    let frame = frame_field.frame_at(q)?;
    if frame.dim_i() != dim_i {
        return Err(Error::FrameMismatch(format!(
            "frame block I has {} columns, expected {dim_i}",
            frame.dim_i()
        )));
    }
    if xi.len() != dim_i {
        return Err(Error::Dimension(format!("xi has {} entries, expected {dim_i}", xi.len())));
    }
    let local = LocalTensors::at(spec, q)?;
    let proj = &local.proj;
    frame.audit(proj, 1e-8)?;
    let d_omega = coframe_derivatives(spec, frame_field, q, dim_i)?;

    let omegas: Vec<DVector<f64>> = (0..dim_i).map(|a| frame.coframe(a)).collect();
    let vs: Vec<DVector<f64>> = (0..dim_i).map(|a| frame.vector(a)).collect();
    let lifts: Vec<DVector<f64>> = (0..dim_i).map(|b| &proj.g_inv * &omegas[b]).collect();
    let ks: Vec<DVector<f64>> = (0..m_ctrl).map(|al| proj.k.column(al).into_owned()).collect();

    // Directional derivative of Ω_a along a Δ-vector (first N components).
    let d_along = |a: usize, dir: &DVector<f64>| -> DVector<f64> {
        let mut acc = DVector::zeros(spec.dim());
        for j in 0..n_free {
            if dir[j] != 0.0 {
                acc += &d_omega[a][j] * dir[j];
            }
        }
        acc
    };

    let mut theta = vec![DMatrix::zeros(dim_i, dim_i); dim_i];
    let mut upsilon = vec![DMatrix::zeros(dim_i, m_ctrl); dim_i];
    let mut psi = vec![DMatrix::zeros(m_ctrl, m_ctrl); dim_i];
    for a in 0..dim_i {
        for b in 0..dim_i {
            let val = local.theta(&omegas[a], &omegas[b]) - d_along(a, &lifts[b]);
            for m in 0..dim_i {
                theta[m][(a, b)] = val.dot(&vs[m]);
            }
        }
        for al in 0..m_ctrl {
            let h_al = proj.h.column(al).into_owned();
            let val = local.theta(&omegas[a], &ks[al]) + local.theta(&ks[al], &omegas[a])
                - &d_omega[a][n_free + al]
                - d_along(a, &h_al);
            for m in 0..dim_i {
                upsilon[m][(a, al)] = val.dot(&vs[m]);
            }
        }
    }
    for al in 0..m_ctrl {
        for be in 0..m_ctrl {
            let val = local.theta(&ks[al], &ks[be]);
            for m in 0..dim_i {
                psi[m][(al, be)] = val.dot(&vs[m]);
            }
        }
    }
    let p_i = frame.block_i_covector(xi);
    let p = &p_i + proj.lift_covector(udot);
    let f = spec.force(t, q, &p);
    let force = DVector::from_fn(dim_i, |m, _| f.dot(&vs[m]));
    let velocity_frame = DMatrix::from_fn(spec.dim(), dim_i, |r, l| lifts[l][r]);
    Ok(FrameCoefficients {
        theta,
        upsilon,
        psi,
        force,
        h: proj.h.clone(),
        velocity_frame,
    })
}

/// `(q̇, ξ̇)` in the frame representation `ξ_m = p_I(V_m)`.
pub fn frame_rhs(
    spec: &SystemSpec,
    frame_field: &dyn FrameField,
    t: f64,
    q: &DVector<f64>,
    xi: &DVector<f64>,
    control: &ControlSignal,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_adapted(spec, t, q, &control.u(t))?;
    let udot = control.udot(t);
    let c = frame_coefficients(spec, frame_field, t, q, xi, &udot)?;
    Ok((c.q_dot(xi, &udot), c.xi_dot(xi, &udot)))
}

/// Constraint reaction and its d'Alembert residual.
#[derive(Debug, Clone)]
pub struct Reaction {
    pub r: DVector<f64>,
    /// `|P*_I R|`; zero for ideal constraints.
    pub residual: f64,
    /// `|ṗ| + |∂H/∂q| + |F|`, the size of the terms that cancel in `R`.
    pub scale: f64,
}

/// `R = ṗ + ∂H/∂q − F` for the full momentum `p`.
pub fn reaction_force(
    spec: &SystemSpec,
    t: f64,
    q: &DVector<f64>,
    p: &DVector<f64>,
    pdot: &DVector<f64>,
) -> Result<Reaction> {
    let dg_inv = spec.metric_inverse_derivatives(q)?;
    let dh = DVector::from_fn(spec.dim(), |i, _| 0.5 * p.dot(&(&dg_inv[i] * p)));
    let force = spec.force(t, q, p);
    let scale = pdot.norm() + dh.norm() + force.norm();
    let r = pdot + dh - force;
    let (_, _, _, pstar_i) = geometry::first_block(spec, q)?;
    let residual = (&pstar_i * &r).norm();
    Ok(Reaction { r, residual, scale })
}

/// `½ p g⁻¹ p`.
pub fn hamiltonian(spec: &SystemSpec, q: &DVector<f64>, p: &DVector<f64>) -> Result<f64> {
    let g_inv = spec.metric_inverse(q)?;
    Ok(0.5 * p.dot(&(g_inv * p)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    /// A bent-metric system with a single constraint, rich enough that every
    /// tensor is nonzero.
    fn bent() -> SystemSpec {
        SystemSpec::new(
            "bent",
            3,
            1,
            1,
            Arc::new(|q: &DVector<f64>| {
                let c = q[3].cos();
                DMatrix::from_row_slice(
                    4,
                    4,
                    &[
                        2.0 + q[1] * q[1], 0.1, 0.0, 0.3 * c, //
                        0.1, 1.0, 0.0, 0.2, //
                        0.0, 0.0, 1.5, 0.1 * q[0], //
                        0.3 * c, 0.2, 0.1 * q[0], 1.0,
                    ],
                )
            }),
            Arc::new(|q: &DVector<f64>| DMatrix::from_row_slice(1, 4, &[q[3].sin(), -q[0], 1.0, q[1]])),
        )
        .unwrap()
    }

    fn point() -> DVector<f64> {
        DVector::from_vec(vec![0.4, -0.3, 0.2, 0.7])
    }

    #[test]
    fn theta_is_bilinear() {
        let spec = bent();
        let local = LocalTensors::at(&spec, &point()).unwrap();
        let a = DVector::from_vec(vec![0.3, -1.0, 0.5, 0.2]);
        let b = DVector::from_vec(vec![-0.7, 0.4, 0.1, 1.1]);
        let c = DVector::from_vec(vec![0.2, 0.2, -0.6, 0.3]);
        let lam = 1.7;
        let lhs = local.theta(&(&a * lam + &c), &b);
        let rhs = local.theta(&a, &b) * lam + local.theta(&c, &b);
        assert!((lhs - rhs).amax() < 1e-10);
        let lhs = local.theta(&a, &(&b * lam + &c));
        let rhs = local.theta(&a, &b) * lam + local.theta(&a, &c);
        assert!((lhs - rhs).amax() < 1e-10);
        assert_eq!(local.theta(&DVector::zeros(4), &b).amax(), 0.0);
    }

    #[test]
    fn psi_is_quadratic_and_split_is_exact() {
        let spec = bent();
        let local = LocalTensors::at(&spec, &point()).unwrap();
        let u = DVector::from_element(1, 0.8);
        let psi = local.psi(&u);
        assert!(psi.amax() > 1e-6);
        assert!((local.psi(&(&u * 3.0)) - &psi * 9.0).amax() < 1e-12 * psi.amax().max(1.0) * 9.0);
        assert_eq!(local.psi(&DVector::zeros(1)).amax(), 0.0);

        let p_i = &local.proj.pstar_i * DVector::from_vec(vec![0.5, -0.2, 0.9, 0.1]);
        let p = &p_i + local.proj.lift_covector(&u);
        let split = local.theta(&p_i, &p_i) + local.upsilon(&p_i, &u) + local.psi(&u);
        assert!((split - local.theta(&p, &p)).amax() < 1e-12);
    }

    #[test]
    fn rhs_respects_constraints_and_rest() {
        let spec = bent();
        let q = point();
        let ctrl = ControlSignal::Polynomial(vec![DVector::from_element(1, 0.7), DVector::from_element(1, -0.4)]);
        let local = LocalTensors::at(&spec, &q).unwrap();
        let p_i = &local.proj.pstar_i * DVector::from_vec(vec![0.5, -0.2, 0.9, 0.1]);
        let state = ReducedState::new(q.clone(), p_i);
        let (qdot, pdot) = reduced_rhs(&spec, 0.0, &state, &ctrl).unwrap();
        let omega = spec.omega(&q).unwrap();
        assert!((omega * &qdot).amax() < 1e-12 * qdot.amax());
        assert!((qdot[3] + 0.4).abs() < 1e-12);
        // Differentiating p_I = P*_I p_I: the part of ṗ_I outside the image
        // of P*_I is (DP*_I · q̇) p_I.
        let off = &pdot - &local.proj.pstar_i * &pdot;
        let mut expected = DVector::zeros(4);
        for i in 0..4 {
            expected += &local.dpstar_i[i] * &state.p_i * qdot[i];
        }
        assert!((off - expected).amax() < 1e-8);

        let rest = ReducedState::new(q.clone(), DVector::zeros(4));
        let (qdot, pdot) = reduced_rhs(&spec, 0.0, &rest, &ControlSignal::constant(&[0.7])).unwrap();
        assert_eq!(qdot.amax(), 0.0);
        assert_eq!(pdot.amax(), 0.0);
    }

    #[test]
    fn non_adapted_state_is_rejected() {
        let spec = bent();
        let state = ReducedState::new(point(), DVector::zeros(4));
        let err = reduced_rhs(&spec, 1.0, &state, &ControlSignal::constant(&[0.0])).unwrap_err();
        assert!(matches!(err, Error::NonAdaptedState { .. }));
    }

    struct Generic(SystemSpec);
    impl FrameField for Generic {
        fn frame_at(&self, q: &DVector<f64>) -> Result<geometry::Frame> {
            geometry::build_frame(&self.0, q)
        }
    }

    #[test]
    fn frame_rhs_matches_ambient_rhs() {
        let spec = bent();
        let q = point();
        let frame_field = Generic(spec.clone());
        let frame = frame_field.frame_at(&q).unwrap();
        let xi = DVector::from_vec(vec![0.6, -0.9]);
        let ctrl = ControlSignal::Polynomial(vec![DVector::from_element(1, 0.7), DVector::from_element(1, 1.3)]);
        let (qdot_f, xidot) = frame_rhs(&spec, &frame_field, 0.0, &q, &xi, &ctrl).unwrap();

        let p_i = frame.block_i_covector(&xi);
        let state = ReducedState::new(q.clone(), p_i.clone());
        let (qdot, pdot) = reduced_rhs(&spec, 0.0, &state, &ctrl).unwrap();
        assert!((&qdot_f - &qdot).amax() < 1e-12);

        // ξ_m = p_I(V_m) differentiated along the flow.
        let h = 1e-6;
        let frame_p = frame_field.frame_at(&(&q + &qdot * h)).unwrap();
        let frame_m = frame_field.frame_at(&(&q - &qdot * h)).unwrap();
        for m in 0..2 {
            let dv = (frame_p.vector(m) - frame_m.vector(m)) / (2.0 * h);
            let expected = pdot.dot(&frame.vector(m)) + p_i.dot(&dv);
            assert!((xidot[m] - expected).abs() < 1e-6, "{m}: {} vs {expected}", xidot[m]);
        }
    }

    struct Jumpy(SystemSpec);
    impl FrameField for Jumpy {
        fn frame_at(&self, q: &DVector<f64>) -> Result<geometry::Frame> {
            let f = geometry::build_frame(&self.0, q)?;
            let mut v = f.v.clone();
            if q[0] > 0.4 {
                let c = -v.column(0);
                v.set_column(0, &c);
            }
            geometry::Frame::new(v, &self.0.metric(q)?, f.blocks)
        }
    }

    #[test]
    fn discontinuous_frame_is_detected() {
        let spec = bent();
        let err = frame_rhs(
            &spec,
            &Jumpy(spec.clone()),
            0.0,
            &point(),
            &DVector::from_vec(vec![1.0, 0.0]),
            &ControlSignal::constant(&[0.7]),
        )
        .unwrap_err();
        assert!(matches!(err, Error::FrameNotSmooth { .. }), "{err:?}");
    }

    #[test]
    fn hamiltonian_basics() {
        let spec = bent();
        let q = point();
        assert_eq!(hamiltonian(&spec, &q, &DVector::zeros(4)).unwrap(), 0.0);
        let p = DVector::from_vec(vec![1.0, 0.0, -1.0, 0.5]);
        assert!(hamiltonian(&spec, &q, &p).unwrap() > 0.0);
    }

    #[test]
    fn static_reaction_vanishes() {
        let spec = bent();
        let r = reaction_force(&spec, 0.0, &point(), &DVector::zeros(4), &DVector::zeros(4)).unwrap();
        assert_eq!(r.r.amax(), 0.0);
        assert_eq!(r.residual, 0.0);
    }
}
