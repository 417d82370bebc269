//! Three-way g-orthogonal splitting of the tangent and cotangent spaces.
//!
//! At a configuration `q` the tangent space splits as
//!
//! * block I   = Δ ∩ Γ (free directions compatible with the constraints),
//! * block II  = Γ^⊥,
//! * block III = Γ ∩ (Δ ∩ Γ)^⊥,
//!
//! with dimensions `(N - ν, ν, M)`. All projections are computed from bases
//! through `B (Bᵀ g B)⁻¹ Bᵀ g`, so they do not depend on which basis the
//! elimination happens to produce. Cotangent projections are
//! `P*_J = g P_J g⁻¹` acting on column covectors.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg;
use crate::system::SystemSpec;

/// Outcome of the transversality test `Δ_q + Γ_q = T_q Q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transversality {
    pub holds: bool,
    /// Rank of the constraint forms restricted to the Δ directions.
    pub rank: usize,
    /// Condition number of that `ν x N` block.
    pub condition_number: f64,
}

/// `Δ + Γ = TQ` iff no nonzero combination of the constraint forms vanishes
/// on Δ, i.e. the first `N` columns of the constraint matrix have full row
/// rank `ν`.
pub fn check_transversality(spec: &SystemSpec, q: &DVector<f64>) -> Result<Transversality> {
    spec.metric(q)?;
    let nu = spec.n_constraints();
    if nu == 0 {
        return Ok(Transversality {
            holds: true,
            rank: 0,
            condition_number: 1.0,
        });
    }
    let omega = spec.omega(q)?;
    let block = omega.columns(0, spec.n_free()).into_owned();
    let rank = linalg::rank(&block);
    Ok(Transversality {
        holds: rank == nu,
        rank,
        condition_number: linalg::condition_number(&block),
    })
}

/// Basis of Δ_q ∩ Γ_q as columns (`(N+M) x (N-ν)`), from pivoted elimination
/// on the Δ block of the constraint matrix.
pub fn delta_gamma_basis(spec: &SystemSpec, q: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = spec.n_free();
    let (dim_i, nu, _) = spec.block_dims();
    let omega = spec.omega(q)?;
    let (null, rank) = linalg::null_space(&omega.columns(0, n).into_owned());
    if rank != nu {
        return Err(Error::RankDeficiency {
            what: "constraint forms on Δ",
            expected: nu,
            found: rank,
        });
    }
    debug_assert_eq!(null.ncols(), dim_i);
    let mut b = DMatrix::zeros(spec.dim(), dim_i);
    b.view_mut((0, 0), (n, dim_i)).copy_from(&null);
    Ok(b)
}

/// `(g, g⁻¹, P_I, P*_I)` without the rank audit of [`projection_set`]; this is
/// what finite-difference loops call at perturbed points.
pub(crate) fn first_block(
    spec: &SystemSpec,
    q: &DVector<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let (g, g_inv) = spec.metric_pair(q)?;
    let b = delta_gamma_basis(spec, q)?;
    let p_i = linalg::metric_projector(&b, &g, "Δ ∩ Γ basis")?;
    let pstar_i = &g * &p_i * &g_inv;
    Ok((g, g_inv, p_i, pstar_i))
}

/// The six projections at a point together with the lever maps.
#[derive(Debug, Clone)]
pub struct ProjectionSet {
    pub p_i: DMatrix<f64>,
    pub p_ii: DMatrix<f64>,
    pub p_iii: DMatrix<f64>,
    pub pstar_i: DMatrix<f64>,
    pub pstar_ii: DMatrix<f64>,
    pub pstar_iii: DMatrix<f64>,
    /// Minimal-energy lift of control velocities, `(N+M) x M`.
    pub h: DMatrix<f64>,
    /// `k = g h`.
    pub k: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub g_inv: DMatrix<f64>,
}

impl ProjectionSet {
    pub fn tangent(&self) -> [&DMatrix<f64>; 3] {
        [&self.p_i, &self.p_ii, &self.p_iii]
    }

    pub fn cotangent(&self) -> [&DMatrix<f64>; 3] {
        [&self.pstar_i, &self.pstar_ii, &self.pstar_iii]
    }

    /// `h(v)`.
    pub fn lift(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.h * v
    }

    /// `k(v) = g h(v)`.
    pub fn lift_covector(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.k * v
    }
}

/// Builds the full decomposition at `q` and audits the block ranks.
pub fn projection_set(spec: &SystemSpec, q: &DVector<f64>) -> Result<ProjectionSet> {
    let (dim_i, nu, m) = spec.block_dims();
    let n = spec.dim();
    let (g, g_inv, p_i, pstar_i) = first_block(spec, q)?;
    let omega = spec.omega(q)?;

    // Γ^⊥ is spanned by g⁻¹ ωᵀ.
    let c = &g_inv * omega.transpose();
    let p_ii = linalg::metric_projector(&c, &g, "Γ^⊥ basis")?;
    let p_iii = DMatrix::identity(n, n) - &p_i - &p_ii;

    for (p, expected, what) in [
        (&p_i, dim_i, "P_I"),
        (&p_ii, nu, "P_II"),
        (&p_iii, m, "P_III"),
    ] {
        let found = linalg::rank(p);
        if found != expected {
            return Err(Error::RankDeficiency { what, expected, found });
        }
    }

    // Δ^⊥ = g⁻¹ Dπᵀ is carried bijectively onto block III by P_III; solving
    // against the control rows normalises Dπ h = Id.
    let dpi = spec.control_selector();
    let v_iii = &p_iii * (&g_inv * dpi.transpose());
    let bottom = v_iii.rows(spec.n_free(), m).into_owned();
    let bottom_inv = bottom.clone().try_inverse().ok_or(Error::RankDeficiency {
        what: "Dπ restricted to block III",
        expected: m,
        found: linalg::rank(&bottom),
    })?;
    let h = v_iii * bottom_inv;
    let k = &g * &h;

    let pstar_ii = &g * &p_ii * &g_inv;
    let pstar_iii = &g * &p_iii * &g_inv;
    Ok(ProjectionSet {
        p_i,
        p_ii,
        p_iii,
        pstar_i,
        pstar_ii,
        pstar_iii,
        h,
        k,
        g,
        g_inv,
    })
}

/// Column ranges of the three blocks inside a [`Frame`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockRanges {
    pub i: Range<usize>,
    pub ii: Range<usize>,
    pub iii: Range<usize>,
}

impl BlockRanges {
    pub fn from_dims(dim_i: usize, nu: usize, m: usize) -> Self {
        Self {
            i: 0..dim_i,
            ii: dim_i..dim_i + nu,
            iii: dim_i + nu..dim_i + nu + m,
        }
    }
}

/// A block-adapted frame `V_1..V_{N+M}` and its coframe
/// `Ω_i = g(V_i) / g[V_i, V_i]`.
#[derive(Debug, Clone)]
pub struct Frame {
    /// Columns are the frame vectors.
    pub v: DMatrix<f64>,
    /// Rows are the coframe covectors.
    pub omega_frame: DMatrix<f64>,
    pub blocks: BlockRanges,
}

impl Frame {
    /// Builds the coframe from `v` and the metric at the same point.
    pub fn new(v: DMatrix<f64>, g: &DMatrix<f64>, blocks: BlockRanges) -> Result<Self> {
        let n = g.nrows();
        if v.shape() != (n, n) || blocks.iii.end != n {
            return Err(Error::Dimension(format!("frame is {:?} for chart dimension {n}", v.shape())));
        }
        let mut omega_frame = DMatrix::zeros(n, n);
        for i in 0..n {
            let col = v.column(i).into_owned();
            let gv = g * &col;
            let norm = gv.dot(&col);
            if !(norm > 0.0) {
                return Err(Error::FrameMismatch(format!("frame vector {i} has zero length")));
            }
            omega_frame.set_row(i, &(gv / norm).transpose());
        }
        Ok(Self { v, omega_frame, blocks })
    }

    pub fn dim_i(&self) -> usize {
        self.blocks.i.len()
    }

    pub fn vector(&self, i: usize) -> DVector<f64> {
        self.v.column(i).into_owned()
    }

    pub fn coframe(&self, i: usize) -> DVector<f64> {
        self.omega_frame.row(i).transpose()
    }

    /// `h = V_III (V_III^III)⁻¹` where the second factor is the control rows
    /// of the block-III columns.
    pub fn lever(&self, n_free: usize) -> Result<DMatrix<f64>> {
        let r = &self.blocks.iii;
        let v_iii = self.v.columns(r.start, r.len()).into_owned();
        let bottom = v_iii.rows(n_free, r.len()).into_owned();
        let inv = bottom.try_inverse().ok_or_else(|| {
            Error::FrameMismatch("block III columns are not transverse to the fibres".into())
        })?;
        Ok(v_iii * inv)
    }

    /// Frame components `ξ_m = p(V_m)` of a covector on block I.
    pub fn block_i_components(&self, p: &DVector<f64>) -> DVector<f64> {
        let r = &self.blocks.i;
        self.v.columns(r.start, r.len()).transpose() * p
    }

    /// `Σ ξ_ℓ Ω_ℓ` over block I.
    pub fn block_i_covector(&self, xi: &DVector<f64>) -> DVector<f64> {
        let r = &self.blocks.i;
        self.omega_frame.rows(r.start, r.len()).transpose() * xi
    }

    /// Checks the frame against the decomposition at `q` (block I inside
    /// Δ ∩ Γ, g-orthogonal, block II inside Γ^⊥, block III inside III).
    pub fn audit(&self, proj: &ProjectionSet, tol: f64) -> Result<()> {
        let blocks = [
            (&self.blocks.i, &proj.p_i, "I"),
            (&self.blocks.ii, &proj.p_ii, "II"),
            (&self.blocks.iii, &proj.p_iii, "III"),
        ];
        for (range, p, name) in blocks {
            for c in range.clone() {
                let v = self.vector(c);
                let res = (p * &v - &v).amax();
                if res > tol * v.amax().max(1.0) {
                    return Err(Error::FrameMismatch(format!(
                        "column {c} leaves block {name} (residual {res:.3e})"
                    )));
                }
            }
        }
        let r = &self.blocks.i;
        for a in r.clone() {
            for b in r.clone().filter(|&b| b > a) {
                let ga = linalg::inner(&proj.g, &self.vector(a), &self.vector(b));
                let scale = (linalg::inner(&proj.g, &self.vector(a), &self.vector(a))
                    * linalg::inner(&proj.g, &self.vector(b), &self.vector(b)))
                .sqrt();
                if ga.abs() > tol * scale {
                    return Err(Error::FrameMismatch(format!("block I columns {a}, {b} not g-orthogonal")));
                }
            }
        }
        Ok(())
    }
}

/// A frame varying smoothly with `q`, supplied by a model.
pub trait FrameField: Send + Sync {
    fn frame_at(&self, q: &DVector<f64>) -> Result<Frame>;
}

/// Generic g-unit frame: block I from the Δ ∩ Γ null space, block II from
/// `g⁻¹ ωᵀ`, block III from `P_III g⁻¹ Dπᵀ`, each g-orthonormalised.
pub fn build_frame(spec: &SystemSpec, q: &DVector<f64>) -> Result<Frame> {
    let proj = projection_set(spec, q)?;
    let (dim_i, nu, m) = spec.block_dims();
    let n = spec.dim();
    let g = &proj.g;
    let b = delta_gamma_basis(spec, q)?;
    let block_i = linalg::metric_orthonormalize(&b, g, "frame block I")?;
    let omega = spec.omega(q)?;
    let block_ii = linalg::metric_orthonormalize(&(&proj.g_inv * omega.transpose()), g, "frame block II")?;
    let v_iii = &proj.p_iii * (&proj.g_inv * spec.control_selector().transpose());
    let block_iii = linalg::metric_orthonormalize(&v_iii, g, "frame block III")?;

    let mut v = DMatrix::zeros(n, n);
    v.columns_mut(0, dim_i).copy_from(&block_i);
    v.columns_mut(dim_i, nu).copy_from(&block_ii);
    v.columns_mut(dim_i + nu, m).copy_from(&block_iii);
    Frame::new(v, g, BlockRanges::from_dims(dim_i, nu, m))
}

/// Samples competitors `z ∈ Γ_q` with `Dπ z = v` and checks that none has
/// smaller kinetic norm than `h(v)`.
///
/// Competitors are Euclidean projections of random points onto the affine
/// constraint set, so they do not reuse the g-orthogonal machinery.
pub fn argmin_certificate<R: Rng + ?Sized>(
    spec: &SystemSpec,
    q: &DVector<f64>,
    v: &DVector<f64>,
    trials: usize,
    rng: &mut R,
) -> Result<bool> {
    let proj = projection_set(spec, q)?;
    let n = spec.dim();
    let nu = spec.n_constraints();
    let m = spec.n_control();
    if v.len() != m {
        return Err(Error::Dimension(format!("control velocity has {} entries, expected {m}", v.len())));
    }
    let hv = proj.lift(v);
    let g = &proj.g;
    let best = linalg::inner(g, &hv, &hv);

    let mut a = DMatrix::zeros(nu + m, n);
    a.rows_mut(0, nu).copy_from(&spec.omega(q)?);
    a.rows_mut(nu, m).copy_from(&spec.control_selector());
    let mut rhs = DVector::zeros(nu + m);
    rhs.rows_mut(nu, m).copy_from(v);

    let feas = (&a * &hv - &rhs).amax();
    if feas > 1e-10 * (1.0 + v.amax() + hv.amax()) {
        return Ok(false);
    }

    let aat = (&a * a.transpose()).lu();
    let scale = hv.amax().max(1.0);
    for _ in 0..trials {
        let spread = scale * 10f64.powf(rng.random_range(-4.0..1.0));
        let r = DVector::from_fn(n, |i, _| hv[i] + spread * rng.random_range(-1.0..1.0));
        let corr = aat
            .solve(&(&a * &r - &rhs))
            .ok_or(Error::RankDeficiency {
                what: "constraint + control rows",
                expected: nu + m,
                found: linalg::rank(&a),
            })?;
        let z = r - a.transpose() * corr;
        let energy = linalg::inner(g, &z, &z);
        if energy < best - 1e-10 * best.max(energy).max(f64::MIN_POSITIVE) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Largest violation of the decomposition identities at one point, each
/// measured relative to the size of the matrices involved.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DecompositionAudit {
    pub completeness: f64,
    pub idempotence: f64,
    pub cross_products: f64,
    pub self_adjointness: f64,
    pub cotangent_conjugation: f64,
    pub lever: f64,
    pub ranks_ok: bool,
}

impl DecompositionAudit {
    pub fn worst(&self) -> f64 {
        [
            self.completeness,
            self.idempotence,
            self.cross_products,
            self.self_adjointness,
            self.cotangent_conjugation,
            self.lever,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Measures every [`ProjectionSet`] invariant at `q`.
pub fn audit_decomposition(spec: &SystemSpec, q: &DVector<f64>) -> Result<DecompositionAudit> {
    let ps = projection_set(spec, q)?;
    let n = spec.dim();
    let id = DMatrix::<f64>::identity(n, n);
    let tangent = ps.tangent();
    let pscale = tangent.iter().map(|p| p.amax()).fold(1.0, f64::max);
    let gscale = ps.g.amax().max(1.0);

    let completeness = (tangent[0] + tangent[1] + tangent[2] - &id).amax() / pscale;
    let mut idem: f64 = 0.0;
    let mut cross: f64 = 0.0;
    let mut adj: f64 = 0.0;
    let mut conj: f64 = 0.0;
    for (j, p) in tangent.iter().enumerate() {
        idem = idem.max((*p * *p - *p).amax() / (pscale * pscale));
        adj = adj.max((&ps.g * *p - p.transpose() * &ps.g).amax() / (gscale * pscale));
        let expect = &ps.g * *p * &ps.g_inv;
        let cscale = expect.amax().max(1.0);
        conj = conj.max((ps.cotangent()[j] - &expect).amax() / cscale);
        for (k, pk) in tangent.iter().enumerate() {
            if k != j {
                cross = cross.max((*p * *pk).amax() / (pscale * pscale));
            }
        }
    }
    let (dim_i, nu, m) = spec.block_dims();
    let ranks_ok = linalg::rank(&ps.p_i) == dim_i
        && linalg::rank(&ps.p_ii) == nu
        && linalg::rank(&ps.p_iii) == m;
    let omega = spec.omega(q)?;
    let hscale = ps.h.amax().max(1.0);
    let mut lever = if nu > 0 { (&omega * &ps.h).amax() / (hscale * omega.amax().max(1.0)) } else { 0.0 };
    let bottom = ps.h.rows(spec.n_free(), m).into_owned();
    lever = lever.max((bottom - DMatrix::identity(m, m)).amax());
    Ok(DecompositionAudit {
        completeness,
        idempotence: idem,
        cross_products: cross,
        self_adjointness: adj,
        cotangent_conjugation: conj,
        lever,
        ranks_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn flat(n: usize, m: usize) -> SystemSpec {
        let d = n + m;
        SystemSpec::new(
            "flat",
            n,
            m,
            0,
            Arc::new(move |_| DMatrix::identity(d, d)),
            Arc::new(move |_| DMatrix::zeros(0, d)),
        )
        .unwrap()
    }

    /// Heisenberg-type constraint dz - x dy on (x, y, z, u) with a tilted metric.
    fn skew() -> SystemSpec {
        SystemSpec::new(
            "skew",
            3,
            1,
            1,
            Arc::new(|q: &DVector<f64>| {
                DMatrix::from_row_slice(
                    4,
                    4,
                    &[
                        2.0, 0.1, 0.0, 0.3, //
                        0.1, 1.0 + q[0] * q[0], 0.0, 0.2, //
                        0.0, 0.0, 1.5, 0.0, //
                        0.3, 0.2, 0.0, 1.0,
                    ],
                )
            }),
            Arc::new(|q: &DVector<f64>| DMatrix::from_row_slice(1, 4, &[0.0, -q[0], 1.0, q[1]])),
        )
        .unwrap()
    }

    #[test]
    fn transversality_without_constraints() {
        let t = check_transversality(&flat(2, 1), &DVector::zeros(3)).unwrap();
        assert!(t.holds);
        assert_eq!(t.condition_number, 1.0);
    }

    #[test]
    fn transversality_fails_when_form_is_du() {
        let spec = SystemSpec::new(
            "degenerate",
            2,
            1,
            2,
            Arc::new(|_| DMatrix::identity(3, 3)),
            Arc::new(|_| DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 0.0, 0.0, 0.0, 1.0])),
        )
        .unwrap();
        let t = check_transversality(&spec, &DVector::zeros(3)).unwrap();
        assert!(!t.holds);
        assert_eq!(t.rank, 1);
        assert!(matches!(
            projection_set(&spec, &DVector::zeros(3)),
            Err(Error::RankDeficiency { .. })
        ));
    }

    #[test]
    fn singular_metric_is_reported() {
        let spec = SystemSpec::new(
            "singular",
            1,
            1,
            0,
            Arc::new(|_| DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0])),
            Arc::new(|_| DMatrix::zeros(0, 2)),
        )
        .unwrap();
        assert!(matches!(
            check_transversality(&spec, &DVector::zeros(2)),
            Err(Error::SingularMetric { .. })
        ));
    }

    #[test]
    fn euclidean_splitting() {
        let spec = flat(2, 2);
        let ps = projection_set(&spec, &DVector::from_vec(vec![0.3, -1.0, 2.0, 0.5])).unwrap();
        let mut expected = DMatrix::zeros(4, 4);
        expected[(2, 2)] = 1.0;
        expected[(3, 3)] = 1.0;
        assert!((&ps.p_iii - &expected).amax() < 1e-15);
        assert!(ps.p_ii.amax() < 1e-15);
        let mut h = DMatrix::zeros(4, 2);
        h[(2, 0)] = 1.0;
        h[(3, 1)] = 1.0;
        assert!((&ps.h - h).amax() < 1e-15);
    }

    #[test]
    fn skew_system_invariants() {
        let spec = skew();
        let q = DVector::from_vec(vec![0.7, -0.4, 0.2, 1.1]);
        let a = audit_decomposition(&spec, &q).unwrap();
        assert!(a.ranks_ok);
        assert!(a.worst() < 1e-12, "{a:?}");
    }

    #[test]
    fn built_frame_is_g_orthonormal_and_dual() {
        let spec = skew();
        let q = DVector::from_vec(vec![0.7, -0.4, 0.2, 1.1]);
        let frame = build_frame(&spec, &q).unwrap();
        let g = spec.metric(&q).unwrap();
        let gram = frame.v.transpose() * &g * &frame.v;
        assert!((gram - DMatrix::identity(4, 4)).amax() < 1e-12);
        let dual = &frame.omega_frame * &frame.v;
        assert!((dual - DMatrix::identity(4, 4)).amax() < 1e-12);
        frame.audit(&projection_set(&spec, &q).unwrap(), 1e-10).unwrap();
        let h = frame.lever(3).unwrap();
        assert!((h - projection_set(&spec, &q).unwrap().h).amax() < 1e-12);
    }

    #[test]
    fn flat_frame_is_identity_up_to_scaling() {
        let spec = flat(2, 1);
        let frame = build_frame(&spec, &DVector::zeros(3)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert!(frame.v[(i, j)].abs() < 1e-15);
                }
            }
            assert!((frame.v[(i, i)].abs() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn argmin_certificate_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let spec = skew();
        let q = DVector::from_vec(vec![0.7, -0.4, 0.2, 1.1]);
        assert!(argmin_certificate(&spec, &q, &DVector::from_element(1, 1.3), 500, &mut rng).unwrap());
        assert!(argmin_certificate(&spec, &q, &DVector::zeros(1), 50, &mut rng).unwrap());
        let flat = flat(1, 2);
        let v = DVector::from_vec(vec![0.6, -0.8]);
        let ps = projection_set(&flat, &DVector::zeros(3)).unwrap();
        let hv = ps.lift(&v);
        assert!((linalg::inner(&ps.g, &hv, &hv) - 1.0).abs() < 1e-15);
        assert!(argmin_certificate(&flat, &DVector::zeros(3), &v, 100, &mut rng).unwrap());
    }
}
