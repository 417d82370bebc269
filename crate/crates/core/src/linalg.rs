//! Small dense helpers: SPD checks, pivoted null spaces, metric projectors.
//!
//! Dimensions here are desk-scale (a dozen coordinates at most), so everything
//! is plain dense `DMatrix` arithmetic.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative singular-value threshold used for every rank decision.
pub const RANK_TOL: f64 = 1e-9;

/// Cholesky pivots below this fraction of the largest diagonal entry mark the
/// metric as singular.
pub const SPD_PIVOT_TOL: f64 = 1e-12;

/// Lower Cholesky factor of a symmetric positive-definite matrix, rejecting
/// asymmetric input and tiny pivots.
pub fn cholesky(g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = g.nrows();
    if n != g.ncols() {
        return Err(Error::Dimension(format!("metric is {}x{}", g.nrows(), g.ncols())));
    }
    let scale = (0..n).map(|i| g[(i, i)].abs()).fold(0.0, f64::max);
    let asym = (&g.transpose() - g).amax();
    if asym > 1e-10 * scale.max(1e-300) {
        return Err(Error::AsymmetricMetric { asymmetry: asym });
    }
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = g[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > SPD_PIVOT_TOL * scale) {
            return Err(Error::SingularMetric { pivot: d, scale });
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = g[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Inverse of an SPD matrix via its checked Cholesky factor.
pub fn spd_inverse(g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let l = cholesky(g)?;
    let chol = nalgebra::Cholesky::pack_dirty(l);
    Ok(chol.inverse())
}

/// Numerical rank with a singular-value threshold relative to the largest one.
pub fn rank(a: &DMatrix<f64>) -> usize {
    if a.is_empty() {
        return 0;
    }
    let sv = a.clone().svd(false, false).singular_values;
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * smax).count()
}

/// Ratio of extreme singular values (1 for an empty matrix).
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 1.0;
    }
    let sv = a.clone().svd(false, false).singular_values;
    let smin = sv.min();
    if smin == 0.0 {
        f64::INFINITY
    } else {
        sv.max() / smin
    }
}

/// Null space of `a` by partially pivoted row reduction with a fixed column
/// order. Columns of the result are the canonical free-variable solutions.
///
/// Returns the basis and the rank that was found.
pub fn null_space(a: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let (rows, cols) = a.shape();
    let mut r = a.clone();
    let tol = RANK_TOL * a.amax();
    let mut pivots = Vec::with_capacity(rows.min(cols));
    let mut row = 0;
    for col in 0..cols {
        if row == rows {
            break;
        }
        let (best, val) = (row..rows)
            .map(|i| (i, r[(i, col)].abs()))
            .fold((row, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if val <= tol || val == 0.0 {
            continue;
        }
        r.swap_rows(row, best);
        let p = r[(row, col)];
        for j in 0..cols {
            r[(row, j)] /= p;
        }
        for i in 0..rows {
            if i != row {
                let f = r[(i, col)];
                if f != 0.0 {
                    for j in 0..cols {
                        r[(i, j)] -= f * r[(row, j)];
                    }
                }
            }
        }
        pivots.push(col);
        row += 1;
    }
    let free: Vec<usize> = (0..cols).filter(|c| !pivots.contains(c)).collect();
    let mut basis = DMatrix::zeros(cols, free.len());
    for (k, &f) in free.iter().enumerate() {
        basis[(f, k)] = 1.0;
        for (i, &pc) in pivots.iter().enumerate() {
            basis[(pc, k)] = -r[(i, f)];
        }
    }
    (basis, pivots.len())
}

/// The g-orthogonal projector `B (Bᵀ g B)⁻¹ Bᵀ g` onto the column span of `b`.
pub fn metric_projector(b: &DMatrix<f64>, g: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    let n = g.nrows();
    if b.ncols() == 0 {
        return Ok(DMatrix::zeros(n, n));
    }
    let gram = b.transpose() * g * b;
    let rhs = b.transpose() * g;
    let coeffs = gram.clone().lu().solve(&rhs).ok_or(Error::RankDeficiency {
        what,
        expected: b.ncols(),
        found: rank(&gram),
    })?;
    Ok(b * coeffs)
}

/// Modified Gram-Schmidt in the g inner product; columns come out g-unit and
/// mutually g-orthogonal. Fails on (numerically) dependent input.
pub fn metric_orthonormalize(cols: &DMatrix<f64>, g: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    let mut out = cols.clone();
    for j in 0..out.ncols() {
        let mut v = out.column(j).into_owned();
        let orig = inner(g, &v, &v).sqrt();
        for k in 0..j {
            let e = out.column(k).into_owned();
            let c = inner(g, &e, &v);
            v -= e * c;
        }
        let nrm = inner(g, &v, &v).sqrt();
        if !(nrm > RANK_TOL * orig.max(f64::MIN_POSITIVE)) {
            return Err(Error::RankDeficiency {
                what,
                expected: cols.ncols(),
                found: j,
            });
        }
        out.set_column(j, &(v / nrm));
    }
    Ok(out)
}

/// `aᵀ g b`.
pub fn inner(g: &DMatrix<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (g * b).dot(a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_rejects_indefinite() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(cholesky(&g), Err(Error::SingularMetric { .. })));
    }

    #[test]
    fn cholesky_rejects_asymmetric() {
        let g = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.0, 2.0]);
        assert!(matches!(cholesky(&g), Err(Error::AsymmetricMetric { .. })));
    }

    #[test]
    fn spd_inverse_matches_lu() {
        let g = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let inv = spd_inverse(&g).unwrap();
        assert!((&g * &inv - DMatrix::identity(3, 3)).amax() < 1e-14);
    }

    #[test]
    fn null_space_of_wide_matrix() {
        let a = DMatrix::from_row_slice(2, 4, &[1.0, 2.0, 0.0, 1.0, 0.0, 1.0, 1.0, -1.0]);
        let (b, r) = null_space(&a);
        assert_eq!(r, 2);
        assert_eq!(b.ncols(), 2);
        assert!((&a * &b).amax() < 1e-14);
        assert_eq!(rank(&b), 2);
    }

    #[test]
    fn null_space_detects_dependent_rows() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 0.0, 2.0, 2.0, 0.0]);
        let (b, r) = null_space(&a);
        assert_eq!(r, 1);
        assert_eq!(b.ncols(), 2);
    }

    #[test]
    fn projector_is_idempotent_and_self_adjoint() {
        let g = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.0, 0.1, 0.0, 0.1, 1.5]);
        let b = DMatrix::from_column_slice(3, 1, &[1.0, -1.0, 0.5]);
        let p = metric_projector(&b, &g, "test").unwrap();
        assert!((&p * &p - &p).amax() < 1e-14);
        assert!((&g * &p - p.transpose() * &g).amax() < 1e-14);
    }
}
