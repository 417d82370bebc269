//! Deciding whether a system is fit for jumps.
//!
//! A system is fit for jumps when the reduced equations are affine in `u̇`,
//! i.e. the centrifugal term `Ψ` vanishes identically. That is tested by
//! sampling, together with the equivalent statement that θ_I vanishes on the
//! image of `P*_III`, a sufficient condition on the metric and frame, and
//! the leaf-distance derivative.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::dynamics::LocalTensors;
use crate::error::{Error, Result};
use crate::geometry::{self, FrameField};
use crate::sampling::BoxSampler;
use crate::system::SystemSpec;

/// Default threshold on `|Ψ|` per unit `|u̇|²`.
pub const DEFAULT_TOL: f64 = 1e-7;

/// Number of random covectors pushed through `P*_III` per control channel.
const III_PROBES_PER_CHANNEL: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Fit,
    NotFit,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Fit => "fit",
            Self::NotFit => "not-fit",
            Self::Inconclusive => "inconclusive",
        })
    }
}

/// Results of the sufficient-condition check.
#[derive(Debug, Clone, PartialEq)]
pub struct Theorem62Report {
    /// Declared by the model, never computed.
    pub flat_normal_bundle: bool,
    /// Largest `|∂g⁻¹/∂q^{N+α}|` over the samples.
    pub max_control_derivative: f64,
    pub hamiltonian_ignores_control: bool,
    /// Largest deviation of the `P*_I` frame matrix from its value at the
    /// first sample.
    pub max_projection_variation: f64,
    pub projection_constant: bool,
    pub samples: usize,
}

impl Theorem62Report {
    pub fn all_hold(&self) -> bool {
        self.flat_normal_bundle && self.hamiltonian_ignores_control && self.projection_constant
    }
}

#[derive(Debug, Clone)]
pub struct FitnessReport {
    pub scan: &'static str,
    pub tol: f64,
    pub max_psi_norm: f64,
    pub sample_count: usize,
    pub failed_samples: usize,
    pub worst_point: Option<DVector<f64>>,
    pub worst_direction: Option<DVector<f64>>,
    pub first_failure: Option<String>,
    pub verdict: Verdict,
    pub theorem62: Option<Theorem62Report>,
}

fn fmt_vec(v: &DVector<f64>) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

impl fmt::Display for FitnessReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scan: {}", self.scan)?;
        writeln!(f, "verdict: {}", self.verdict)?;
        writeln!(f, "tol: {:e}", self.tol)?;
        writeln!(f, "max_psi_norm: {:e}", self.max_psi_norm)?;
        writeln!(f, "samples: {}", self.sample_count)?;
        writeln!(f, "failed_samples: {}", self.failed_samples)?;
        if let Some(q) = &self.worst_point {
            writeln!(f, "worst_point: {}", fmt_vec(q))?;
        }
        if let Some(d) = &self.worst_direction {
            writeln!(f, "worst_direction: {}", fmt_vec(d))?;
        }
        if let Some(e) = &self.first_failure {
            writeln!(f, "first_failure: {e}")?;
        }
        if let Some(t) = &self.theorem62 {
            writeln!(f, "sufficient.flat_normal_bundle (declared): {}", t.flat_normal_bundle)?;
            writeln!(
                f,
                "sufficient.hamiltonian_ignores_control: {} (max {:e})",
                t.hamiltonian_ignores_control, t.max_control_derivative
            )?;
            writeln!(
                f,
                "sufficient.projection_constant: {} (max variation {:e})",
                t.projection_constant, t.max_projection_variation
            )?;
        }
        Ok(())
    }
}

struct PointResult {
    value: f64,
    direction: DVector<f64>,
}

fn aggregate(
    scan: &'static str,
    tol: f64,
    points: &[DVector<f64>],
    results: Vec<Result<PointResult>>,
) -> FitnessReport {
    let mut max = 0.0;
    let mut worst = None;
    let mut failed = 0;
    let mut first_failure = None;
    for (q, r) in points.iter().zip(results) {
        match r {
            Ok(r) => {
                if worst.is_none() || r.value > max {
                    max = r.value;
                    worst = Some((q.clone(), r.direction));
                }
            }
            Err(e) => {
                failed += 1;
                first_failure.get_or_insert_with(|| e.to_string());
            }
        }
    }
    let evaluated = points.len() - failed;
    let verdict = if evaluated > 0 && max > 10.0 * tol {
        Verdict::NotFit
    } else if evaluated == 0 || failed > 0 || max > tol {
        Verdict::Inconclusive
    } else {
        Verdict::Fit
    };
    let (worst_point, worst_direction) = match worst {
        Some((q, d)) => (Some(q), Some(d)),
        None => (None, None),
    };
    FitnessReport {
        scan,
        tol,
        max_psi_norm: max,
        sample_count: points.len(),
        failed_samples: failed,
        worst_point,
        worst_direction,
        first_failure,
        verdict,
        theorem62: None,
    }
}

/// Max of `|Ψ[e, e]|` over sampled points and unit control directions.
pub fn psi_scan(spec: &SystemSpec, sampler: &BoxSampler, n_samples: usize, tol: f64) -> FitnessReport {
    let points = sampler.points(n_samples);
    let dirs = sampler.directions(spec.n_control());
    let results: Vec<Result<PointResult>> = points
        .par_iter()
        .map(|q| {
            let local = LocalTensors::at(spec, q)?;
            Ok(dirs
                .iter()
                .map(|e| PointResult {
                    value: local.psi(e).norm(),
                    direction: e.clone(),
                })
                .fold(None::<PointResult>, |acc, r| match acc {
                    Some(a) if a.value >= r.value => Some(a),
                    _ => Some(r),
                })
                .expect("at least one direction"))
        })
        .collect();
    aggregate("psi", tol, &points, results)
}

/// Max of `|θ_I[w, w]|` over `w` in the image of `P*_III`, normalised by
/// the squared control velocity `Dπ g⁻¹ w` that `w` represents.
pub fn theta_on_iii_scan(spec: &SystemSpec, sampler: &BoxSampler, n_samples: usize, tol: f64) -> FitnessReport {
    let points = sampler.points(n_samples);
    let m = spec.n_control();
    let n = spec.dim();
    let probes = BoxSampler::new(DVector::zeros(n), DVector::zeros(n), sampler.seed)
        .directions(n)
        .into_iter()
        .take(n + III_PROBES_PER_CHANNEL * m)
        .collect::<Vec<_>>();
    let dpi = spec.control_selector();
    let results: Vec<Result<PointResult>> = points
        .par_iter()
        .map(|q| {
            let local = LocalTensors::at(spec, q)?;
            let proj = &local.proj;
            let mut best = PointResult {
                value: 0.0,
                direction: DVector::zeros(m),
            };
            for z in &probes {
                let w = &proj.pstar_iii * z;
                let v = &dpi * (&proj.g_inv * &w);
                let scale = v.norm_squared();
                if scale <= 1e-20 * w.norm_squared() {
                    continue;
                }
                let value = local.theta(&w, &w).norm() / scale;
                if value > best.value {
                    best = PointResult {
                        value,
                        direction: &v / scale.sqrt(),
                    };
                }
            }
            Ok(best)
        })
        .collect();
    aggregate("theta_on_III", tol, &points, results)
}

/// Sufficient conditions: `H` independent of the controlled coordinates and
/// `P*_I` constant in the model's reference frame. Flatness of Δ^⊥ is taken
/// from `flat_normal_bundle`.
pub fn theorem62_check(
    spec: &SystemSpec,
    reference_frame: &dyn FrameField,
    flat_normal_bundle: bool,
    sampler: &BoxSampler,
    n_samples: usize,
    tol: f64,
) -> Result<Theorem62Report> {
    let points = sampler.points(n_samples);
    let n_free = spec.n_free();
    let per_point: Vec<Result<(f64, DMatrix<f64>)>> = points
        .par_iter()
        .map(|q| {
            let d = spec.metric_inverse_derivatives(q)?;
            let ctrl = d[n_free..].iter().map(|m| m.amax()).fold(0.0, f64::max);
            let (_, _, _, pstar_i) = geometry::first_block(spec, q)?;
            let v = reference_frame.frame_at(q)?.v;
            let v_inv_t = v
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::FrameMismatch("reference frame is singular".into()))?
                .transpose();
            Ok((ctrl, v.transpose() * pstar_i * v_inv_t))
        })
        .collect();
    let mut max_ctrl: f64 = 0.0;
    let mut base: Option<DMatrix<f64>> = None;
    let mut variation: f64 = 0.0;
    for r in per_point {
        let (ctrl, a) = r?;
        max_ctrl = max_ctrl.max(ctrl);
        match &base {
            None => base = Some(a),
            Some(b) => variation = variation.max((&a - b).amax()),
        }
    }
    Ok(Theorem62Report {
        flat_normal_bundle,
        max_control_derivative: max_ctrl,
        hamiltonian_ignores_control: max_ctrl <= tol,
        max_projection_variation: variation,
        projection_constant: variation <= tol,
        samples: points.len(),
    })
}

/// Derivative along `w ∈ Δ ∩ Γ` of `q ↦ g_q[h(v), h(v)]`.
pub fn leaf_metric_derivative(
    spec: &SystemSpec,
    q: &DVector<f64>,
    v: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<f64> {
    let proj = geometry::projection_set(spec, q)?;
    let residual = (&proj.p_i * w - w).amax();
    if residual > 1e-8 * w.amax().max(1.0) {
        return Err(Error::NotInDeltaCapGamma { residual });
    }
    let wn = w.amax();
    if wn == 0.0 || v.amax() == 0.0 {
        return Ok(0.0);
    }
    let energy = |x: &DVector<f64>| -> Result<f64> {
        let ps = geometry::projection_set(spec, x)?;
        let hv = ps.lift(v);
        Ok(hv.dot(&(&ps.g * &hv)))
    };
    let s = spec.fd_step * q.amax().max(1.0) / wn;
    Ok((energy(&(q + w * s))? - energy(&(q - w * s))?) / (2.0 * s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models;

    #[test]
    fn flat_toy_is_fit() {
        let m = models::euclidean_toy(2, 1).unwrap();
        let s = m.sampler(0);
        let r = psi_scan(&m.spec, &s, 40, DEFAULT_TOL);
        assert_eq!(r.verdict, Verdict::Fit);
        assert_eq!(r.max_psi_norm, 0.0);
        assert_eq!(theta_on_iii_scan(&m.spec, &s, 40, DEFAULT_TOL).verdict, Verdict::Fit);
        let t = theorem62_check(&m.spec, m.reference_frame.as_ref(), true, &s, 10, 1e-9).unwrap();
        assert!(t.all_hold());
    }

    #[test]
    fn report_display_names_verdict() {
        let m = models::euclidean_toy(1, 1).unwrap();
        let r = psi_scan(&m.spec, &m.sampler(1), 5, DEFAULT_TOL);
        let text = r.to_string();
        assert!(text.contains("verdict: fit"));
        assert!(text.contains("samples: 5"));
    }

    #[test]
    fn leaf_derivative_rejects_transverse_w() {
        let m = models::roller_racer(Default::default()).unwrap();
        let q = DVector::from_vec(vec![0.0, 0.3, 0.0, 0.2]);
        let w = DVector::from_vec(vec![0.0, 0.0, 0.0, 1.0]);
        let err = leaf_metric_derivative(&m.spec, &q, &DVector::from_element(1, 1.0), &w).unwrap_err();
        assert!(matches!(err, Error::NotInDeltaCapGamma { .. }));
        let w1 = models::RollerRacerParams::default().w1(0.3, 0.2);
        assert_eq!(leaf_metric_derivative(&m.spec, &q, &DVector::zeros(1), &w1).unwrap(), 0.0);
    }
}
