//! Run configuration, read from TOML with dotted sections.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DVector;
use serde::Deserialize;

use nonholo::models::{self, ClosedForm, Model};
use nonholo::{ControlSignal, IntegratorConfig};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub model: ModelSection,
    pub control: Option<ControlSection>,
    pub integrator: Option<IntegratorSection>,
    pub initial: Option<InitialSection>,
    #[serde(default)]
    pub scan: ScanSection,
    #[serde(default)]
    pub oracle: OracleSection,
    pub vibrate: Option<VibrateSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    /// `literal` or `corrected`; used by oracle-compare and vibrate.
    #[serde(default = "default_closed_form")]
    pub closed_form: String,
    /// Relative perturbation of the Roller Racer metric (negative control).
    #[serde(default)]
    pub corrupt_metric: f64,
}

fn default_closed_form() -> String {
    "literal".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ControlSection {
    Constant {
        values: Vec<f64>,
    },
    Polynomial {
        /// One row per power of `t`.
        coefficients: Vec<Vec<f64>>,
    },
    Sinusoid {
        ubar: Vec<f64>,
        k: Vec<f64>,
        eps: f64,
    },
    Ramp {
        from: Vec<f64>,
        to: Vec<f64>,
        #[serde(default)]
        start: f64,
        duration: f64,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    pub dt: f64,
    #[serde(default)]
    pub t0: f64,
    pub t1: f64,
    #[serde(default = "default_rhs")]
    pub rhs: String,
    #[serde(default = "yes")]
    pub reproject: bool,
    #[serde(default = "one")]
    pub stride: usize,
}

fn default_rhs() -> String {
    "ambient".into()
}

fn yes() -> bool {
    true
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    /// Either all coordinates or only the free ones; controlled coordinates
    /// are then taken from `u(t0)`.
    pub q: Vec<f64>,
    /// Ambient `p_I`.
    pub p_i: Option<Vec<f64>>,
    /// Block-I frame components of `p_I`.
    pub xi: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    #[serde(default = "scan_samples")]
    pub samples: usize,
    #[serde(default = "scan_tol")]
    pub tol: f64,
}

fn scan_samples() -> usize {
    500
}

fn scan_tol() -> f64 {
    nonholo::jump::DEFAULT_TOL
}

impl Default for ScanSection {
    fn default() -> Self {
        Self {
            samples: scan_samples(),
            tol: scan_tol(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    #[serde(default = "oracle_samples")]
    pub samples: usize,
    #[serde(default = "oracle_tol")]
    pub tol: f64,
}

fn oracle_samples() -> usize {
    100
}

fn oracle_tol() -> f64 {
    1e-5
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            samples: oracle_samples(),
            tol: oracle_tol(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VibrateSection {
    pub ubar: Vec<f64>,
    pub k: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub t_final: f64,
    /// `(q¹, q², q³, ξ)`.
    pub x0: Vec<f64>,
    #[serde(default = "eps_fraction")]
    pub eps_fraction: f64,
    #[serde(default = "min_steps")]
    pub min_steps_per_period: usize,
}

fn eps_fraction() -> f64 {
    1.0 / 50.0
}

fn min_steps() -> usize {
    20
}

pub fn load(path: &Path) -> Result<RunConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    parse(&text).map_err(|e| format!("{}: {e}", path.display()))
}

pub fn parse(text: &str) -> Result<RunConfig, String> {
    toml::from_str(text).map_err(|e| e.to_string())
}

impl RunConfig {
    pub fn build_model(&self) -> Result<Model, String> {
        models::by_name(&self.model.name, &self.model.params).map_err(|e| format!("model: {e}"))
    }

    pub fn closed_form(&self) -> Result<ClosedForm, String> {
        ClosedForm::parse(&self.model.closed_form).ok_or_else(|| {
            format!(
                "model.closed_form: expected `literal` or `corrected`, got `{}`",
                self.model.closed_form
            )
        })
    }

    pub fn control(&self) -> Result<ControlSignal, String> {
        let section = self.control.as_ref().ok_or("missing section `control`")?;
        let vec = |v: &[f64]| DVector::from_column_slice(v);
        let signal = match section {
            ControlSection::Constant { values } => ControlSignal::Constant(vec(values)),
            ControlSection::Polynomial { coefficients } => {
                ControlSignal::Polynomial(coefficients.iter().map(|c| vec(c)).collect())
            }
            ControlSection::Sinusoid { ubar, k, eps } => ControlSignal::sinusoid(ubar, k, *eps),
            ControlSection::Ramp {
                from,
                to,
                start,
                duration,
            } => ControlSignal::ramp(from, to, *start, *duration),
        };
        signal.validate().map_err(|e| format!("control: {e}"))?;
        Ok(signal)
    }

    pub fn integrator(&self) -> Result<(IntegratorConfig, bool), String> {
        let s = self.integrator.as_ref().ok_or("missing section `integrator`")?;
        let frame = match s.rhs.as_str() {
            "ambient" => false,
            "frame" => true,
            other => return Err(format!("integrator.rhs: expected `ambient` or `frame`, got `{other}`")),
        };
        let cfg = IntegratorConfig {
            dt: s.dt,
            t0: s.t0,
            t1: s.t1,
            reproject_each_step: s.reproject,
            diagnostics_stride: s.stride,
        };
        cfg.validate().map_err(|e| format!("integrator: {e}"))?;
        Ok((cfg, frame))
    }

    pub fn vibrate(&self) -> Result<&VibrateSection, String> {
        let v = self.vibrate.as_ref().ok_or("missing section `vibrate`")?;
        if v.x0.len() != 4 {
            return Err(format!("vibrate.x0: expected 4 entries (q1, q2, q3, xi), got {}", v.x0.len()));
        }
        if v.epsilons.is_empty() {
            return Err("vibrate.epsilons: empty list".into());
        }
        Ok(v)
    }
}
