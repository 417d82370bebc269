//! Built-in systems and a registry keyed by name.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::geometry::FrameField;
use crate::sampling::BoxSampler;
use crate::system::SystemSpec;

pub mod euclidean;
pub mod roller_racer;
pub mod rolling_ball;

pub use euclidean::CoordinateFrame;
pub use roller_racer::{ClosedForm, RollerRacerParams};
pub use rolling_ball::RollingBallParams;

pub const MODEL_NAMES: [&str; 4] = ["roller-racer", "rolling-ball", "euclidean-toy", "roller-racer-flat"];

/// Parameters of a built-in model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelParams {
    RollerRacer(RollerRacerParams),
    RollingBall(RollingBallParams),
    Euclidean { n_free: usize, n_control: usize },
}

/// A system together with the data the analyses need: a smooth adapted
/// frame, the reference frame for the constancy test on `P*_I`, the declared
/// flatness of Δ^⊥ and a default sampling box.
#[derive(Clone)]
pub struct Model {
    pub name: &'static str,
    pub params: ModelParams,
    pub spec: SystemSpec,
    pub frame: Option<Arc<dyn FrameField>>,
    pub reference_frame: Arc<dyn FrameField>,
    /// Zero curvature of Δ^⊥, declared rather than computed.
    pub flat_normal_bundle: bool,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    pub pinned: Vec<DVector<f64>>,
}

impl std::fmt::Debug for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Model")
            .field("name", &self.name)
            .field("params", &self.params)
            .field("has_frame", &self.frame.is_some())
            .finish()
    }
}

impl Model {
    pub fn sampler(&self, seed: u64) -> BoxSampler {
        BoxSampler::new(self.lower.clone(), self.upper.clone(), seed).with_pinned(self.pinned.clone())
    }
}

fn take(params: &mut BTreeMap<String, f64>, key: &str, default: f64) -> f64 {
    params.remove(key).unwrap_or(default)
}

fn finish(model: &str, params: BTreeMap<String, f64>) -> Result<()> {
    match params.keys().next() {
        Some(k) => Err(Error::InvalidSpec(format!("unknown parameter `{k}` for model {model}"))),
        None => Ok(()),
    }
}

pub fn roller_racer(params: RollerRacerParams) -> Result<Model> {
    let spec = roller_racer::spec(params)?;
    Ok(Model {
        name: "roller-racer",
        params: ModelParams::RollerRacer(params),
        reference_frame: Arc::new(CoordinateFrame { spec: spec.clone() }),
        spec,
        frame: Some(Arc::new(roller_racer::ClosedFormFrame { params })),
        flat_normal_bundle: false,
        lower: DVector::from_vec(vec![-2.0, -PI, -2.0, -1.2]),
        upper: DVector::from_vec(vec![2.0, PI, 2.0, 1.2]),
        pinned: vec![
            DVector::from_vec(vec![0.0, 0.3, 0.0, 0.0]),
            DVector::from_vec(vec![1.0, -1.2, 0.5, 0.0]),
        ],
    })
}

pub fn roller_racer_flat(params: RollerRacerParams) -> Result<Model> {
    let spec = roller_racer::flat_spec(params)?;
    Ok(Model {
        name: "roller-racer-flat",
        params: ModelParams::RollerRacer(params),
        reference_frame: Arc::new(CoordinateFrame { spec: spec.clone() }),
        spec,
        frame: None,
        flat_normal_bundle: true,
        lower: DVector::from_vec(vec![-2.0, -PI, -2.0, -1.2]),
        upper: DVector::from_vec(vec![2.0, PI, 2.0, 1.2]),
        pinned: vec![DVector::from_vec(vec![0.0, 0.3, 0.0, 0.0])],
    })
}

pub fn rolling_ball(params: RollingBallParams) -> Result<Model> {
    let spec = rolling_ball::spec(params)?;
    Ok(Model {
        name: "rolling-ball",
        params: ModelParams::RollingBall(params),
        spec,
        frame: Some(Arc::new(rolling_ball::AdaptedFrame::new(params)?)),
        reference_frame: Arc::new(rolling_ball::OrthonormalFrame { params }),
        flat_normal_bundle: true,
        // θ stays clear of the gimbal locus sin θ = 0.
        lower: DVector::from_vec(vec![-PI, 0.3, -PI, -2.0, -2.0, -PI]),
        upper: DVector::from_vec(vec![PI, PI - 0.3, PI, 2.0, 2.0, PI]),
        pinned: Vec::new(),
    })
}

pub fn euclidean_toy(n_free: usize, n_control: usize) -> Result<Model> {
    let spec = euclidean::spec(n_free, n_control)?;
    let frame: Arc<dyn FrameField> = Arc::new(CoordinateFrame { spec: spec.clone() });
    let d = n_free + n_control;
    Ok(Model {
        name: "euclidean-toy",
        params: ModelParams::Euclidean { n_free, n_control },
        spec,
        frame: Some(frame.clone()),
        reference_frame: frame,
        flat_normal_bundle: true,
        lower: DVector::from_element(d, -1.0),
        upper: DVector::from_element(d, 1.0),
        pinned: Vec::new(),
    })
}

/// Looks a model up by name, consuming its parameters from `params`;
/// unknown parameter names are rejected.
pub fn by_name(name: &str, params: &BTreeMap<String, f64>) -> Result<Model> {
    let mut p = params.clone();
    let model = match name {
        "roller-racer" | "roller-racer-flat" => {
            let d = RollerRacerParams::default();
            let rr = RollerRacerParams {
                rho: take(&mut p, "rho", d.rho),
                i_big: take(&mut p, "i_big", d.i_big),
                j_small: take(&mut p, "j_small", d.j_small),
            };
            if name == "roller-racer" {
                roller_racer(rr)?
            } else {
                roller_racer_flat(rr)?
            }
        }
        "rolling-ball" => {
            let d = RollingBallParams::default();
            rolling_ball(RollingBallParams {
                r: take(&mut p, "r", d.r),
                kappa2: take(&mut p, "kappa2", d.kappa2),
            })?
        }
        "euclidean-toy" => {
            let count = |v: f64, key: &str| -> Result<usize> {
                if v >= 1.0 && v.fract() == 0.0 {
                    Ok(v as usize)
                } else {
                    Err(Error::InvalidSpec(format!("{key} must be a positive integer, got {v}")))
                }
            };
            let n = count(take(&mut p, "n_free", 2.0), "n_free")?;
            let m = count(take(&mut p, "n_control", 1.0), "n_control")?;
            euclidean_toy(n, m)?
        }
        other => {
            return Err(Error::InvalidSpec(format!(
                "unknown model `{other}` (known: {})",
                MODEL_NAMES.join(", ")
            )))
        }
    };
    finish(name, p)?;
    Ok(model)
}
