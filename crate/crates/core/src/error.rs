use thiserror::Error;

/// Everything that can go wrong while evaluating the geometry or integrating
/// the reduced equations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid system: {0}")]
    InvalidSpec(String),

    #[error("metric is not symmetric positive-definite (pivot {pivot:.3e}, scale {scale:.3e})")]
    SingularMetric { pivot: f64, scale: f64 },

    #[error("metric is not symmetric (asymmetry {asymmetry:.3e})")]
    AsymmetricMetric { asymmetry: f64 },

    #[error("transversality fails: constraint block has rank {rank}, expected {expected}")]
    Transversality { rank: usize, expected: usize },

    #[error("rank deficiency in {what}: expected rank {expected}, found {found}")]
    RankDeficiency {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("state is not adapted to the control: |q_ctrl - u(t)| = {deviation:.3e} at t = {t}")]
    NonAdaptedState { t: f64, deviation: f64 },

    #[error("frame field is not smooth at the sampled point (step-halving mismatch {mismatch:.3e})")]
    FrameNotSmooth { mismatch: f64 },

    #[error("frame does not match the decomposition: {0}")]
    FrameMismatch(String),

    #[error("point outside chart domain: {0}")]
    ChartDomain(String),

    #[error("singular denominator {0}")]
    SingularDenominator(&'static str),

    #[error("step rejected at t = {t}: {reason}")]
    StepRejected { t: f64, reason: String },

    #[error("tangent vector is not in Delta ∩ Gamma (|P_I w - w| = {residual:.3e})")]
    NotInDeltaCapGamma { residual: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
