//! Flat toy: Euclidean metric, no constraint forms.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::geometry::{BlockRanges, Frame, FrameField};
use crate::system::SystemSpec;

pub fn spec(n_free: usize, n_control: usize) -> Result<SystemSpec> {
    let d = n_free + n_control;
    SystemSpec::new(
        "euclidean-toy",
        n_free,
        n_control,
        0,
        Arc::new(move |_| DMatrix::identity(d, d)),
        Arc::new(move |_| DMatrix::zeros(0, d)),
    )
}

/// Coordinate frame `∂/∂q¹ .. ∂/∂q^{N+M}` with blocks read off `spec`.
///
/// Block-adapted only when the constraints do not involve the free
/// coordinates, e.g. for the flat toy.
#[derive(Debug, Clone)]
pub struct CoordinateFrame {
    pub spec: SystemSpec,
}

impl FrameField for CoordinateFrame {
    fn frame_at(&self, q: &DVector<f64>) -> Result<Frame> {
        let g = self.spec.metric(q)?;
        let (i, ii, iii) = self.spec.block_dims();
        let n = self.spec.dim();
        Frame::new(DMatrix::identity(n, n), &g, BlockRanges::from_dims(i, ii, iii))
    }
}
