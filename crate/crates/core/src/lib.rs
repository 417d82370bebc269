//! Reduced dynamics of controlled non-holonomic systems.

pub mod control;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod jump;
pub mod linalg;
pub mod models;
pub mod sampling;
pub mod simulate;
pub mod system;

pub use control::{ControlKind, ControlSignal};
pub use dynamics::{CoefficientTensors, LocalTensors, ReducedState};
pub use error::{Error, Result};
pub use geometry::{projection_set, BlockRanges, Frame, FrameField, ProjectionSet};
pub use system::SystemSpec;
pub use simulate::{integrate, IntegratorConfig, RhsSelector, Trajectory};
