//! Semi-supervised clustering of patients by learned one-to-many mappings
//! from a reference cohort, with training monitor, model selection,
//! consensus and a synthetic validation harness.

pub mod data;
pub mod diffnet;
pub mod model;
pub mod monitor;
pub mod numerics;
pub mod selection;

pub use data::{Group, RoiTable};
pub use model::{train, ArchitectureSpec, ModelError, SmileGanModel, TrainOutcome, TrainingConfig};
pub use monitor::{MonitorRecord, StopConfig};
pub use numerics::Matrix;
