//! ROI tables, synthetic cohorts and preprocessing.

mod preprocess;
mod synth;
mod table;

pub use preprocess::{preprocess, PreprocessStats};
pub use synth::{
    generate_synthetic, inject_atrophy, AtrophyPattern, AtrophySpec, Confounder, GroundTruth, Rate,
    SyntheticCounts,
};
pub use table::{format_value, Covariates, Group, RoiTable};

use crate::numerics::NumericsError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DataError {
    #[error("I/O error: {0}")]
    Io(String),
    #[error("parse error at line {line}, column {column}")]
    Parse { line: usize, column: String },
    #[error("schema error: unexpected or missing column `{0}`")]
    Schema(String),
    #[error("invalid specification: {0}")]
    SpecInvalid(String),
    #[error("need at least 2 CN rows, found {0}")]
    InsufficientCn(usize),
    #[error("covariate residualization requested but the table has no age/sex columns")]
    MissingCovariates,
    #[error("ROI `{0}` has zero variance among CN rows")]
    DegenerateFeature(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

impl From<std::io::Error> for DataError {
    fn from(e: std::io::Error) -> Self {
        DataError::Io(e.to_string())
    }
}
