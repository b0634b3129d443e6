//! Typed tabular data: schema, columnar table, dummy encoding,
//! standardization and stratified splitting.

mod design;
mod schema;
mod split;
mod table;

pub use design::{encode_design, ColumnOrigin, DesignEncoder, DesignMatrix, EncodedFeature, Standardization};
pub use schema::{ColumnSpec, FeatureSchema, Role};
pub use split::{make_fold_plan, make_folds, split_indices, stratified_split, FoldPlan};
pub use table::{Column, DataTable};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing column {0}")]
    MissingColumn(String),
    #[error("row {row}, column {column}: level {value:?} is not declared")]
    LevelViolation { row: usize, column: String, value: String },
    #[error("row {row}: non-binary target value {value:?}")]
    NonBinaryTarget { row: usize, value: String },
    #[error("column {column}: length {found}, expected {expected}")]
    LengthMismatch { column: String, expected: usize, found: usize },
    #[error("row {row}, column {column}: cannot parse {value:?}")]
    Parse { row: usize, column: String, value: String },
    #[error("row {row}, column {column}: missing value (impute first)")]
    MissingValues { column: String, row: usize },
    #[error("schema: {0}")]
    Schema(String),
    #[error("target needs both classes, found {positives} positives in {rows} rows")]
    SingleClass { positives: usize, rows: usize },
    #[error("test fraction {0} must lie strictly between 0 and 1 and leave both partitions non-empty")]
    InvalidFraction(f64),
    #[error("fold count {k} out of range for {rows} rows")]
    FoldCount { k: usize, rows: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
