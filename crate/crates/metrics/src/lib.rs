//! Segmentation evaluation metrics.
//!
//! Region metrics (Dice, mean pixel accuracy, mean IoU) come from one-vs-rest
//! confusion counts; the Hausdorff distance is the symmetric max-min
//! Euclidean distance between the full pixel sets of a class. Macro
//! aggregation policy is explicit and carried in every report.

mod confusion;
mod hausdorff;
mod report;

pub use confusion::{confusion, dice, miou, mpa, ClassCounts, ConfusionCounts};
pub use hausdorff::{directed_hausdorff, hausdorff, point_set, PointSet};
pub use report::{evaluate, AggregationPolicy, ClassMetrics, ClassSelection, MetricsReport};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("mask shapes differ: {0} vs {1} pixels")]
    ShapeMismatch(usize, usize),

    #[error("label {label} out of range for {classes} classes")]
    InvalidLabel { label: usize, classes: usize },

    #[error("directed Hausdorff distance needs non-empty sets")]
    EmptySet,
}

pub type Result<T> = std::result::Result<T, MetricsError>;
