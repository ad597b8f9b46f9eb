//! Precision, recall and F1 over positive relation classes, bootstrap
//! intervals and distance-binned F1.

mod bootstrap;
mod curve;
mod metrics;
mod records;
mod report;

pub use bootstrap::{bootstrap_ci, bootstrap_many, CiConfig};
pub use curve::{distance_curve, CurveConfig, CurvePoint, DistanceCurve, Truncation};
pub use metrics::{accuracy, micro_f1, per_class_and_category, CategoryRow, ClassRow, Prf};
pub use records::{read_predictions, write_predictions, PredictionRecord};
pub use report::{
    build_report, CategoryScores, ClassScores, EvalReport, Metric, ReportOptions, Scores,
};
