//! Splits, metrics and the six train/test scenarios.

pub mod metrics;
pub mod scenario;
pub mod split;

use thiserror::Error;

pub use metrics::{confusion_metrics, roc_auc, ClassMetrics, ConfusionCounts, ConfusionReport, MetricsReport};
pub use scenario::{run_scenario, ModelConfig, RunOptions, ScenarioSpec, Source};
pub use split::stratified_split;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("length mismatch: {0} labels vs {1} predictions")]
    LengthMismatch(usize, usize),
    #[error("AUC needs both classes present")]
    SingleClassData,
    #[error("non-finite score")]
    NonFiniteScore,
    #[error("recording {0} has segments with different labels")]
    MixedGroupLabels(String),
    #[error("unknown scenario id {0} (valid: 1-6)")]
    UnknownScenario(u8),
}
