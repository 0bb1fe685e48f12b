//! Likelihood, metrics, the training loop, and exhaustive grid search.

mod grid;
mod loss;
mod metrics;
mod trainer;

pub use grid::{grid_search, rank, write_results, GridOptions, GridResult, GridSpec};
pub use loss::{nll_from_log_probabilities, nll_loss, record_nll};
pub use metrics::{
    argmax, evaluate, evaluate_report, f1_score, metrics_from_log_probabilities, F1Averaging,
    MetricsReport, SplitMetrics,
};
pub use trainer::{train, train_model, TrainAbort, TrainConfig, TrainError, TrainOutcome};
