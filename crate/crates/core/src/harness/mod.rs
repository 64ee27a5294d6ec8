//! Experiment orchestration: configs, training runs, evaluation, exports.

mod checkpoint;
mod config;
mod eval;
mod grid;
mod report;
mod train;

pub use checkpoint::{Checkpoint, TrainedAgent};
pub use config::{parse_config_text, Algorithm, EnvKind, ExperimentConfig};
pub use eval::{evaluate_arm, evaluate_maze, ArmPolicy, EvalOutcome, FnPolicy, MazePolicy};
pub use grid::{export_value_grid, value_grid_from_checkpoint, ValueGrid};
pub use report::{compare_report, mean_wall_ms, moving_average, parse_metrics_csv, Comparison, LabeledLog};
pub use train::{run_seeds, run_training, EvalRecord, MonitorPoint, TrainingOutcome, METRICS_HEADER};
