//! Training, checkpointing, evaluation and the experiment drivers.

pub mod checkpoint;
pub mod config;
pub mod evaluate;
pub mod experiments;
pub mod schedule;
pub mod trainer;

pub use checkpoint::{Checkpoint, CheckpointMeta, DevMetrics};
pub use config::{Fold, TrainConfig};
pub use evaluate::{evaluate, export_embeddings, infer, labels_path, EvalOptions, Inference};
pub use experiments::{run_ablation_suite, run_loto, run_training, AblationTable, LotoReport};
pub use schedule::Plateau;
pub use trainer::{train, EpochLog, StepInfo, TrainData, TrainOutcome};
