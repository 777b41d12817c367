//! Training, the three experiment presets, metrics and reports.

pub mod evaluate;
pub mod metrics;
pub mod preset;
pub mod report;
pub mod run;
pub mod train;

pub use evaluate::{evaluate, Evaluation};
pub use metrics::{f1_score, macro_average, overlap_composition, CategoryMetrics, Counts, OverlapAnalysis, Score};
pub use preset::{Preset, PresetKind};
pub use run::{run_on, run_preset, RunOutcome};
pub use train::{train, validate, Labeled, TrainHistory, TrainingSet};
