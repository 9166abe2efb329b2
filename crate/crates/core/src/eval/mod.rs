//! Transfer evaluation: metrics, linear probing, fine-tuning, ablations.

mod ablation;
pub mod metrics;
mod probe;
mod report;

pub use ablation::{feature_ablation_study, AblationRow, AblationTable, RANDOM_INIT};
pub use metrics::{
    average_precision, metric_f1, metric_map, metric_miou, metric_oa_aa, threshold, AccuracyReport, F1Report,
    MapReport, SegmentationReport,
};
pub use probe::{
    evaluate, fine_tune, label_targets, linear_probe, linear_probe_train, load_labeled, patch_segmentation_probe,
    pooled_features, train_linear, FineTuneOutcome, LabeledData, LinearClassifier, ProbeConfig, ProbeOutcome,
};
pub use report::{MetricsReport, TaskKind};
