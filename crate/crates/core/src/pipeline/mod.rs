//! Inference pipelines, latency benchmark and evaluation metrics.

pub mod bench;
pub mod cascade;
pub mod eval;
pub mod metrics;
pub mod prepare;

pub use bench::{
    benchmark, select_bench_scenes, speedup_percent, write_sweep_csv, BenchConfig, BenchImage, BenchReport, CostModel,
    PipelineKind, SWEEP_HEADER,
};
pub use cascade::{
    classify_patches, prediction_hash, run_pyrofocus, run_single_stage, CascadeConfig, PatchBatch, Planes, Routing,
    RoutingStats, RunOutput, StageTimes, Task,
};
pub use eval::{evaluate_classifier, evaluate_planes, frp_mean_baseline, scaled_batch};
pub use metrics::{confusion_matrix, masked_mae, miou, ConfusionMatrix, EvalMetrics, MaskedMae};
pub use prepare::{fire_patch_set, label_scene, patch_set, prepare, PrepareConfig, Prepared, SourceScene};
