//! End-to-end orchestration: configuration, synthetic pairs, the pipeline
//! itself, batch benchmarks with ablations, and PLY I/O.

pub mod benchmark;
pub mod config;
pub mod pipeline;
pub mod ply;
pub mod scene;
pub mod synth;

pub use benchmark::{
    aggregate, evaluate_pair, run_ablation, run_benchmark, AblationFlags, AblationReport, Aggregate, BenchmarkReport,
    PairRecord, SpecList, ABLATION_ROWS,
};
pub use config::{Matcher, PipelineConfig, CONFIG_KEYS};
pub use pipeline::{run_pipeline, PipelineOutput, StageTimings};
pub use ply::{read_point_cloud, write_correspondence_visualization, write_point_cloud, PlyFormat};
pub use scene::SceneKind;
pub use synth::{generate_pair, BaseCloud, SyntheticPair, SyntheticPairSpec};
