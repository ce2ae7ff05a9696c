//! Clip sampling and the self-supervised training loop.

pub mod config;
pub mod sampler;
pub mod trainer;

pub use config::{TrainConfig, TrainMode};
pub use sampler::{materialize, max_feasible_stride, sample_clip, ClipSpec, StridePolicy};
pub use trainer::{train, Corpus, RunPlan, TraceRow, TraceWriter};
