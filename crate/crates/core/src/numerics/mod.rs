//! Dense kernels, differentiable layers, initialization, AdamW and the
//! learning-rate schedule.

pub mod attention;
pub mod gradcheck;
pub mod init;
pub mod layers;
pub mod optim;
pub mod posenc;
pub mod real;
pub mod rng;
pub mod schedule;
pub mod tensor;

pub use attention::{multi_head_attention, MultiHeadAttention};
pub use init::{xavier_bound, xavier_uniform_init};
pub use layers::{gelu, layer_norm, linear, LayerNorm, Linear, Mlp, ParamFactory};
pub use optim::{adamw_step, AdamW, GradStore, Parameter};
pub use posenc::sinusoidal_positional_embedding;
pub use real::Real;
pub use rng::{SeedStream, StreamRng};
pub use schedule::LrSchedule;
pub use tensor::Tensor;
