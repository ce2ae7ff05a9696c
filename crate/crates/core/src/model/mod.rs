//! The asymmetric masked autoencoder, its masks, loss and checkpoints.

pub mod autoencoder;
pub mod block;
pub mod checkpoint;
pub mod config;
pub mod gradcheck;
pub mod mask;

pub use autoencoder::{masked_mse_grad, masked_mse_loss, Autoencoder, ForwardCache};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::{parameter_count, ModelConfig};
pub use mask::{random_mask, single_mask, MaskPlan};
