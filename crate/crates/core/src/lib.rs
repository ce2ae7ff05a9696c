//! Masked frame-feature autoencoder for unsupervised video summarization.
//!
//! A transformer autoencoder is trained to reconstruct randomly hidden frames
//! of CNN feature sequences. At inference each frame is hidden on its own,
//! reconstructed from its strided neighbourhood, and scored by how badly the
//! reconstruction matches it (cosine dissimilarity). The [`eval`] module holds
//! the rank-correlation and key-fragment F1 harness.

pub mod datastore;
pub mod error;
pub mod eval;
pub mod model;
pub mod numerics;
pub mod score;
pub mod synthetic;
pub mod train;

pub use error::{Error, Result};
