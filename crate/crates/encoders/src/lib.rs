//! Transformer, convolutional VAE and bidirectional-LSTM VAE encoders.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod latents;
pub mod loss;
pub mod model;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::{EncoderConfig, EncoderKind};
pub use error::{EncoderError, Result};
pub use latents::LatentMatrix;
pub use loss::{reparameterize, vae_loss, VaeLoss};
pub use model::{build_model, TrainedModel};
pub use train::{extract_latents, fit, prepare_segments, train, TrainReport};
