//! Siamese BLSTM with attention pooling and a feed-forward similarity head.

pub mod adam;
pub mod attention;
pub mod checkpoint;
pub mod head;
pub mod linalg;
pub mod lstm;
pub mod model;
pub mod params;

#[cfg(test)]
pub(crate) mod oracle;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use model::{gradient_vector, model_backward, model_forward, predict, ForwardCache};
pub use params::{flatten, unflatten, Branch, Manifest, ModelParams, ModelShape, ParamVector};
