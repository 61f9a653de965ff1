pub mod de;
pub mod embedding;
pub mod error;
pub mod fixtures;
pub mod io;
pub mod kmeans;
pub mod loss;
pub mod metrics;
pub mod network;
pub mod pipeline;
pub mod raw;
pub mod synth;
pub mod text;

pub use error::{Error, Result};
