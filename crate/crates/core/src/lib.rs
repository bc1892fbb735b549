//! Semantics-conditioned feature generation for point cloud segmentation.
//!
//! A conditional WGAN-GP learns per-class feature distributions from frozen
//! backbone features, conditioned on class-name embeddings. Pseudo-features
//! sampled from it train a classifier for seen classes, unseen classes, or
//! both. Feature-space mixup between neighbouring classes augments the GAN
//! training set.

pub mod adam;
pub mod classifier;
pub mod condgan;
pub mod config;
pub mod data;
pub mod error;
pub mod fsio;
pub mod graph;
pub mod metrics;
pub mod mixup;
pub mod mlp;
pub mod pipeline;
pub mod rng;
pub mod scalar;
pub mod synthbench;
pub mod tensor;

pub use adam::AdamState;
pub use error::{Error, Result};
pub use graph::{Graph, NodeId};
pub use mlp::{Activation, MlpParams};
pub use rng::SeededRng;
pub use scalar::Scalar;
pub use tensor::Tensor;

pub type Tensor64 = Tensor<f64>;
pub type Tensor32 = Tensor<f32>;
pub type Graph64 = Graph<f64>;
pub type Mlp64 = MlpParams<f64>;
