//! Neural graph clustering with learnable cluster centers.
//!
//! A one-layer graph convolutional encoder is pre-trained to tell real nodes from
//! corrupted ones, cluster centers are seeded with K-Means++ on the learned
//! embeddings, and encoder plus centers are then fine-tuned on mini-batches with a
//! dilation loss (push centers apart) and a shrink loss (pull samples toward the
//! centers). Inference assigns each node to its nearest center batch by batch.

pub mod bench;
pub mod clustering;
pub mod error;
pub mod graph;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod pipeline;

pub use error::{Error, Result};
