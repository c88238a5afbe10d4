//! News environment perception for fake news detection.
//!
//! Each post is placed in the stream of mainstream news published shortly
//! before it. A macro environment (every item in the last `T` days) yields a
//! popularity signal, a micro environment (the items most similar to the post)
//! yields a novelty signal, and both are gated into a base detector's
//! representation before classification.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod env;
pub mod error;
pub mod kernel;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod perceive;
pub mod report;
pub mod synth;
pub mod train;
pub mod vector;

pub use env::{EnvIndex, MacroEnv, MicroEnv};
pub use error::{Error, Result};
pub use kernel::{kernel_feature, KernelBank, KernelFeature};
pub use model::{AblationMode, NepModel};
pub use vector::{cosine_similarity, mean_vector, Embedding, Label, NewsItem, Post};
