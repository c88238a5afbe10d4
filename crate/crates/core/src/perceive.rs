//! Popularity perception over the macro environment and novelty perception
//! over the micro environment.
//!
//! Embeddings are frozen, so everything up to the MLP inputs (centers and
//! kernel features) is computed once per post as [`EnvFeatures`] and reused
//! across epochs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{kernel_feature, KernelBank};
use crate::nn::Mlp;
use crate::vector::mean_vector;

/// Frozen per-post inputs to the perception heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvFeatures {
    pub post: Vec<f64>,
    pub macro_center: Vec<f64>,
    /// Post-to-macro similarity distribution.
    pub macro_kernel: Vec<f64>,
    pub micro_center: Vec<f64>,
    /// Post-to-micro similarity distribution.
    pub micro_kernel_post: Vec<f64>,
    /// Micro-center-to-micro similarity distribution, the calibration reference.
    pub micro_kernel_center: Vec<f64>,
    pub macro_size: usize,
    pub micro_size: usize,
}

impl EnvFeatures {
    pub fn compute<V: AsRef<[f64]>>(
        post: &[f64],
        macro_vectors: &[V],
        micro_vectors: &[V],
        bank: &KernelBank,
    ) -> Result<Self> {
        if macro_vectors.is_empty() {
            return Err(Error::Empty("macro environment"));
        }
        if micro_vectors.is_empty() {
            return Err(Error::Empty("micro environment"));
        }
        let macro_center = mean_vector(macro_vectors)?;
        let macro_kernel = kernel_feature(post, macro_vectors, bank)?.into_inner();
        let micro_center = mean_vector(micro_vectors)?;
        let micro_kernel_post = kernel_feature(post, micro_vectors, bank)?.into_inner();
        let micro_kernel_center = kernel_feature(&micro_center, micro_vectors, bank)?.into_inner();
        Ok(EnvFeatures {
            post: post.to_vec(),
            macro_center,
            macro_kernel,
            micro_center,
            micro_kernel_post,
            micro_kernel_center,
            macro_size: macro_vectors.len(),
            micro_size: micro_vectors.len(),
        })
    }

    /// `p ⊕ m(macro) ⊕ K(p, macro)`
    pub fn macro_input(&self) -> Vec<f64> {
        concat(&[&self.post, &self.macro_center, &self.macro_kernel])
    }

    /// `p ⊕ m(micro)`
    pub fn semantic_input(&self) -> Vec<f64> {
        concat(&[&self.post, &self.micro_center])
    }

    /// `g(K(p, micro), K(m(micro), micro))`
    pub fn similarity_input(&self) -> Vec<f64> {
        // lengths agree by construction
        compare_g(&self.micro_kernel_post, &self.micro_kernel_center)
            .expect("kernel features share the bank length")
    }
}

pub(crate) fn concat(parts: &[&[f64]]) -> Vec<f64> {
    let mut out = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
    for p in parts {
        out.extend_from_slice(p);
    }
    out
}

/// Comparison function `(x ⊙ y) ⊕ (x − y)`.
pub fn compare_g(x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let mut out = Vec::with_capacity(2 * x.len());
    out.extend(x.iter().zip(y).map(|(a, b)| a * b));
    out.extend(x.iter().zip(y).map(|(a, b)| a - b));
    Ok(out)
}

/// The four individually parameterized perception MLPs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceptionHeads {
    /// `2d + C → d_env`
    pub macro_head: Mlp,
    /// `2d → d_env`
    pub semantic: Mlp,
    /// `2C → d_env`
    pub similarity: Mlp,
    /// `2·d_env → d_env`
    pub combiner: Mlp,
}

impl PerceptionHeads {
    pub fn new<R: Rng + ?Sized>(embed_dim: usize, kernels: usize, env_dim: usize, rng: &mut R) -> Self {
        PerceptionHeads {
            macro_head: Mlp::with_hidden(2 * embed_dim + kernels, env_dim, env_dim, rng),
            semantic: Mlp::with_hidden(2 * embed_dim, env_dim, env_dim, rng),
            similarity: Mlp::with_hidden(2 * kernels, env_dim, env_dim, rng),
            combiner: Mlp::with_hidden(2 * env_dim, env_dim, env_dim, rng),
        }
    }

    /// Single linear identity layers; each head passes through the first
    /// `env_dim` components of its input.
    pub fn identity(embed_dim: usize, kernels: usize, env_dim: usize) -> Self {
        PerceptionHeads {
            macro_head: Mlp::identity(2 * embed_dim + kernels, env_dim),
            semantic: Mlp::identity(2 * embed_dim, env_dim),
            similarity: Mlp::identity(2 * kernels, env_dim),
            combiner: Mlp::identity(2 * env_dim, env_dim),
        }
    }

    pub fn env_dim(&self) -> usize {
        self.macro_head.out_dim()
    }

    pub fn macro_vector(&self, features: &EnvFeatures) -> Result<Vec<f64>> {
        self.macro_head.forward(&features.macro_input())
    }

    pub fn micro_vector(&self, features: &EnvFeatures) -> Result<Vec<f64>> {
        let sem = self.semantic.forward(&features.semantic_input())?;
        let sim = self.similarity.forward(&features.similarity_input())?;
        self.combiner.forward(&concat(&[&sem, &sim]))
    }

    pub fn mlps(&self) -> [&Mlp; 4] {
        [&self.macro_head, &self.semantic, &self.similarity, &self.combiner]
    }

    pub fn mlps_mut(&mut self) -> [&mut Mlp; 4] {
        [
            &mut self.macro_head,
            &mut self.semantic,
            &mut self.similarity,
            &mut self.combiner,
        ]
    }

    pub fn zeros_like(&self) -> Self {
        PerceptionHeads {
            macro_head: self.macro_head.zeros_like(),
            semantic: self.semantic.zeros_like(),
            similarity: self.similarity.zeros_like(),
            combiner: self.combiner.zeros_like(),
        }
    }
}

/// Macro-perceived popularity vector.
pub fn perceive_macro<V: AsRef<[f64]>>(
    post: &[f64],
    macro_vectors: &[V],
    bank: &KernelBank,
    heads: &PerceptionHeads,
) -> Result<Vec<f64>> {
    if macro_vectors.is_empty() {
        return Err(Error::Empty("macro environment"));
    }
    let center = mean_vector(macro_vectors)?;
    let kernel = kernel_feature(post, macro_vectors, bank)?;
    heads
        .macro_head
        .forward(&concat(&[post, &center, kernel.as_slice()]))
}

/// Micro-perceived novelty vector.
pub fn perceive_micro<V: AsRef<[f64]>>(
    post: &[f64],
    micro_vectors: &[V],
    bank: &KernelBank,
    heads: &PerceptionHeads,
) -> Result<Vec<f64>> {
    if micro_vectors.is_empty() {
        return Err(Error::Empty("micro environment"));
    }
    let center = mean_vector(micro_vectors)?;
    let sem = heads.semantic.forward(&concat(&[post, &center]))?;
    let k_post = kernel_feature(post, micro_vectors, bank)?;
    let k_center = kernel_feature(&center, micro_vectors, bank)?;
    let sim = heads
        .similarity
        .forward(&compare_g(k_post.as_slice(), k_center.as_slice())?)?;
    heads.combiner.forward(&concat(&[&sem, &sim]))
}
