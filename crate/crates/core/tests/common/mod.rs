#![allow(dead_code)]

pub mod checks;

use chrono::{Days, NaiveDate};
use nep::{Embedding, Label, NewsItem, Post};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn base_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2021, 3, 1).unwrap()
}

pub fn day(offset: u64) -> NaiveDate {
    base_date().checked_add_days(Days::new(offset)).unwrap()
}

pub fn gaussian<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut *rng)).collect();
        if v.iter().map(|x| x * x).sum::<f64>() > 1e-6 {
            return v;
        }
    }
}

pub fn news<R: Rng>(rng: &mut R, id: String, offset: u64, dim: usize) -> NewsItem {
    NewsItem {
        id,
        date: day(offset),
        embedding: Embedding::new(gaussian(rng, dim)).unwrap(),
        text: None,
    }
}

pub fn post<R: Rng>(rng: &mut R, id: String, offset: u64, dim: usize, label: Label) -> Post {
    Post {
        id,
        date: day(offset),
        embedding: Embedding::new(gaussian(rng, dim)).unwrap(),
        label: Some(label),
        text: None,
    }
}

/// Naive cosine similarity.
pub fn cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

pub fn mean(vs: &[&[f64]]) -> Vec<f64> {
    let mut m = vec![0.0; vs[0].len()];
    for v in vs {
        for (a, b) in m.iter_mut().zip(*v) {
            *a += b;
        }
    }
    m.iter().map(|x| x / vs.len() as f64).collect()
}

use nep::nn::{Activation, DenseLayer, Mlp};

/// Hand-rolled dense forward pass.
pub fn dense(layer: &DenseLayer, x: &[f64]) -> Vec<f64> {
    (0..layer.out_dim())
        .map(|o| {
            let mut z = layer.bias[o];
            for (i, xi) in x.iter().enumerate().take(layer.in_dim()) {
                z += layer.weight[o * layer.in_dim() + i] * xi;
            }
            match layer.activation {
                Activation::Relu => z.max(0.0),
                Activation::Linear => z,
                Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            }
        })
        .collect()
}

pub fn mlp(m: &Mlp, x: &[f64]) -> Vec<f64> {
    m.layers().iter().fold(x.to_vec(), |h, l| dense(l, &h))
}

pub fn cat(parts: &[&[f64]]) -> Vec<f64> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

/// Naive normalized Gaussian kernel pooling.
pub fn pool(query: &[f64], env: &[&[f64]], bank: &nep::KernelBank) -> Vec<f64> {
    let raw: Vec<f64> = bank
        .kernels()
        .iter()
        .map(|k| {
            env.iter()
                .map(|v| {
                    let s = cos(query, v);
                    (-(s - k.mu) * (s - k.mu) / (2.0 * k.sigma * k.sigma)).exp()
                })
                .sum()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|r| r / total).collect()
}

pub fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

use nep::config::RunConfig;
use nep::data::Corpus;
use nep::synth::SyntheticSpec;

/// Dimensions and schedule used for end-to-end synthetic runs.
pub fn synthetic_config(seed: u64) -> RunConfig {
    RunConfig {
        embed_dim: 32,
        env_dim: 32,
        detector_dim: 32,
        epochs: 30,
        seed,
        ..RunConfig::default()
    }
}

pub fn synthetic_corpus(spec: SyntheticSpec) -> Corpus {
    let c = spec.generate().unwrap();
    Corpus::new(c.news, c.posts).unwrap()
}
