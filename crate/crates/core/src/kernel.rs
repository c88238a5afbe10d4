//! Gaussian kernel pooling over cosine similarities.
//!
//! Each kernel is a soft counting bin: an item whose similarity to the query
//! lies near the kernel mean contributes close to 1, distant items close to 0.
//! Summing per kernel and normalizing across kernels turns a similarity list
//! of any length into a fixed-size distribution.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector::cosine_many;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Kernel>", into = "Vec<Kernel>")]
pub struct KernelBank(Vec<Kernel>);

impl KernelBank {
    pub fn new(kernels: Vec<Kernel>) -> Result<Self> {
        if kernels.is_empty() {
            return Err(Error::Empty("kernel bank"));
        }
        for k in &kernels {
            if !(k.sigma > 0.0 && k.sigma.is_finite() && k.mu.is_finite()) {
                return Err(Error::config(
                    "kernels",
                    format!("kernel ({}, {}) needs finite mu and sigma > 0", k.mu, k.sigma),
                ));
            }
        }
        Ok(KernelBank(kernels))
    }

    /// 21 kernels with means -1.0, -0.9, ..., 1.0 and width 0.1, plus an
    /// exact-match kernel at 0.99 with width 0.01.
    pub fn default_bank() -> Self {
        let mut kernels: Vec<Kernel> = (-10..=10)
            .map(|i| Kernel {
                mu: f64::from(i) / 10.0,
                sigma: 0.1,
            })
            .collect();
        kernels.push(Kernel {
            mu: 0.99,
            sigma: 0.01,
        });
        KernelBank(kernels)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn kernels(&self) -> &[Kernel] {
        &self.0
    }

    /// Normalized soft counts of a similarity list.
    ///
    /// Normalization is done in log space so a bank far from every similarity
    /// still yields a distribution. Components are floored at the smallest
    /// normal `f64`, since `exp` underflows to zero for distant kernels.
    pub fn pool(&self, similarities: &[f64]) -> Result<KernelFeature> {
        if similarities.is_empty() {
            return Err(Error::Empty("environment"));
        }
        let log_raw: Vec<f64> = self
            .0
            .iter()
            .map(|k| {
                let denom = 2.0 * k.sigma * k.sigma;
                let exps: Vec<f64> = similarities.iter().map(|s| -(s - k.mu).powi(2) / denom).collect();
                log_sum_exp(&exps)
            })
            .collect();
        let log_total = log_sum_exp(&log_raw);
        let raw: Vec<f64> = log_raw
            .iter()
            .map(|l| (l - log_total).exp().max(f64::MIN_POSITIVE))
            .collect();
        Ok(KernelFeature(raw))
    }
}

impl Default for KernelBank {
    fn default() -> Self {
        KernelBank::default_bank()
    }
}

impl TryFrom<Vec<Kernel>> for KernelBank {
    type Error = Error;

    fn try_from(kernels: Vec<Kernel>) -> Result<Self> {
        KernelBank::new(kernels)
    }
}

impl From<KernelBank> for Vec<Kernel> {
    fn from(bank: KernelBank) -> Self {
        bank.0
    }
}

/// Text form used in config files: `mu:sigma` pairs separated by commas.
impl fmt::Display for KernelBank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, k) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}:{}", k.mu, k.sigma)?;
        }
        Ok(())
    }
}

impl FromStr for KernelBank {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let kernels = s
            .split(',')
            .map(|pair| {
                let (mu, sigma) = pair
                    .trim()
                    .split_once(':')
                    .ok_or_else(|| Error::config("kernels", format!("`{pair}` is not mu:sigma")))?;
                let parse = |v: &str| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::config("kernels", format!("`{v}`: {e}")))
                };
                Ok(Kernel {
                    mu: parse(mu)?,
                    sigma: parse(sigma)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        KernelBank::new(kernels)
    }
}

/// Normalized kernel-pooled similarity distribution, one entry per kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelFeature(Vec<f64>);

impl KernelFeature {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl AsRef<[f64]> for KernelFeature {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Kernel-pooled distribution of the query's cosine similarities to `env`.
pub fn kernel_feature<V: AsRef<[f64]>>(
    query: &[f64],
    env: &[V],
    bank: &KernelBank,
) -> Result<KernelFeature> {
    if env.is_empty() {
        return Err(Error::Empty("environment"));
    }
    for v in env {
        let v = v.as_ref();
        if v.len() != query.len() {
            return Err(Error::DimensionMismatch {
                expected: query.len(),
                got: v.len(),
            });
        }
    }
    if crate::vector::norm(query) == 0.0 || env.iter().any(|v| crate::vector::norm(v.as_ref()) == 0.0) {
        return Err(Error::ZeroNorm);
    }
    let sims = cosine_many(query, env.iter().map(AsRef::as_ref));
    bank.pool(&sims)
}
