//! Deterministic text featurization.
//!
//! [`Featurizer`] folds character n-gram counts into a fixed number of
//! buckets with signed feature hashing. Any other encoder can be plugged into
//! the pipeline by implementing [`TextEncoder`].

use std::ops::Deref;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stable_hash;

/// A dense text representation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Embedding(pub Vec<f64>);

impl Embedding {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn cosine(&self, other: &Embedding) -> f64 {
        cosine(&self.0, &other.0)
    }
}

impl Deref for Embedding {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

pub(crate) fn l2_normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Anything that maps text to a fixed-length real vector, purely.
pub trait TextEncoder: Send + Sync {
    fn dim(&self) -> usize;

    fn encode(&self, text: &str) -> Embedding;

    fn encode_batch(&self, texts: &[&str]) -> Vec<Embedding> {
        texts.par_iter().map(|t| self.encode(t)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Featurizer {
    pub dim: usize,
    pub ngram_lo: usize,
    pub ngram_hi: usize,
    pub hash_seed: u64,
    pub normalize: bool,
}

impl Default for Featurizer {
    fn default() -> Self {
        Self {
            dim: 512,
            ngram_lo: 2,
            ngram_hi: 4,
            hash_seed: 0,
            normalize: true,
        }
    }
}

impl Featurizer {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 8 {
            return Err(Error::Config(format!("featurizer dim must be >= 8, got {}", self.dim)));
        }
        if self.ngram_lo == 0 || self.ngram_lo > self.ngram_hi {
            return Err(Error::Config(format!(
                "invalid n-gram range ({}, {})",
                self.ngram_lo, self.ngram_hi
            )));
        }
        Ok(())
    }

    /// Lowercased, whitespace-collapsed text wrapped in boundary spaces.
    fn prepare(text: &str) -> Vec<char> {
        let mut out = vec![' '];
        for word in text.split_whitespace() {
            out.extend(word.chars().flat_map(char::to_lowercase));
            out.push(' ');
        }
        out
    }

    /// Raw signed bucket counts.
    pub fn counts(&self, text: &str) -> Vec<f64> {
        let chars = Self::prepare(text);
        let mut v = vec![0.0; self.dim];
        let mut gram = String::new();
        for n in self.ngram_lo..=self.ngram_hi {
            if chars.len() < n {
                break;
            }
            for window in chars.windows(n) {
                gram.clear();
                gram.extend(window);
                let h = stable_hash(self.hash_seed, &gram);
                let bucket = ((h >> 1) % self.dim as u64) as usize;
                v[bucket] += if h & 1 == 0 { 1.0 } else { -1.0 };
            }
        }
        v
    }
}

impl TextEncoder for Featurizer {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Embedding {
        let mut v = self.counts(text);
        if self.normalize {
            l2_normalize(&mut v);
        }
        Embedding(v)
    }
}
