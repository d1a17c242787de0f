use serde::{Deserialize, Serialize};

use crate::embed::{cosine, Embedding, Featurizer, TextEncoder};
use crate::error::{Error, Result};
use crate::math::{argmax, softmax};
use crate::train::linear::SoftmaxHead;
use crate::train::regime::{Method, RegimeDecision};

/// Row-major single-precision matrix. Products are accumulated in `f64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub(crate) fn from_f64(rows: usize, cols: usize, data: &[f64]) -> Self {
        Self {
            rows,
            cols,
            data: data.iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self { rows: n, cols: n, data }
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        self.data
            .chunks_exact(self.cols)
            .map(|row| {
                row.iter()
                    .zip(x)
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(w, v)| f64::from(*w) * v)
                    .sum()
            })
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Class descriptions and their projected embeddings, one per label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Anchors {
    pub descriptions: Vec<String>,
    pub embeddings: Matrix,
    /// Minimum cosine lead of the nearest anchor for it to decide the label.
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub label: usize,
    pub confidence: f64,
    pub logits: Vec<f64>,
    /// Inputs to the head (projected embedding when a projection exists).
    pub features: Vec<f64>,
}

/// A trained text classifier. All parameters are single precision so that a
/// saved bundle reproduces in-memory predictions exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct Classifier {
    pub(crate) labels: Vec<String>,
    pub(crate) featurizer: Featurizer,
    pub(crate) projection: Option<Matrix>,
    pub(crate) weights: Matrix,
    pub(crate) bias: Vec<f32>,
    pub(crate) anchors: Option<Anchors>,
    pub(crate) trained_with: RegimeDecision,
}

impl Classifier {
    pub fn from_parts(
        labels: Vec<String>,
        featurizer: Featurizer,
        projection: Option<Matrix>,
        weights: Matrix,
        bias: Vec<f32>,
        anchors: Option<Anchors>,
        trained_with: RegimeDecision,
    ) -> Result<Self> {
        let k = labels.len();
        let mut seen = std::collections::BTreeSet::new();
        if !labels.iter().all(|l| seen.insert(l)) {
            return Err(Error::Integrity("duplicate label in label map".into()));
        }
        let in_dim = featurizer.dim;
        let head_dim = match &projection {
            Some(p) if p.cols != in_dim => {
                return Err(Error::DimensionMismatch { expected: in_dim, actual: p.cols })
            }
            Some(p) => p.rows,
            None => in_dim,
        };
        if weights.rows != k || weights.cols != head_dim {
            return Err(Error::DimensionMismatch {
                expected: k * head_dim,
                actual: weights.rows * weights.cols,
            });
        }
        if bias.len() != k {
            return Err(Error::DimensionMismatch { expected: k, actual: bias.len() });
        }
        if let Some(a) = &anchors {
            if a.embeddings.rows != k || a.embeddings.cols != head_dim || a.descriptions.len() != k {
                return Err(Error::Integrity("anchor block does not match label map".into()));
            }
        }
        if !weights.is_finite() || !bias.iter().all(|b| b.is_finite()) {
            return Err(Error::Integrity("non-finite weights".into()));
        }
        Ok(Self {
            labels,
            featurizer,
            projection,
            weights,
            bias,
            anchors,
            trained_with,
        })
    }

    pub(crate) fn from_head(
        labels: Vec<String>,
        featurizer: Featurizer,
        projection: Option<Matrix>,
        head: &SoftmaxHead,
        anchors: Option<Anchors>,
        trained_with: RegimeDecision,
    ) -> Result<Self> {
        let weights = Matrix::from_f64(head.k, head.d, head.weights());
        let bias = head.bias().iter().map(|&b| b as f32).collect();
        Self::from_parts(labels, featurizer, projection, weights, bias, anchors, trained_with)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn featurizer(&self) -> &Featurizer {
        &self.featurizer
    }

    pub fn projection(&self) -> Option<&Matrix> {
        self.projection.as_ref()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    pub fn anchors(&self) -> Option<&Anchors> {
        self.anchors.as_ref()
    }

    pub fn method(&self) -> Method {
        self.trained_with.method
    }

    pub fn trained_with(&self) -> &RegimeDecision {
        &self.trained_with
    }

    pub fn with_decision(mut self, decision: RegimeDecision) -> Self {
        self.trained_with = decision;
        self
    }

    pub fn features(&self, embedding: &Embedding) -> Vec<f64> {
        match &self.projection {
            Some(p) => p.matvec(embedding),
            None => embedding.0.clone(),
        }
    }

    pub fn logits(&self, features: &[f64]) -> Vec<f64> {
        self.weights
            .matvec(features)
            .into_iter()
            .zip(&self.bias)
            .map(|(v, b)| v + f64::from(*b))
            .collect()
    }

    pub fn predict_embedding(&self, embedding: &Embedding) -> Prediction {
        let features = self.features(embedding);
        let logits = self.logits(&features);
        let probs = softmax(&logits);
        let mut label = argmax(&logits);
        if let Some(a) = &self.anchors {
            let sims: Vec<f64> = (0..a.embeddings.rows)
                .map(|i| {
                    let row: Vec<f64> = a.embeddings.row(i).iter().map(|&v| f64::from(v)).collect();
                    cosine(&features, &row)
                })
                .collect();
            let nearest = argmax(&sims);
            let runner_up = sims
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != nearest)
                .map(|(_, s)| *s)
                .fold(f64::NEG_INFINITY, f64::max);
            if sims[nearest] - runner_up >= a.margin {
                label = nearest;
            }
        }
        Prediction {
            label,
            confidence: probs[label],
            logits,
            features,
        }
    }

    pub fn predict(&self, text: &str) -> Prediction {
        self.predict_embedding(&self.featurizer.encode(text))
    }

    pub fn predict_batch(&self, texts: &[&str]) -> Vec<Prediction> {
        use rayon::prelude::*;
        texts.par_iter().map(|t| self.predict(t)).collect()
    }

    pub fn predict_labels(&self, texts: &[&str]) -> Vec<&str> {
        self.predict_batch(texts)
            .into_iter()
            .map(|p| self.labels[p.label].as_str())
            .collect()
    }
}
