//! Regime resolution, rebalancing and the trainers.
//!
//! Every trainer is deterministic in its seed. Classification trainers emit
//! a [`Classifier`] whose parameters are stored in single precision; the
//! token trainer emits a [`TokenTagger`].

pub mod anchored;
pub mod classifier;
pub mod contrastive;
pub mod full;
pub mod linear;
pub mod regime;
pub mod token;
pub mod tpe;
pub mod trace;

pub use anchored::{default_anchors, train_anchored, AnchoredConfig};
pub use classifier::{Anchors, Classifier, Matrix, Prediction};
pub use contrastive::{train_contrastive, ContrastiveConfig};
pub use full::{train_full, FullTrainConfig, FullTrainOutput};
pub use linear::{train_head, LinearConfig, SoftmaxHead};
pub use regime::{
    apply_rebalance, plan_rebalance, plan_rebalance_counts, resolve_method, resolve_regime, Method,
    PerturbationUpsampler, RebalanceAction, RebalanceStep, RegimeDecision, Upsampler,
};
pub use token::{repair_bio, train_token, TokenConfig, TokenTagger};
pub use tpe::{tpe_suggest, HpoParams, HpoSpace};
pub use trace::{EpochRecord, TrainingTrace};

use crate::corpus::ClassificationCorpus;
use crate::embed::{Featurizer, TextEncoder};
use crate::error::{Error, Result};

pub(crate) fn embed_corpus(featurizer: &Featurizer, corpus: &ClassificationCorpus) -> Vec<Vec<f64>> {
    featurizer
        .encode_batch(&corpus.texts())
        .into_iter()
        .map(|e| e.0)
        .collect()
}

/// Index of each sample's label in `labels`.
pub(crate) fn label_indices(corpus: &ClassificationCorpus, labels: &[String]) -> Vec<usize> {
    corpus
        .samples()
        .iter()
        .map(|s| labels.binary_search(&s.label).expect("labels are the sorted corpus labels"))
        .collect()
}

pub(crate) fn ensure_min_per_class(corpus: &ClassificationCorpus, required: usize) -> Result<()> {
    match corpus.class_counts().iter().find(|(_, &n)| n < required) {
        Some((label, &n)) => Err(Error::insufficient(label, n, required)),
        None => Ok(()),
    }
}

/// Square projection trained in double precision.
pub(crate) struct Projection {
    pub d: usize,
    pub data: Vec<f64>,
}

/// Cosine similarity of `u` and `v` with its gradients in both arguments.
pub(crate) fn cosine_grads(u: &[f64], v: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    let cos = u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() / (nu * nv);
    let du = u
        .iter()
        .zip(v)
        .map(|(a, b)| b / (nu * nv) - cos * a / (nu * nu))
        .collect();
    let dv = u
        .iter()
        .zip(v)
        .map(|(a, b)| a / (nu * nv) - cos * b / (nv * nv))
        .collect();
    (cos, du, dv)
}

impl Projection {
    pub(crate) fn identity(d: usize) -> Self {
        let mut data = vec![0.0; d * d];
        for i in 0..d {
            data[i * d + i] = 1.0;
        }
        Self { d, data }
    }

    pub(crate) fn sparse(v: &[f64]) -> Vec<(usize, f64)> {
        v.iter()
            .enumerate()
            .filter(|(_, x)| **x != 0.0)
            .map(|(i, x)| (i, *x))
            .collect()
    }

    pub(crate) fn apply(&self, x: &[(usize, f64)]) -> Vec<f64> {
        self.data
            .chunks_exact(self.d)
            .map(|row| x.iter().map(|&(j, v)| row[j] * v).sum())
            .collect()
    }

    /// `grad += g ⊗ x` restricted to the support of `x`.
    pub(crate) fn add_outer(&self, g: &[f64], x: &[(usize, f64)], grad: &mut [f64]) {
        for (r, gr) in g.iter().enumerate() {
            if *gr == 0.0 {
                continue;
            }
            let row = &mut grad[r * self.d..(r + 1) * self.d];
            for &(j, v) in x {
                row[j] += gr * v;
            }
        }
    }

    /// Squared error between `cos(Pa, Pb)` and `target`.
    pub(crate) fn accumulate_pair_grad(
        &self,
        a: &[(usize, f64)],
        b: &[(usize, f64)],
        target: f64,
        grad: &mut [f64],
    ) -> f64 {
        let u = self.apply(a);
        let v = self.apply(b);
        let (cos, du, dv) = cosine_grads(&u, &v);
        let coeff = 2.0 * (cos - target);
        let gu: Vec<f64> = du.iter().map(|g| coeff * g).collect();
        let gv: Vec<f64> = dv.iter().map(|g| coeff * g).collect();
        self.add_outer(&gu, a, grad);
        self.add_outer(&gv, b, grad);
        (cos - target).powi(2)
    }
}
