use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::ClassificationCorpus;
use crate::embed::Featurizer;
use crate::error::Result;
use crate::train::classifier::{Classifier, Matrix};
use crate::train::linear::{fit_softmax, AdamW, LinearConfig};
use crate::train::regime::{Method, RegimeDecision};
use crate::train::{embed_corpus, ensure_min_per_class, label_indices, Projection};
use crate::rng::seeded;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContrastiveConfig {
    pub featurizer: Featurizer,
    /// Passes over the corpus; each pass draws one positive and one negative
    /// partner per sample.
    pub iterations: usize,
    pub backbone_lr: f64,
    pub pair_batch: usize,
    pub head: LinearConfig,
    pub seed: u64,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        Self {
            featurizer: Featurizer::default(),
            iterations: 20,
            backbone_lr: 1e-5,
            pair_batch: 16,
            head: LinearConfig::default(),
            seed: 0,
        }
    }
}

/// Learns a linear projection with a cosine-similarity pair loss, then fits
/// a softmax head on the projected embeddings.
pub fn train_contrastive(corpus: &ClassificationCorpus, cfg: &ContrastiveConfig) -> Result<Classifier> {
    cfg.featurizer.validate()?;
    ensure_min_per_class(corpus, 2)?;
    let labels = corpus.labels();
    let y = label_indices(corpus, &labels);
    let x = embed_corpus(&cfg.featurizer, corpus);
    let d = cfg.featurizer.dim;

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); labels.len()];
    for (i, &c) in y.iter().enumerate() {
        by_class[c].push(i);
    }
    let others: Vec<Vec<usize>> = (0..labels.len())
        .map(|c| (0..x.len()).filter(|&i| y[i] != c).collect())
        .collect();

    let mut proj = Projection::identity(d);
    let sparse: Vec<Vec<(usize, f64)>> = x.iter().map(|v| Projection::sparse(v)).collect();
    let mut opt = AdamW::new(d * d);
    let mut grad = vec![0.0; d * d];
    let mut rng = seeded(cfg.seed, "contrastive");
    let batch = cfg.pair_batch.max(1);

    for _ in 0..cfg.iterations {
        let mut pairs = Vec::with_capacity(2 * x.len());
        for (i, &c) in y.iter().enumerate() {
            let same = &by_class[c];
            let mut j = same[rng.random_range(0..same.len() - 1)];
            if j == i {
                j = *same.last().expect("class has two samples");
            }
            pairs.push((i, j, 1.0));
            let neg = others[c][rng.random_range(0..others[c].len())];
            pairs.push((i, neg, 0.0));
        }
        pairs.shuffle(&mut rng);
        for chunk in pairs.chunks(batch) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &(a, b, target) in chunk {
                proj.accumulate_pair_grad(&sparse[a], &sparse[b], target, &mut grad);
            }
            let scale = 1.0 / chunk.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            opt.step(&mut proj.data, &grad, cfg.backbone_lr, 0.0, 0);
        }
    }

    let projection = Matrix::from_f64(d, d, &proj.data);
    let features: Vec<Vec<f64>> = x.iter().map(|v| projection.matvec(v)).collect();
    let head = fit_softmax(&features, &y, labels.len(), None, &cfg.head, cfg.seed, None)?.head;
    let decision = RegimeDecision::direct(Method::ContrastiveFewShot, corpus.n_min());
    Classifier::from_head(labels, cfg.featurizer.clone(), Some(projection), &head, None, decision)
}
