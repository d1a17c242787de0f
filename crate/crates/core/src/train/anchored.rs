use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::ClassificationCorpus;
use crate::embed::{Featurizer, TextEncoder};
use crate::error::{Error, Result};
use crate::rng::seeded;
use crate::train::classifier::{Anchors, Classifier, Matrix};
use crate::train::linear::{fit_softmax, AdamW, LinearConfig};
use crate::train::regime::{Method, RegimeDecision};
use crate::train::{cosine_grads, embed_corpus, ensure_min_per_class, label_indices, Projection};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnchoredConfig {
    pub featurizer: Featurizer,
    /// Label to description. Empty means every label describes itself.
    pub anchors: BTreeMap<String, String>,
    pub margin: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub head: LinearConfig,
    pub seed: u64,
}

impl Default for AnchoredConfig {
    fn default() -> Self {
        Self {
            featurizer: Featurizer::default(),
            anchors: BTreeMap::new(),
            margin: 0.25,
            iterations: 20,
            learning_rate: 1e-3,
            batch_size: 4,
            head: LinearConfig::default(),
            seed: 0,
        }
    }
}

pub fn default_anchors(labels: &[String]) -> BTreeMap<String, String> {
    labels.iter().map(|l| (l.clone(), l.clone())).collect()
}

/// Triplet training against class descriptions: each sample is pulled toward
/// its own anchor and pushed from the nearest competing anchor.
pub fn train_anchored(corpus: &ClassificationCorpus, cfg: &AnchoredConfig) -> Result<Classifier> {
    cfg.featurizer.validate()?;
    ensure_min_per_class(corpus, 2)?;
    if !(cfg.margin >= 0.0 && cfg.margin <= 2.0) {
        return Err(Error::Config(format!("margin must lie in [0, 2], got {}", cfg.margin)));
    }
    let labels = corpus.labels();
    let descriptions: Vec<String> = if cfg.anchors.is_empty() {
        labels.clone()
    } else {
        labels
            .iter()
            .map(|l| cfg.anchors.get(l).cloned().ok_or_else(|| Error::MissingAnchor(l.clone())))
            .collect::<Result<_>>()?
    };
    let anchor_emb: Vec<Vec<f64>> = descriptions.iter().map(|t| cfg.featurizer.encode(t).0).collect();
    for i in 0..labels.len() {
        for j in i + 1..labels.len() {
            if anchor_emb[i] == anchor_emb[j] {
                return Err(Error::AnchorCollision(labels[i].clone(), labels[j].clone()));
            }
        }
    }

    let y = label_indices(corpus, &labels);
    let x = embed_corpus(&cfg.featurizer, corpus);
    let d = cfg.featurizer.dim;
    let sx: Vec<Vec<(usize, f64)>> = x.iter().map(|v| Projection::sparse(v)).collect();
    let sa: Vec<Vec<(usize, f64)>> = anchor_emb.iter().map(|v| Projection::sparse(v)).collect();

    let mut proj = Projection::identity(d);
    let mut opt = AdamW::new(d * d);
    let mut grad = vec![0.0; d * d];
    let mut rng = seeded(cfg.seed, "anchored");
    let mut order: Vec<usize> = (0..x.len()).collect();

    for _ in 0..cfg.iterations {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size.max(1)) {
            let anchors: Vec<Vec<f64>> = sa.iter().map(|a| proj.apply(a)).collect();
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut active = 0;
            for &i in batch {
                let u = proj.apply(&sx[i]);
                let own = y[i];
                let (pos, du_pos, da_pos) = cosine_grads(&u, &anchors[own]);
                let (neg_idx, (neg, du_neg, da_neg)) = (0..anchors.len())
                    .filter(|&k| k != own)
                    .map(|k| (k, cosine_grads(&u, &anchors[k])))
                    .max_by(|a, b| a.1 .0.total_cmp(&b.1 .0))
                    .expect("at least two classes");
                if cfg.margin - pos + neg <= 0.0 {
                    continue;
                }
                active += 1;
                let gu: Vec<f64> = du_neg.iter().zip(&du_pos).map(|(n, p)| n - p).collect();
                let g_own: Vec<f64> = da_pos.iter().map(|g| -g).collect();
                proj.add_outer(&gu, &sx[i], &mut grad);
                proj.add_outer(&g_own, &sa[own], &mut grad);
                proj.add_outer(&da_neg, &sa[neg_idx], &mut grad);
            }
            if active == 0 {
                continue;
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            opt.step(&mut proj.data, &grad, cfg.learning_rate, 0.0, 0);
        }
    }

    let projection = Matrix::from_f64(d, d, &proj.data);
    let features: Vec<Vec<f64>> = x.iter().map(|v| projection.matvec(v)).collect();
    let projected: Vec<f64> = anchor_emb.iter().flat_map(|a| projection.matvec(a)).collect();
    let head = fit_softmax(&features, &y, labels.len(), None, &cfg.head, cfg.seed, None)?.head;
    let anchors = Anchors {
        descriptions,
        embeddings: Matrix::from_f64(labels.len(), d, &projected),
        margin: cfg.margin,
    };
    let decision = RegimeDecision::direct(Method::AnchoredFewShot, corpus.n_min());
    Classifier::from_head(labels, cfg.featurizer.clone(), Some(projection), &head, Some(anchors), decision)
}
