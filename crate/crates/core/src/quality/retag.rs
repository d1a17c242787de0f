use rand::seq::SliceRandom;

use crate::corpus::ClassificationCorpus;
use crate::embed::Featurizer;
use crate::error::Result;
use crate::math::softmax;
use crate::rng::seeded;
use crate::train::linear::{fit_softmax, LinearConfig};
use crate::train::{embed_corpus, label_indices};

use super::EvaluatorResult;

/// Fold index per sample, stratified by label. `k` is lowered to the
/// smallest class size when needed.
pub fn stratified_folds(corpus: &ClassificationCorpus, k: usize, seed: u64) -> (Vec<usize>, usize) {
    let k = k.min(corpus.n_min()).max(2);
    let mut folds = vec![0; corpus.len()];
    let mut rng = seeded(seed, "retag-folds");
    for label in corpus.labels() {
        let mut ids: Vec<usize> = (0..corpus.len()).filter(|&i| corpus.samples()[i].label == label).collect();
        ids.shuffle(&mut rng);
        for (j, i) in ids.into_iter().enumerate() {
            folds[i] = j % k;
        }
    }
    (folds, k)
}

/// Out-of-fold predictions; a sample is flagged when the prediction differs
/// from its label. Scores are the predicted-class probability.
pub fn eval_retag(
    corpus: &ClassificationCorpus,
    featurizer: &Featurizer,
    linear: &LinearConfig,
    k_folds: usize,
    seed: u64,
) -> Result<EvaluatorResult> {
    let labels = corpus.labels();
    let y = label_indices(corpus, &labels);
    let x = embed_corpus(featurizer, corpus);
    let (folds, k) = stratified_folds(corpus, k_folds, seed);
    let mut scores = vec![0.0; corpus.len()];
    let mut flags = vec![false; corpus.len()];
    for fold in 0..k {
        let (train, held): (Vec<usize>, Vec<usize>) = (0..corpus.len()).partition(|&i| folds[i] != fold);
        let tx: Vec<Vec<f64>> = train.iter().map(|&i| x[i].clone()).collect();
        let ty: Vec<usize> = train.iter().map(|&i| y[i]).collect();
        let head = fit_softmax(&tx, &ty, labels.len(), None, linear, seed ^ fold as u64, None)?.head;
        for i in held {
            let p = softmax(&head.logits(&x[i]));
            let pred = crate::math::argmax(&p);
            scores[i] = p[pred];
            flags[i] = pred != y[i];
        }
    }
    Ok(EvaluatorResult { scores, flags })
}
