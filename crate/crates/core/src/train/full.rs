use serde::{Deserialize, Serialize};

use crate::corpus::{stratified_split, ClassificationCorpus};
use crate::embed::Featurizer;
use crate::error::{Error, Result};
use crate::train::classifier::Classifier;
use crate::train::linear::{fit_softmax, FitOutcome, LinearConfig};
use crate::train::regime::{Method, RegimeDecision};
use crate::train::tpe::{best_trial, optimize, HpoParams, HpoSpace};
use crate::train::trace::TrainingTrace;
use crate::train::{embed_corpus, label_indices};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FullTrainConfig {
    pub featurizer: Featurizer,
    pub linear: LinearConfig,
    pub space: HpoSpace,
    pub val_fraction: f64,
    pub hpo: bool,
    pub seed: u64,
}

impl Default for FullTrainConfig {
    fn default() -> Self {
        Self {
            featurizer: Featurizer::default(),
            linear: LinearConfig::default(),
            space: HpoSpace::default(),
            val_fraction: 0.1,
            hpo: false,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FullTrainOutput {
    pub classifier: Classifier,
    pub trace: TrainingTrace,
    pub val_macro_f1: f64,
    /// 1-based epoch of the retained checkpoint.
    pub best_epoch: usize,
    /// Validation macro-F1 after each epoch of the retained run.
    pub val_history: Vec<f64>,
    /// Corpus indices of the fitting and validation portions.
    pub train_ids: Vec<usize>,
    pub val_ids: Vec<usize>,
    pub config: LinearConfig,
    /// Scored trials when search was enabled, otherwise a single entry.
    pub trials: Vec<(HpoParams, f64)>,
}

/// Fits a softmax head on embeddings with early stopping on validation
/// macro-F1, optionally searching the learning rate, batch size and weight
/// decay with TPE. The checkpoint of the best trial is returned as is.
pub fn train_full(corpus: &ClassificationCorpus, cfg: &FullTrainConfig) -> Result<FullTrainOutput> {
    cfg.featurizer.validate()?;
    if corpus.class_counts().len() < 2 {
        return Err(Error::NotEnoughClasses {
            available: corpus.class_counts().len(),
            required: 2,
        });
    }
    let labels = corpus.labels();
    let y = label_indices(corpus, &labels);
    let x = embed_corpus(&cfg.featurizer, corpus);
    let split = stratified_split(corpus, cfg.val_fraction, cfg.seed)?;
    let pick = |ids: &[usize]| -> (Vec<Vec<f64>>, Vec<usize>) {
        (ids.iter().map(|&i| x[i].clone()).collect(), ids.iter().map(|&i| y[i]).collect())
    };
    let (tx, ty) = pick(&split.train_ids);
    let (vx, vy) = pick(&split.test_ids);
    let k = labels.len();

    let run = |linear: &LinearConfig| -> Result<(FitOutcome, TrainingTrace)> {
        let mut trace = TrainingTrace::new(split.train_ids.clone(), ty.clone());
        let out = fit_softmax(&tx, &ty, k, Some((&vx, &vy)), linear, cfg.seed, Some(&mut trace))?;
        Ok((out, trace))
    };

    let (outcome, trace, linear, trials) = if cfg.hpo {
        let mut runs = Vec::new();
        let history = optimize(&cfg.space, cfg.seed, |p, _| {
            let linear = LinearConfig {
                learning_rate: p.learning_rate,
                batch_size: p.batch_size,
                weight_decay: p.weight_decay,
                ..cfg.linear.clone()
            };
            let (out, trace) = run(&linear)?;
            let score = out.best_val.unwrap_or(0.0);
            runs.push((out, trace, linear));
            Ok(score)
        })?;
        let best = best_trial(&history).expect("at least one trial");
        let (out, trace, linear) = runs.swap_remove(best);
        (out, trace, linear, history)
    } else {
        let (out, trace) = run(&cfg.linear)?;
        let params = HpoParams {
            learning_rate: cfg.linear.learning_rate,
            batch_size: cfg.linear.batch_size,
            weight_decay: cfg.linear.weight_decay,
        };
        let score = out.best_val.unwrap_or(0.0);
        (out, trace, cfg.linear.clone(), vec![(params, score)])
    };

    let decision = RegimeDecision::direct(Method::FullTrain, corpus.n_min());
    let classifier = Classifier::from_head(labels, cfg.featurizer.clone(), None, &outcome.head, None, decision)?;
    Ok(FullTrainOutput {
        classifier,
        trace,
        val_macro_f1: outcome.best_val.unwrap_or(0.0),
        best_epoch: outcome.best_epoch,
        val_history: outcome.val_history,
        train_ids: split.train_ids.clone(),
        val_ids: split.test_ids.clone(),
        config: linear,
        trials,
    })
}
