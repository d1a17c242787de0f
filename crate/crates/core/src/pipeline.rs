//! End-to-end training: diagnose, rebalance, train, calibrate OOD, evaluate.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::augment::{gibberish, GibberishConfig, PerturbationConfig};
use crate::bundle::{classify, BundleModel};
use crate::corpus::{stratified_split, AnyCorpus, ClassificationCorpus, EntitySpan, NerCorpus, Task};
use crate::embed::Featurizer;
use crate::error::{Error, Result};
use crate::metrics::{classification_report, entity_report, ClassificationReport, EntityReport};
use crate::ood::{calibrate, fit_mahalanobis, OodDetector, OodMethod, OodScorer, OUT_OF_SCOPE};
use crate::quality::{diagnose, Evaluator, QualityConfig};
use crate::train::{
    apply_rebalance, plan_rebalance_counts, train_anchored, train_contrastive, train_full, train_token,
    AnchoredConfig, Classifier, ContrastiveConfig, FullTrainConfig, Method, PerturbationUpsampler, RegimeDecision,
    TokenConfig, Upsampler,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OodConfig {
    /// `auto` picks the method's companion detector, `none` disables OOD.
    pub method: String,
    pub threshold_factor: f64,
    pub shrinkage: f64,
    pub gibberish: GibberishConfig,
}

impl Default for OodConfig {
    fn default() -> Self {
        Self {
            method: "auto".into(),
            threshold_factor: 1.0,
            shrinkage: 0.1,
            gibberish: GibberishConfig::default(),
        }
    }
}

impl OodConfig {
    pub fn resolve(&self, method: Method, labels: &[String]) -> Result<Option<OodMethod>> {
        if self.method == "auto" {
            if labels.iter().any(|l| l == OUT_OF_SCOPE) {
                return Ok(Some(OodMethod::ExplicitOutOfScopeClass));
            }
            return Ok(method.companion_ood());
        }
        OodMethod::from_flag(&self.method)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Forces a method instead of resolving it from the data.
    pub method: Option<Method>,
    pub low_resource_threshold: f64,
    pub upsample: bool,
    pub test_fraction: f64,
    pub evaluators: Vec<Evaluator>,
    /// Drop flagged samples before training.
    pub filter_flagged: bool,
    pub featurizer: Featurizer,
    pub perturbation: PerturbationConfig,
    pub full: FullTrainConfig,
    pub contrastive: ContrastiveConfig,
    pub anchored: AnchoredConfig,
    pub token: TokenConfig,
    pub quality: QualityConfig,
    pub ood: OodConfig,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            method: None,
            low_resource_threshold: crate::train::regime::DEFAULT_LOW_RESOURCE_THRESHOLD,
            upsample: true,
            test_fraction: 0.2,
            evaluators: Vec::new(),
            filter_flagged: true,
            featurizer: Featurizer::default(),
            perturbation: PerturbationConfig::default(),
            full: FullTrainConfig::default(),
            contrastive: ContrastiveConfig::default(),
            anchored: AnchoredConfig::default(),
            token: TokenConfig::default(),
            quality: QualityConfig::default(),
            ood: OodConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualitySummary {
    pub evaluators: Vec<Evaluator>,
    pub flagged: usize,
    pub removed: usize,
    pub per_evaluator: BTreeMap<String, usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OodSummary {
    pub method: OodMethod,
    pub base_threshold: f64,
    pub effective_threshold: f64,
    pub calibration_f1: f64,
    pub calibration_ood_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub task: Task,
    pub method: Method,
    pub n_min: usize,
    pub upsampled: bool,
    pub rebalance_steps: usize,
    pub train_size: usize,
    pub test_size: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quality: Option<QualitySummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ood: Option<OodSummary>,
    /// Argmax predictions without OOD routing.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub closed_set: Option<ClassificationReport>,
    /// Predictions with OOD routing to the out-of-scope label.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub routed: Option<ClassificationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entities: Option<EntityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_macro_f1: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: BundleModel,
    pub report: TrainReport,
}

/// Planned regime without training anything.
pub fn plan(corpus: &ClassificationCorpus, cfg: &PipelineConfig) -> Result<RegimeDecision> {
    let mut d = plan_rebalance_counts(corpus.class_counts(), cfg.low_resource_threshold, cfg.upsample)?;
    if let Some(m) = cfg.method {
        d.method = m;
    }
    Ok(d)
}

/// Regime planned on the portion [`train_classification`] trains on, before
/// quality filtering.
pub fn plan_training(
    corpus: &ClassificationCorpus,
    test: Option<&ClassificationCorpus>,
    cfg: &PipelineConfig,
) -> Result<RegimeDecision> {
    match test {
        Some(_) => plan(corpus, cfg),
        None => plan(&stratified_split(corpus, cfg.test_fraction, cfg.seed)?.train, cfg),
    }
}

fn summarize_quality(out: &crate::quality::DatasetEvaluatorOutput, evaluators: &[Evaluator], removed: usize) -> QualitySummary {
    QualitySummary {
        evaluators: evaluators.to_vec(),
        flagged: out.flags.len(),
        removed,
        per_evaluator: evaluators.iter().map(|e| (e.name().to_string(), out.flagged_by(*e).len())).collect(),
    }
}

fn fit_detector(
    classifier: &Classifier,
    method: OodMethod,
    fit_texts: &[&str],
    calib_texts: &[&str],
    cfg: &OodConfig,
    seed: u64,
) -> Result<(OodDetector, usize)> {
    let features = |texts: &[&str]| -> Vec<(Vec<f64>, Vec<f64>)> {
        classifier
            .predict_batch(texts)
            .into_iter()
            .map(|p| (p.features, p.logits))
            .collect()
    };
    let scorer = match method {
        OodMethod::MarginalMahalanobis => {
            let f: Vec<Vec<f64>> = features(fit_texts).into_iter().map(|(f, _)| f).collect();
            OodScorer::Mahalanobis(fit_mahalanobis(&f, cfg.shrinkage)?)
        }
        OodMethod::MaxSoftmaxProb => OodScorer::MaxSoftmax,
        OodMethod::ExplicitOutOfScopeClass => OodScorer::OutOfScopeClass {
            index: classifier
                .label_index(OUT_OF_SCOPE)
                .ok_or_else(|| Error::Config(format!("explicit OOD needs a `{OUT_OF_SCOPE}` label")))?,
        },
    };
    let score = |rows: Vec<(Vec<f64>, Vec<f64>)>| -> Result<Vec<f64>> {
        rows.iter().map(|(f, l)| scorer.score(f, l)).collect()
    };
    let n = calib_texts.len();
    let gib_cfg = GibberishConfig {
        seed: seed ^ cfg.gibberish.seed,
        ..cfg.gibberish.clone()
    };
    let noise = gibberish(&gib_cfg, n)?;
    let noise_refs: Vec<&str> = noise.iter().map(String::as_str).collect();
    let id_scores = score(features(calib_texts))?;
    let ood_scores = score(features(&noise_refs))?;
    let calibration = calibrate(&id_scores, &ood_scores, cfg.threshold_factor)?;
    Ok((OodDetector { scorer, calibration }, n))
}

fn evaluate(
    classifier: &Classifier,
    detector: Option<&OodDetector>,
    test: &ClassificationCorpus,
) -> Result<(ClassificationReport, ClassificationReport)> {
    let texts = test.texts();
    let gold = test.gold_labels();
    let closed = classifier.predict_labels(&texts);
    let routed: Vec<String> = texts
        .iter()
        .map(|t| classify(classifier, detector, t).map(|p| p.label))
        .collect::<Result<_>>()?;
    Ok((
        classification_report(&gold, &closed, None)?,
        classification_report(&gold, &routed, Some(OUT_OF_SCOPE))?,
    ))
}

/// Trains a text classifier. Without `test` a stratified split of `corpus`
/// is held out for evaluation.
pub fn train_classification(
    corpus: &ClassificationCorpus,
    test: Option<&ClassificationCorpus>,
    cfg: &PipelineConfig,
    upsampler: Option<&mut dyn Upsampler>,
) -> Result<TrainOutcome> {
    let (mut train, test) = match test {
        Some(t) => (corpus.clone(), t.clone()),
        None => {
            let s = stratified_split(corpus, cfg.test_fraction, cfg.seed)?;
            (s.train, s.test)
        }
    };

    let quality = if cfg.evaluators.is_empty() {
        None
    } else {
        let qcfg = QualityConfig { seed: cfg.seed, featurizer: cfg.featurizer.clone(), ..cfg.quality.clone() };
        let out = diagnose(&AnyCorpus::Classification(train.clone()), &cfg.evaluators, &qcfg)?;
        let removed = if cfg.filter_flagged { out.flags.len() } else { 0 };
        let summary = summarize_quality(&out, &cfg.evaluators, removed);
        if cfg.filter_flagged {
            if let AnyCorpus::Classification(f) = out.filtered {
                train = f;
            }
        }
        Some(summary)
    };

    let decision = plan(&train, cfg)?;
    let mut default_upsampler = PerturbationUpsampler {
        config: PerturbationConfig { seed: cfg.seed ^ cfg.perturbation.seed, ..cfg.perturbation.clone() },
    };
    let upsampler: &mut dyn Upsampler = match upsampler {
        Some(u) => u,
        None => &mut default_upsampler,
    };
    let train = if decision.rebalance_plan.is_empty() {
        train
    } else {
        apply_rebalance(&train, &decision.rebalance_plan, upsampler, cfg.seed)?
    };

    let labels = train.labels();
    let ood_method = cfg.ood.resolve(decision.method, &labels)?;
    let texts = train.texts();
    let (classifier, val_macro_f1, fit_ids, calib_ids) = match decision.method {
        Method::FullTrain => {
            let full = FullTrainConfig { featurizer: cfg.featurizer.clone(), seed: cfg.seed, ..cfg.full.clone() };
            let out = train_full(&train, &full)?;
            (out.classifier, Some(out.val_macro_f1), out.train_ids, out.val_ids)
        }
        Method::ContrastiveFewShot => {
            let c = ContrastiveConfig { featurizer: cfg.featurizer.clone(), seed: cfg.seed, ..cfg.contrastive.clone() };
            let all: Vec<usize> = (0..train.len()).collect();
            (train_contrastive(&train, &c)?, None, all.clone(), all)
        }
        Method::AnchoredFewShot => {
            let a = AnchoredConfig { featurizer: cfg.featurizer.clone(), seed: cfg.seed, ..cfg.anchored.clone() };
            let all: Vec<usize> = (0..train.len()).collect();
            (train_anchored(&train, &a)?, None, all.clone(), all)
        }
        Method::TokenClassification => {
            return Err(Error::Config("token_classification needs an NER corpus".into()));
        }
    };
    let classifier = classifier.with_decision(decision.clone());

    let (detector, ood) = match ood_method {
        None => (None, None),
        Some(m) => {
            let pick = |ids: &[usize]| -> Vec<&str> { ids.iter().map(|&i| texts[i]).collect() };
            let (d, n) = fit_detector(&classifier, m, &pick(&fit_ids), &pick(&calib_ids), &cfg.ood, cfg.seed)?;
            let summary = OodSummary {
                method: m,
                base_threshold: d.calibration.base_threshold,
                effective_threshold: d.calibration.effective_threshold(),
                calibration_f1: d.calibration.f1,
                calibration_ood_size: n,
            };
            (Some(d), Some(summary))
        }
    };

    let (closed, routed) = evaluate(&classifier, detector.as_ref(), &test)?;
    let report = TrainReport {
        task: Task::Classification,
        method: decision.method,
        n_min: decision.n_min,
        upsampled: decision.upsampled(),
        rebalance_steps: decision.rebalance_plan.len(),
        train_size: train.len(),
        test_size: test.len(),
        quality,
        ood,
        closed_set: Some(closed),
        routed: Some(routed),
        entities: None,
        val_macro_f1,
    };
    Ok(TrainOutcome {
        model: BundleModel::Classification { classifier, detector },
        report,
    })
}

/// Trains a BIO tagger, evaluated on a held-out split or `test`.
pub fn train_ner(corpus: &NerCorpus, test: Option<&NerCorpus>, cfg: &PipelineConfig) -> Result<TrainOutcome> {
    let (mut train, test) = match test {
        Some(t) => (corpus.clone(), t.clone()),
        None => {
            let s = stratified_split(corpus, cfg.test_fraction, cfg.seed)?;
            (s.train, s.test)
        }
    };
    let token = TokenConfig { seed: cfg.seed, ..cfg.token.clone() };
    let quality = if cfg.evaluators.is_empty() {
        None
    } else {
        let qcfg = QualityConfig { seed: cfg.seed, token: token.clone(), ..cfg.quality.clone() };
        let out = diagnose(&AnyCorpus::Token(train.clone()), &cfg.evaluators, &qcfg)?;
        let removed = if cfg.filter_flagged { out.flags.len() } else { 0 };
        let summary = summarize_quality(&out, &cfg.evaluators, removed);
        if cfg.filter_flagged {
            if let AnyCorpus::Token(f) = out.filtered {
                train = f;
            }
        }
        Some(summary)
    };
    let tagger = train_token(&train, &token)?;
    let gold: Vec<Vec<EntitySpan>> = test.samples().iter().map(|s| s.entities.clone()).collect();
    let pred: Vec<Vec<EntitySpan>> = test.samples().iter().map(|s| tagger.predict_entities(&s.text)).collect();
    let report = TrainReport {
        task: Task::TokenClassification,
        method: Method::TokenClassification,
        n_min: train.n_min(),
        upsampled: false,
        rebalance_steps: 0,
        train_size: train.len(),
        test_size: test.len(),
        quality,
        ood: None,
        closed_set: None,
        routed: None,
        entities: Some(entity_report(&gold, &pred)?),
        val_macro_f1: None,
    };
    Ok(TrainOutcome {
        model: BundleModel::Token(tagger),
        report,
    })
}

pub fn train_any(corpus: &AnyCorpus, cfg: &PipelineConfig, upsampler: Option<&mut dyn Upsampler>) -> Result<TrainOutcome> {
    match corpus {
        AnyCorpus::Classification(c) => train_classification(c, None, cfg, upsampler),
        AnyCorpus::Token(c) => train_ner(c, None, cfg),
    }
}
