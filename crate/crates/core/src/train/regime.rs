//! Data-aware method resolution and rebalancing.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::augment::{perturb, PerturbationConfig};
use crate::corpus::{ClassificationCorpus, ClassificationSample, Corpus};
use crate::error::{Error, Result};
use crate::ood::OodMethod;
use crate::rng::seeded;

/// Smallest class size any trainer accepts.
pub const MIN_EXAMPLES: usize = 2;
/// Upper bound of the anchored few-shot band.
pub const ANCHORED_MAX: usize = 5;
/// Upper bound of the contrastive few-shot band.
pub const CONTRASTIVE_MAX: usize = 80;
/// Size underrepresented classes are raised to.
pub const UPSAMPLE_TARGET: usize = CONTRASTIVE_MAX + 1;
pub const DEFAULT_LOW_RESOURCE_THRESHOLD: f64 = 0.3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    AnchoredFewShot,
    ContrastiveFewShot,
    FullTrain,
    TokenClassification,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::AnchoredFewShot => "anchored_few_shot",
            Method::ContrastiveFewShot => "contrastive_few_shot",
            Method::FullTrain => "full_train",
            Method::TokenClassification => "token_classification",
        }
    }

    pub fn from_name(name: &str) -> Result<Method> {
        match name {
            "anchored_few_shot" => Ok(Method::AnchoredFewShot),
            "contrastive_few_shot" => Ok(Method::ContrastiveFewShot),
            "full_train" => Ok(Method::FullTrain),
            "token_classification" => Ok(Method::TokenClassification),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }

    pub fn is_few_shot(self) -> bool {
        matches!(self, Method::AnchoredFewShot | Method::ContrastiveFewShot)
    }

    /// Largest class size the method trains on, if it has one.
    pub fn ceiling(self) -> Option<usize> {
        match self {
            Method::AnchoredFewShot => Some(ANCHORED_MAX),
            Method::ContrastiveFewShot => Some(CONTRASTIVE_MAX),
            _ => None,
        }
    }

    /// The OOD detector paired with the method by default.
    pub fn companion_ood(self) -> Option<OodMethod> {
        match self {
            Method::FullTrain => Some(OodMethod::MarginalMahalanobis),
            Method::ContrastiveFewShot | Method::AnchoredFewShot => Some(OodMethod::MaxSoftmaxProb),
            Method::TokenClassification => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RebalanceAction {
    UpsampleTo,
    DownsampleTo,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RebalanceStep {
    pub label: String,
    pub action: RebalanceAction,
    pub target: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeDecision {
    pub method: Method,
    pub n_min: usize,
    pub rebalance_plan: Vec<RebalanceStep>,
    pub ood_variant: Option<OodMethod>,
}

impl RegimeDecision {
    /// A decision for a method chosen without consulting the data.
    pub fn direct(method: Method, n_min: usize) -> Self {
        Self {
            method,
            n_min,
            rebalance_plan: Vec::new(),
            ood_variant: method.companion_ood(),
        }
    }

    pub fn upsampled(&self) -> bool {
        self.rebalance_plan
            .iter()
            .any(|s| s.action == RebalanceAction::UpsampleTo)
    }
}

/// Maps class counts to a method by the `n_min` bands.
pub fn resolve_method(counts: &BTreeMap<String, usize>) -> Result<Method> {
    if let Some((label, &count)) = counts.iter().find(|(_, &c)| c < MIN_EXAMPLES) {
        return Err(Error::insufficient(label, count, MIN_EXAMPLES));
    }
    let n_min = counts.values().copied().min().ok_or(Error::EmptyCorpus)?;
    Ok(match n_min {
        n if n <= ANCHORED_MAX => Method::AnchoredFewShot,
        n if n <= CONTRASTIVE_MAX => Method::ContrastiveFewShot,
        _ => Method::FullTrain,
    })
}

pub fn resolve_regime(corpus: &ClassificationCorpus) -> Result<RegimeDecision> {
    let method = resolve_method(corpus.class_counts())?;
    Ok(RegimeDecision::direct(method, corpus.n_min()))
}

/// Plans upsampling of low-resource classes and, for few-shot outcomes,
/// downsampling to the method ceiling.
pub fn plan_rebalance(corpus: &ClassificationCorpus, low_resource_threshold: f64) -> Result<RegimeDecision> {
    plan_rebalance_counts(corpus.class_counts(), low_resource_threshold, true)
}

/// Like [`plan_rebalance`] but operating on counts; `allow_upsample = false`
/// skips the promotion step.
pub fn plan_rebalance_counts(
    counts: &BTreeMap<String, usize>,
    low_resource_threshold: f64,
    allow_upsample: bool,
) -> Result<RegimeDecision> {
    if !(0.0..=1.0).contains(&low_resource_threshold) {
        return Err(Error::Config(format!(
            "low_resource_threshold must lie in [0, 1], got {low_resource_threshold}"
        )));
    }
    resolve_method(counts)?;
    let mut counts = counts.clone();
    let mut plan = Vec::new();

    let low: Vec<String> = counts
        .iter()
        .filter(|(_, &n)| n <= CONTRASTIVE_MAX)
        .map(|(l, _)| l.clone())
        .collect();
    let fraction = low.len() as f64 / counts.len() as f64;
    if allow_upsample && fraction > low_resource_threshold {
        for label in low {
            counts.insert(label.clone(), UPSAMPLE_TARGET);
            plan.push(RebalanceStep {
                label,
                action: RebalanceAction::UpsampleTo,
                target: UPSAMPLE_TARGET,
            });
        }
    }

    let method = resolve_method(&counts)?;
    if let Some(ceiling) = method.ceiling() {
        for (label, n) in counts.iter_mut() {
            if *n > ceiling {
                *n = ceiling;
                plan.push(RebalanceStep {
                    label: label.clone(),
                    action: RebalanceAction::DownsampleTo,
                    target: ceiling,
                });
            }
        }
    }
    Ok(RegimeDecision {
        method,
        n_min: counts.values().copied().min().unwrap_or(0),
        rebalance_plan: plan,
        ood_variant: method.companion_ood(),
    })
}

/// Source of new utterances for a class.
pub trait Upsampler {
    /// Returns exactly `k` new texts for `label`, derived from `seeds`.
    fn generate(&mut self, label: &str, seeds: &[&str], k: usize) -> Result<Vec<String>>;
}

/// Upsampling through character and word perturbations.
#[derive(Clone, Debug, Default)]
pub struct PerturbationUpsampler {
    pub config: PerturbationConfig,
}

impl Upsampler for PerturbationUpsampler {
    fn generate(&mut self, label: &str, seeds: &[&str], k: usize) -> Result<Vec<String>> {
        if seeds.is_empty() {
            return Err(Error::insufficient(label, 0, 1));
        }
        let per_seed = |i: usize| k / seeds.len() + usize::from(i < k % seeds.len());
        let mut outputs: Vec<std::vec::IntoIter<String>> = Vec::with_capacity(seeds.len());
        for (i, text) in seeds.iter().enumerate() {
            outputs.push(perturb(text, &self.config, per_seed(i))?.into_iter());
        }
        // interleave so a truncated prefix still covers all seeds
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            for it in outputs.iter_mut() {
                if let Some(t) = it.next() {
                    out.push(t);
                }
            }
        }
        Ok(out)
    }
}

/// Executes a plan: upsampled examples are appended after the originals,
/// downsampling keeps a seeded subset in original order.
pub fn apply_rebalance(
    corpus: &ClassificationCorpus,
    plan: &[RebalanceStep],
    upsampler: &mut dyn Upsampler,
    seed: u64,
) -> Result<ClassificationCorpus> {
    let mut by_label: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in corpus.samples().iter().enumerate() {
        by_label.entry(s.label.as_str()).or_default().push(i);
    }
    let mut keep = vec![true; corpus.len()];
    let mut extra = Vec::new();
    for step in plan {
        let ids = by_label
            .get(step.label.as_str())
            .ok_or_else(|| Error::Config(format!("plan references unknown label `{}`", step.label)))?;
        match step.action {
            RebalanceAction::UpsampleTo if ids.len() < step.target => {
                let seeds: Vec<&str> = ids.iter().map(|&i| corpus.samples()[i].text.as_str()).collect();
                let texts = upsampler.generate(&step.label, &seeds, step.target - ids.len())?;
                for text in texts {
                    extra.push(ClassificationSample::new(text, step.label.clone())?);
                }
            }
            RebalanceAction::DownsampleTo if ids.len() > step.target => {
                let mut rng = seeded(seed, &format!("downsample:{}", step.label));
                let mut shuffled = ids.clone();
                shuffled.shuffle(&mut rng);
                for &i in &shuffled[step.target..] {
                    keep[i] = false;
                }
            }
            _ => {}
        }
    }
    let samples: Vec<ClassificationSample> = corpus
        .samples()
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(s, _)| s.clone())
        .chain(extra)
        .collect();
    Corpus::new(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn counts(pairs: &[(&str, usize)]) -> BTreeMap<String, usize> {
        pairs.iter().map(|(l, n)| (l.to_string(), *n)).collect()
    }

    fn corpus(pairs: &[(&str, usize)]) -> ClassificationCorpus {
        let mut samples = Vec::new();
        for (label, n) in pairs {
            for i in 0..*n {
                samples.push(ClassificationSample::new(format!("{label} example number {i}"), *label).unwrap());
            }
        }
        Corpus::new(samples).unwrap()
    }

    #[test]
    fn bands() {
        assert_eq!(resolve_method(&counts(&[("a", 3), ("b", 4)])).unwrap(), Method::AnchoredFewShot);
        assert_eq!(resolve_method(&counts(&[("a", 81), ("b", 200)])).unwrap(), Method::FullTrain);
        assert_eq!(resolve_method(&counts(&[("a", 10), ("b", 50)])).unwrap(), Method::ContrastiveFewShot);
        assert!(matches!(
            resolve_method(&counts(&[("a", 1), ("b", 9)])),
            Err(Error::InsufficientExamples { count: 1, .. })
        ));
        for (n, m) in [
            (2, Method::AnchoredFewShot),
            (5, Method::AnchoredFewShot),
            (6, Method::ContrastiveFewShot),
            (80, Method::ContrastiveFewShot),
            (81, Method::FullTrain),
        ] {
            assert_eq!(resolve_method(&counts(&[("a", n), ("b", 500)])).unwrap(), m, "n_min {n}");
        }
    }

    #[test]
    fn promotion_to_full_train() {
        let mut pairs: Vec<(String, usize)> = (0..6).map(|i| (format!("big{i}"), 120)).collect();
        pairs.extend((0..4).map(|i| (format!("small{i}"), 50)));
        let c: BTreeMap<String, usize> = pairs.into_iter().collect();
        let d = plan_rebalance_counts(&c, 0.3, true).unwrap();
        assert_eq!(d.method, Method::FullTrain);
        assert_eq!(d.rebalance_plan.len(), 4);
        assert!(d
            .rebalance_plan
            .iter()
            .all(|s| s.action == RebalanceAction::UpsampleTo && s.target == 81 && s.label.starts_with("small")));
    }

    #[test]
    fn below_threshold_downsamples_only() {
        let mut pairs: Vec<(String, usize)> = (0..8).map(|i| (format!("big{i}"), 500)).collect();
        pairs.extend((0..2).map(|i| (format!("small{i}"), 20)));
        let c: BTreeMap<String, usize> = pairs.into_iter().collect();
        let d = plan_rebalance_counts(&c, 0.3, true).unwrap();
        assert_eq!(d.method, Method::ContrastiveFewShot);
        assert!(!d.upsampled());
        assert_eq!(d.rebalance_plan.len(), 8);
        assert!(d.rebalance_plan.iter().all(|s| s.action == RebalanceAction::DownsampleTo && s.target == 80));
    }

    #[test]
    fn anchored_ceiling() {
        let d = plan_rebalance_counts(&counts(&[("a", 3), ("b", 40)]), 0.3, false).unwrap();
        assert_eq!(d.method, Method::AnchoredFewShot);
        assert_eq!(
            d.rebalance_plan,
            vec![RebalanceStep { label: "b".into(), action: RebalanceAction::DownsampleTo, target: 5 }]
        );
    }

    #[test]
    fn apply_plan() {
        let c = corpus(&[("a", 4), ("b", 30), ("c", 100)]);
        let d = plan_rebalance(&c, 0.3).unwrap();
        assert_eq!(d.method, Method::FullTrain);
        let mut up = PerturbationUpsampler::default();
        let out = apply_rebalance(&c, &d.rebalance_plan, &mut up, 1).unwrap();
        assert_eq!(out.class_counts()["a"], 81);
        assert_eq!(out.class_counts()["b"], 81);
        assert_eq!(out.class_counts()["c"], 100);
        assert_eq!(&out.samples()[..c.len()], c.samples());
        assert_eq!(resolve_regime(&out).unwrap().method, Method::FullTrain);

        let down = vec![RebalanceStep { label: "c".into(), action: RebalanceAction::DownsampleTo, target: 80 }];
        let a = apply_rebalance(&c, &down, &mut up, 3).unwrap();
        let b = apply_rebalance(&c, &down, &mut up, 3).unwrap();
        assert_eq!(a.class_counts()["c"], 80);
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn upsampling_never_ends_anchored(sizes in prop::collection::vec(2usize..200, 2..12), thr in 0.0f64..1.0) {
            let c: BTreeMap<String, usize> = sizes.iter().enumerate().map(|(i, n)| (format!("c{i}"), *n)).collect();
            let d = plan_rebalance_counts(&c, thr, true).unwrap();
            if d.upsampled() {
                prop_assert_ne!(d.method, Method::AnchoredFewShot);
            }
            for s in &d.rebalance_plan {
                match s.action {
                    RebalanceAction::UpsampleTo => prop_assert_eq!(s.target, 81),
                    RebalanceAction::DownsampleTo => prop_assert!(s.target == 80 || s.target == 5),
                }
            }
        }

        #[test]
        fn method_depends_only_on_n_min(n_min in 2usize..150, others in prop::collection::vec(0usize..300, 1..8)) {
            let mut c: BTreeMap<String, usize> = others.iter().enumerate().map(|(i, n)| (format!("c{i}"), n_min + n)).collect();
            c.insert("min".into(), n_min);
            let reference = resolve_method(&counts(&[("x", n_min), ("y", n_min)])).unwrap();
            prop_assert_eq!(resolve_method(&c).unwrap(), reference);
        }
    }
}
