//! Data-quality evaluators and the `diagnose` entry point.
//!
//! Classification corpora support retagging, uncertainty, pointwise
//! V-information and cartography; token corpora support label aggregation.
//! Flags from several evaluators are combined by union.

mod aggregation;
mod dynamics;
mod retag;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use aggregation::{
    dawid_skene, eval_label_aggregation, AnnotationMatrix, DawidSkeneConfig, DawidSkeneResult,
    LabelAggregationOutput,
};
pub use dynamics::{
    cartography_point, data_map_csv, data_map_svg, dynamic_tune, eval_cartography, eval_pvi, eval_uncertainty,
    pvi, write_data_map, CartographyPoint, CartographyThresholds, Dynamics, Region, BLANK_TOKEN,
};
pub use retag::{eval_retag, stratified_folds};

use crate::corpus::{AnyCorpus, Task};
use crate::embed::Featurizer;
use crate::error::{Error, Result};
use crate::train::{train_token, LinearConfig, TokenConfig};

/// Per-sample scores and flags of one evaluator, in corpus order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluatorResult {
    pub scores: Vec<f64>,
    pub flags: Vec<bool>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Evaluator {
    Retag,
    Uncertainty,
    Pvi,
    Cartography,
    LabelAggregation,
}

impl Evaluator {
    pub const ALL: [Evaluator; 5] = [
        Evaluator::Retag,
        Evaluator::Uncertainty,
        Evaluator::Pvi,
        Evaluator::Cartography,
        Evaluator::LabelAggregation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Evaluator::Retag => "retag",
            Evaluator::Uncertainty => "uncertainty",
            Evaluator::Pvi => "pvi",
            Evaluator::Cartography => "cartography",
            Evaluator::LabelAggregation => "label_aggregation",
        }
    }

    pub fn supports(self, task: Task) -> bool {
        match self {
            Evaluator::LabelAggregation => task == Task::TokenClassification,
            _ => task == Task::Classification,
        }
    }

    /// Evaluators applicable to `task`.
    pub fn defaults_for(task: Task) -> Vec<Evaluator> {
        Self::ALL.into_iter().filter(|e| e.supports(task)).collect()
    }
}

impl fmt::Display for Evaluator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Evaluator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown evaluator `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QualityConfig {
    pub epochs: usize,
    pub k_folds: usize,
    pub tau: f64,
    pub cartography: CartographyThresholds,
    pub passes: usize,
    pub dropout_rate: f64,
    pub dawid_skene: DawidSkeneConfig,
    pub featurizer: Featurizer,
    pub linear: LinearConfig,
    pub token: TokenConfig,
    pub seed: u64,
}

impl Default for QualityConfig {
    fn default() -> Self {
        Self {
            epochs: 6,
            k_folds: 5,
            tau: 0.5,
            cartography: CartographyThresholds::default(),
            passes: 10,
            dropout_rate: 0.2,
            dawid_skene: DawidSkeneConfig::default(),
            featurizer: Featurizer::default(),
            linear: LinearConfig::default(),
            token: TokenConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DatasetEvaluatorOutput {
    /// Sample id to evaluator name to score. Every sample has an entry.
    pub scores: BTreeMap<usize, BTreeMap<String, f64>>,
    /// Flagged sample ids with the evaluators that flagged them.
    pub flags: BTreeMap<usize, BTreeSet<String>>,
    pub filtered: AnyCorpus,
    /// Original ids of the samples in `filtered`.
    pub kept_ids: Vec<usize>,
    pub cartography: Option<Vec<CartographyPoint>>,
    pub token_flags: Option<Vec<Vec<bool>>>,
}

impl DatasetEvaluatorOutput {
    pub fn flagged_ids(&self) -> Vec<usize> {
        self.flags.keys().copied().collect()
    }

    pub fn flagged_by(&self, evaluator: Evaluator) -> Vec<usize> {
        self.flags
            .iter()
            .filter(|(_, names)| names.contains(evaluator.name()))
            .map(|(&id, _)| id)
            .collect()
    }
}

fn record(
    scores: &mut BTreeMap<usize, BTreeMap<String, f64>>,
    flags: &mut BTreeMap<usize, BTreeSet<String>>,
    evaluator: Evaluator,
    result: &EvaluatorResult,
) {
    for (id, (&s, &f)) in result.scores.iter().zip(&result.flags).enumerate() {
        scores.entry(id).or_default().insert(evaluator.name().to_string(), s);
        if f {
            flags.entry(id).or_default().insert(evaluator.name().to_string());
        }
    }
}

/// Runs `evaluators` over `corpus` and removes every flagged sample.
pub fn diagnose(corpus: &AnyCorpus, evaluators: &[Evaluator], cfg: &QualityConfig) -> Result<DatasetEvaluatorOutput> {
    let task = corpus.task();
    if let Some(bad) = evaluators.iter().find(|e| !e.supports(task)) {
        return Err(Error::IncompatibleEvaluator {
            task: task.to_string(),
            name: bad.name().to_string(),
        });
    }
    let wanted: BTreeSet<Evaluator> = evaluators.iter().copied().collect();
    let mut scores: BTreeMap<usize, BTreeMap<String, f64>> = (0..corpus.len()).map(|i| (i, BTreeMap::new())).collect();
    let mut flags = BTreeMap::new();
    let mut cartography = None;
    let mut token_flags = None;

    match corpus {
        AnyCorpus::Classification(c) if !wanted.is_empty() => {
            let needs_trace = [Evaluator::Uncertainty, Evaluator::Pvi, Evaluator::Cartography]
                .iter()
                .any(|e| wanted.contains(e));
            let dynamics = if needs_trace {
                Some(dynamic_tune(c, &cfg.featurizer, &cfg.linear, cfg.epochs, cfg.seed)?)
            } else {
                None
            };
            for &e in &wanted {
                let result = match e {
                    Evaluator::Retag => eval_retag(c, &cfg.featurizer, &cfg.linear, cfg.k_folds, cfg.seed)?,
                    Evaluator::Uncertainty => eval_uncertainty(&dynamics.as_ref().expect("trace").trace, cfg.tau),
                    Evaluator::Pvi => {
                        let d = dynamics.as_ref().expect("trace");
                        eval_pvi(&d.trace, &d.null_trace)?
                    }
                    Evaluator::Cartography => {
                        let (points, result) =
                            eval_cartography(&dynamics.as_ref().expect("trace").trace, &cfg.cartography)?;
                        cartography = Some(points);
                        result
                    }
                    Evaluator::LabelAggregation => unreachable!("checked above"),
                };
                record(&mut scores, &mut flags, e, &result);
            }
        }
        AnyCorpus::Token(c) if !wanted.is_empty() => {
            let tagger = train_token(c, &TokenConfig { seed: cfg.seed, ..cfg.token.clone() })?;
            let out =
                eval_label_aggregation(c, &tagger, cfg.passes, cfg.dropout_rate, &cfg.dawid_skene, cfg.seed)?;
            let result = EvaluatorResult {
                scores: out.scores(),
                flags: out.token_flags.iter().map(|t| t.iter().any(|&f| f)).collect(),
            };
            record(&mut scores, &mut flags, Evaluator::LabelAggregation, &result);
            token_flags = Some(out.token_flags);
        }
        _ => {}
    }

    let kept_ids: Vec<usize> = (0..corpus.len()).filter(|i| !flags.contains_key(i)).collect();
    let filtered = match corpus {
        AnyCorpus::Classification(c) => AnyCorpus::Classification(c.subset(&kept_ids)),
        AnyCorpus::Token(c) => AnyCorpus::Token(c.subset(&kept_ids)),
    };
    Ok(DatasetEvaluatorOutput {
        scores,
        flags,
        filtered,
        kept_ids,
        cartography,
        token_flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_bracket_ner, ClassificationSample, Corpus};

    fn small() -> AnyCorpus {
        let rows = [
            ("play jazz music", "music"),
            ("play rock songs", "music"),
            ("put on music", "music"),
            ("weather today", "weather"),
            ("rain tomorrow weather", "weather"),
            ("is it sunny weather", "weather"),
        ];
        AnyCorpus::Classification(
            Corpus::new(rows.iter().map(|(t, l)| ClassificationSample::new(*t, *l).unwrap()).collect()).unwrap(),
        )
    }

    #[test]
    fn incompatible_evaluators() {
        let ner = AnyCorpus::Token(Corpus::new(vec![parse_bracket_ner("fly to [paris](CITY)").unwrap()]).unwrap());
        let err = diagnose(&ner, &[Evaluator::Cartography], &QualityConfig::default()).unwrap_err();
        assert!(matches!(err, Error::IncompatibleEvaluator { ref name, .. } if name == "cartography"));
        let err = diagnose(&small(), &[Evaluator::LabelAggregation], &QualityConfig::default()).unwrap_err();
        assert!(matches!(err, Error::IncompatibleEvaluator { .. }));
    }

    #[test]
    fn empty_evaluator_set_keeps_everything() {
        let out = diagnose(&small(), &[], &QualityConfig::default()).unwrap();
        assert!(out.flags.is_empty());
        assert_eq!(out.filtered.len(), 6);
        assert_eq!(out.scores.len(), 6);
    }

    #[test]
    fn names_round_trip() {
        for e in Evaluator::ALL {
            assert_eq!(e.name().parse::<Evaluator>().unwrap(), e);
        }
        assert!("voting".parse::<Evaluator>().is_err());
    }

    #[test]
    fn cartography_needs_two_epochs() {
        let cfg = QualityConfig { epochs: 1, ..Default::default() };
        assert!(matches!(diagnose(&small(), &[Evaluator::Cartography], &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn shared_flags_are_one_removal() {
        let cfg = QualityConfig { tau: 1.0, ..Default::default() };
        let out = diagnose(&small(), &[Evaluator::Uncertainty, Evaluator::Cartography], &cfg).unwrap();
        assert_eq!(out.filtered.len() + out.flags.len(), 6);
        for names in out.flags.values() {
            assert!(names.contains("uncertainty"));
        }
        for s in out.scores.values() {
            assert_eq!(s.len(), 2);
        }
    }
}
