//! Classification and entity-level evaluation.
//!
//! Degenerate ratios follow the zero convention: `0 / 0` is reported as `0`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::EntitySpan;
use crate::error::{Error, Result};

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub per_class: BTreeMap<String, ClassMetrics>,
    pub accuracy: f64,
    pub macro_f1: f64,
    /// Macro F1 over every label except the OOD label.
    pub f1_in_scope: f64,
    /// Binary F1 with the OOD label as the positive class.
    pub f1_ood: Option<f64>,
    pub samples: usize,
}

/// One-vs-rest precision, recall, and F1 for every label seen in either
/// sequence. Labels that never occur are absent from the macro average.
pub fn classification_report<G, P>(
    gold: &[G],
    pred: &[P],
    ood_label: Option<&str>,
) -> Result<ClassificationReport>
where
    G: AsRef<str>,
    P: AsRef<str>,
{
    if gold.len() != pred.len() {
        return Err(Error::LengthMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    let labels: BTreeSet<&str> = gold
        .iter()
        .map(AsRef::as_ref)
        .chain(pred.iter().map(AsRef::as_ref))
        .collect();

    let mut per_class = BTreeMap::new();
    for &label in &labels {
        let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
        for (g, p) in gold.iter().zip(pred) {
            match (g.as_ref() == label, p.as_ref() == label) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                _ => {}
            }
        }
        let precision = ratio(tp as f64, (tp + fp) as f64);
        let recall = ratio(tp as f64, (tp + fn_) as f64);
        per_class.insert(
            label.to_string(),
            ClassMetrics {
                precision,
                recall,
                f1: harmonic(precision, recall),
                support: tp + fn_,
            },
        );
    }

    let mean = |it: Vec<f64>| ratio(it.iter().sum(), it.len() as f64);
    let macro_f1 = mean(per_class.values().map(|m| m.f1).collect());
    let f1_in_scope = mean(
        per_class
            .iter()
            .filter(|(l, _)| Some(l.as_str()) != ood_label)
            .map(|(_, m)| m.f1)
            .collect(),
    );
    let f1_ood = ood_label.map(|ood| {
        let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
        for (g, p) in gold.iter().zip(pred) {
            match (g.as_ref() == ood, p.as_ref() == ood) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                _ => {}
            }
        }
        harmonic(
            ratio(tp as f64, (tp + fp) as f64),
            ratio(tp as f64, (tp + fn_) as f64),
        )
    });
    let correct = gold
        .iter()
        .zip(pred)
        .filter(|(g, p)| g.as_ref() == p.as_ref())
        .count();

    Ok(ClassificationReport {
        per_class,
        accuracy: ratio(correct as f64, gold.len() as f64),
        macro_f1,
        f1_in_scope,
        f1_ood,
        samples: gold.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl SchemeScores {
    fn new(precision_num: f64, recall_num: f64, predicted: usize, gold: usize) -> Self {
        let precision = ratio(precision_num, predicted as f64);
        let recall = ratio(recall_num, gold as f64);
        Self {
            precision,
            recall,
            f1: harmonic(precision, recall),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityCounts {
    /// Predictions matching a gold entity in boundaries and type.
    pub correct: usize,
    /// Predictions with exact boundaries but the wrong type.
    pub incorrect_type: usize,
    /// Predictions overlapping a gold entity without exact boundaries.
    pub partial: usize,
    /// Gold entities no prediction overlaps.
    pub missed: usize,
    /// Predictions overlapping no gold entity.
    pub spurious: usize,
    pub gold: usize,
    pub predicted: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntityReport {
    pub strict: SchemeScores,
    pub partial: SchemeScores,
    pub counts: EntityCounts,
}

#[derive(PartialEq)]
enum Credit {
    Exact,
    Overlap,
    None,
}

/// Best match for `span` among `others`, which are sorted and disjoint.
fn best_credit(span: &EntitySpan, others: &[EntitySpan]) -> (Credit, bool) {
    let first = others.partition_point(|o| o.end <= span.start);
    let mut credit = Credit::None;
    for o in &others[first..] {
        if o.start >= span.end {
            break;
        }
        if o.same_bounds(span) {
            return (Credit::Exact, o.label == span.label);
        }
        credit = Credit::Overlap;
    }
    (credit, false)
}

/// Entity-level scores under the strict and partial schemes.
///
/// Strict credits a prediction iff boundaries and type match exactly.
/// Partial ignores type: exact boundaries earn 1, any overlap earns 0.5. The
/// precision numerator sums credit over predictions and the recall numerator
/// over gold entities.
pub fn entity_report(gold: &[Vec<EntitySpan>], pred: &[Vec<EntitySpan>]) -> Result<EntityReport> {
    if gold.len() != pred.len() {
        return Err(Error::LengthMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    let mut counts = EntityCounts::default();
    let (mut partial_p, mut partial_r) = (0.0, 0.0);
    for (g, p) in gold.iter().zip(pred) {
        let mut g = g.clone();
        let mut p = p.clone();
        g.sort();
        p.sort();
        counts.gold += g.len();
        counts.predicted += p.len();
        for span in &p {
            match best_credit(span, &g) {
                (Credit::Exact, true) => {
                    counts.correct += 1;
                    partial_p += 1.0;
                }
                (Credit::Exact, false) => {
                    counts.incorrect_type += 1;
                    partial_p += 1.0;
                }
                (Credit::Overlap, _) => {
                    counts.partial += 1;
                    partial_p += 0.5;
                }
                (Credit::None, _) => counts.spurious += 1,
            }
        }
        for span in &g {
            match best_credit(span, &p).0 {
                Credit::Exact => partial_r += 1.0,
                Credit::Overlap => partial_r += 0.5,
                Credit::None => counts.missed += 1,
            }
        }
    }
    let strict = SchemeScores::new(
        counts.correct as f64,
        counts.correct as f64,
        counts.predicted,
        counts.gold,
    );
    let partial = SchemeScores::new(partial_p, partial_r, counts.predicted, counts.gold);
    Ok(EntityReport {
        strict,
        partial,
        counts,
    })
}

/// Area under the ROC curve with `positives` expected to score higher.
/// Ties count one half.
pub fn auroc(negatives: &[f64], positives: &[f64]) -> f64 {
    if negatives.is_empty() || positives.is_empty() {
        return 0.5;
    }
    let mut all: Vec<(f64, bool)> = negatives
        .iter()
        .map(|&s| (s, false))
        .chain(positives.iter().map(|&s| (s, true)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // rank-sum with midranks for ties
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += all[i..=j].iter().filter(|(_, p)| *p).count() as f64 * mid;
        i = j + 1;
    }
    let np = positives.len() as f64;
    let nn = negatives.len() as f64;
    (rank_sum - np * (np + 1.0) / 2.0) / (np * nn)
}
