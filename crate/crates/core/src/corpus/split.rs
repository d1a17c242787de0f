use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::{Corpus, Sample, Task};
use crate::error::{Error, Result};
use crate::rng::seeded;

#[derive(Clone, Debug)]
pub struct SplitPair<S> {
    pub train: Corpus<S>,
    pub test: Corpus<S>,
    /// Indices into the source corpus, ascending.
    pub train_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
    pub seed: u64,
}

/// Per-class test count: `round(fraction * n)` clamped to `[1, n - 1]`.
pub(crate) fn test_count(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64).round() as usize).clamp(1, n.saturating_sub(1).max(1))
}

/// Splits a corpus so that every stratum is represented on both sides.
///
/// Classification strata are labels. NER strata are the set of entity types a
/// sample contains; strata with a single sample stay in train.
pub fn stratified_split<S: Sample>(
    corpus: &Corpus<S>,
    test_fraction: f64,
    seed: u64,
) -> Result<SplitPair<S>> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!(
            "test_fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    for (label, &count) in corpus.class_counts() {
        if count < 2 {
            return Err(Error::insufficient(label, count, 2));
        }
    }

    let mut strata: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, s) in corpus.samples().iter().enumerate() {
        strata.entry(s.strata()).or_default().push(i);
    }

    let mut rng = seeded(seed, "stratified_split");
    let mut train_ids = Vec::with_capacity(corpus.len());
    let mut test_ids = Vec::new();
    for (key, mut ids) in strata {
        if ids.len() < 2 {
            match S::TASK {
                Task::Classification => return Err(Error::insufficient(key, ids.len(), 2)),
                Task::TokenClassification => {
                    train_ids.extend(ids);
                    continue;
                }
            }
        }
        ids.shuffle(&mut rng);
        let t = test_count(ids.len(), test_fraction);
        test_ids.extend_from_slice(&ids[..t]);
        train_ids.extend_from_slice(&ids[t..]);
    }
    train_ids.sort_unstable();
    test_ids.sort_unstable();

    Ok(SplitPair {
        train: corpus.subset(&train_ids),
        test: corpus.subset(&test_ids),
        train_ids,
        test_ids,
        seed,
    })
}
