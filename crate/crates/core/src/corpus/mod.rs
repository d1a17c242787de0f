//! Labelled corpora for classification and token classification.
//!
//! A [`Corpus`] owns its samples and keeps per-class accounting (`class_counts`,
//! `n_min`) consistent with them. For NER corpora the accounting unit is the
//! entity type, counted once per sample in which it occurs.

mod io;
mod ner;
pub(crate) mod split;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{
    load_bracket_ner, load_classification, load_ner_jsonl, write_classification_jsonl,
    CorpusFormat,
};
pub use ner::{
    from_bio, parse_bracket_ner, to_bio, tokenize, BioTag, EntitySpan, NerSample, Token,
};
pub use split::{stratified_split, SplitPair};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classification,
    TokenClassification,
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Task::Classification => f.write_str("classification"),
            Task::TokenClassification => f.write_str("token_classification"),
        }
    }
}

/// Behaviour shared by the two sample kinds.
pub trait Sample: Clone + Send + Sync + 'static {
    const TASK: Task;

    fn text(&self) -> &str;

    /// Accounting keys: the label for classification, the distinct entity
    /// types present for NER.
    fn keys(&self) -> Vec<&str>;

    /// Key used to stratify splits.
    fn strata(&self) -> String;
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationSample {
    pub text: String,
    pub label: String,
}

impl ClassificationSample {
    pub fn new(text: impl Into<String>, label: impl Into<String>) -> Result<Self> {
        let sample = Self {
            text: text.into(),
            label: label.into(),
        };
        sample.validate()?;
        Ok(sample)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.text.trim().is_empty() {
            return Err(Error::Config("sample text is empty".into()));
        }
        if self.label.trim().is_empty() {
            return Err(Error::Config("sample label is empty".into()));
        }
        Ok(())
    }
}

impl Sample for ClassificationSample {
    const TASK: Task = Task::Classification;

    fn text(&self) -> &str {
        &self.text
    }

    fn keys(&self) -> Vec<&str> {
        vec![self.label.as_str()]
    }

    fn strata(&self) -> String {
        self.label.clone()
    }
}

/// An immutable, validated collection of samples.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Corpus<S> {
    samples: Vec<S>,
    class_counts: BTreeMap<String, usize>,
}

pub type ClassificationCorpus = Corpus<ClassificationSample>;
pub type NerCorpus = Corpus<NerSample>;

impl<S: Sample> Corpus<S> {
    /// Builds a corpus and computes its class accounting.
    ///
    /// Classification corpora need at least two labels; NER corpora need at
    /// least one entity type.
    pub fn new(samples: Vec<S>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let class_counts = count_keys(&samples);
        match S::TASK {
            Task::Classification if class_counts.len() < 2 => {
                let only = class_counts.keys().next().cloned().unwrap_or_default();
                return Err(Error::SingleClass(only));
            }
            Task::TokenClassification if class_counts.is_empty() => {
                return Err(Error::Config("NER corpus contains no entities".into()));
            }
            _ => {}
        }
        Ok(Self {
            samples,
            class_counts,
        })
    }

    /// Builds a corpus without the label-cardinality checks. Used for
    /// held-out test sets, which may legitimately hold a single class.
    pub fn new_unchecked(samples: Vec<S>) -> Self {
        let class_counts = count_keys(&samples);
        Self {
            samples,
            class_counts,
        }
    }

    pub fn task(&self) -> Task {
        S::TASK
    }

    pub fn samples(&self) -> &[S] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<S> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn class_counts(&self) -> &BTreeMap<String, usize> {
        &self.class_counts
    }

    /// Labels (or entity types) in sorted order.
    pub fn labels(&self) -> Vec<String> {
        self.class_counts.keys().cloned().collect()
    }

    pub fn n_min(&self) -> usize {
        self.class_counts.values().copied().min().unwrap_or(0)
    }

    pub fn texts(&self) -> Vec<&str> {
        self.samples.iter().map(|s| s.text()).collect()
    }

    /// A new corpus holding the samples at `ids`, in the given order.
    pub fn subset(&self, ids: &[usize]) -> Self {
        Self::new_unchecked(ids.iter().map(|&i| self.samples[i].clone()).collect())
    }
}

impl ClassificationCorpus {
    pub fn gold_labels(&self) -> Vec<&str> {
        self.samples.iter().map(|s| s.label.as_str()).collect()
    }
}

fn count_keys<S: Sample>(samples: &[S]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for s in samples {
        for key in s.keys() {
            *counts.entry(key.to_string()).or_insert(0) += 1;
        }
    }
    counts
}

/// Either kind of corpus, for code paths that dispatch on the task.
#[derive(Clone, Debug)]
pub enum AnyCorpus {
    Classification(ClassificationCorpus),
    Token(NerCorpus),
}

impl AnyCorpus {
    pub fn task(&self) -> Task {
        match self {
            AnyCorpus::Classification(_) => Task::Classification,
            AnyCorpus::Token(_) => Task::TokenClassification,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            AnyCorpus::Classification(c) => c.len(),
            AnyCorpus::Token(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
