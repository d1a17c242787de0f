//! OOD benchmark construction and the two evaluation protocols.
//!
//! Retained classes are split into in-distribution and held-out (mid OOD)
//! groups. The test set is topped up with mid, far and very-far OOD samples
//! up to a budget, and every sampling decision is written to a manifest that
//! [`replay`] turns back into the same benchmark.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{gibberish, GibberishConfig};
use crate::corpus::split::test_count;
use crate::corpus::{ClassificationCorpus, ClassificationSample, Corpus};
use crate::error::{Error, Result};
use crate::metrics::ClassificationReport;
use crate::ood::OUT_OF_SCOPE;
use crate::pipeline::{train_classification, PipelineConfig, TrainReport};
use crate::rng::seeded;

/// Size of the gibberish pool very-far OOD samples are drawn from.
pub const GIBBERISH_POOL: usize = 1000;
pub const FULL_RUN_RETENTION: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// OOD samples join training under an explicit out-of-scope label.
    OodAware,
    /// OOD samples appear only at test time.
    OodInTest,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OodType {
    Close,
    Mid,
    Far,
    VeryFar,
}

impl fmt::Display for OodType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OodType::Close => "close",
            OodType::Mid => "mid",
            OodType::Far => "far",
            OodType::VeryFar => "very_far",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub id_class_fraction: f64,
    pub train_fraction: f64,
    /// Inclusive per-class training count range for few-shot runs.
    pub n_shot_range: Option<(usize, usize)>,
    pub protocol: Protocol,
    /// Adds held-out classes sharing a scenario with an ID class as a fourth
    /// OOD type. The scenario is the label prefix before `scenario_separator`.
    pub close_ood: bool,
    pub scenario_separator: String,
    pub gibberish: GibberishConfig,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            id_class_fraction: 0.8,
            train_fraction: 0.9,
            n_shot_range: None,
            protocol: Protocol::OodInTest,
            close_ood: false,
            scenario_separator: "_".into(),
            gibberish: GibberishConfig::default(),
            seed: 0,
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        let open = |v: f64| v > 0.0 && v < 1.0;
        if !open(self.id_class_fraction) || !open(self.train_fraction) {
            return Err(Error::Config("id_class_fraction and train_fraction must lie in (0, 1)".into()));
        }
        if let Some((lo, hi)) = self.n_shot_range {
            if lo == 0 || lo > hi {
                return Err(Error::Config(format!("invalid n_shot_range ({lo}, {hi})")));
            }
        }
        self.gibberish.validate()
    }

    /// Minimum training count for a class to be retained.
    pub fn retention_min(&self) -> usize {
        self.n_shot_range.map_or(FULL_RUN_RETENTION, |(_, hi)| hi)
    }

    fn ood_types(&self) -> Vec<OodType> {
        let mut t = Vec::new();
        if self.close_ood {
            t.push(OodType::Close);
        }
        t.extend([OodType::Mid, OodType::Far, OodType::VeryFar]);
        t
    }
}

/// 95th percentile by the nearest-rank rule: the value at rank
/// `ceil(0.95 n)` of the sorted sizes.
pub fn nearest_rank_p95(sizes: &[usize]) -> usize {
    if sizes.is_empty() {
        return 0;
    }
    let mut s = sizes.to_vec();
    s.sort_unstable();
    let rank = (0.95 * s.len() as f64).ceil() as usize;
    s[rank.clamp(1, s.len()) - 1]
}

/// Equal split with the remainder going one each to the last parts.
pub fn split_budget(total: usize, parts: usize) -> Vec<usize> {
    if parts == 0 {
        return Vec::new();
    }
    let base = total / parts;
    let rem = total % parts;
    (0..parts).map(|i| base + usize::from(i >= parts - rem)).collect()
}

/// Far-OOD source for the public intent datasets, or `custom` when given.
pub fn far_ood_pairing(dataset: &str, custom: &BTreeMap<String, String>) -> Result<String> {
    if let Some(s) = custom.get(dataset) {
        return Ok(s.clone());
    }
    let name = match dataset.to_ascii_lowercase().as_str() {
        "banking77" => "HWU64",
        "hwu64" | "massive" | "snips" => "Banking77",
        _ => return Err(Error::UnknownDataset(dataset.to_string())),
    };
    Ok(name.to_string())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "source")]
pub enum OodPick {
    Corpus { ood_type: OodType, index: usize },
    Far { index: usize },
    Gibberish { text: String },
}

impl OodPick {
    pub fn ood_type(&self) -> OodType {
        match self {
            OodPick::Corpus { ood_type, .. } => *ood_type,
            OodPick::Far { .. } => OodType::Far,
            OodPick::Gibberish { .. } => OodType::VeryFar,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OodAssembly {
    pub test_budget: usize,
    pub test_budgets: BTreeMap<OodType, usize>,
    pub train_budget: usize,
    pub train_budgets: BTreeMap<OodType, usize>,
    /// Types whose source ran short and was sampled with replacement.
    pub with_replacement: BTreeSet<OodType>,
    /// Types with no source at all; their budget is unfilled.
    pub missing: BTreeSet<OodType>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkManifest {
    pub config: BenchmarkConfig,
    pub id_classes: Vec<String>,
    pub mid_classes: Vec<String>,
    pub close_classes: Vec<String>,
    /// Classes removed by the retention filter or the few-shot minimum.
    pub dropped_classes: Vec<String>,
    /// Training count drawn per class in few-shot runs.
    pub shots: BTreeMap<String, usize>,
    pub train_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
    pub ood_train: Vec<OodPick>,
    pub ood_test: Vec<OodPick>,
    pub assembly: OodAssembly,
}

#[derive(Clone, Debug)]
pub struct Benchmark {
    pub train: ClassificationCorpus,
    /// ID test samples followed by OOD samples labeled out-of-scope.
    pub test: ClassificationCorpus,
    pub test_types: Vec<Option<OodType>>,
    pub manifest: BenchmarkManifest,
}

impl Benchmark {
    pub fn assembly(&self) -> &OodAssembly {
        &self.manifest.assembly
    }

    pub fn ood_test_count(&self) -> usize {
        self.test_types.iter().filter(|t| t.is_some()).count()
    }
}

/// Draws `k` items from `pool`, consuming it; falls back to sampling with
/// replacement from `all` when the pool runs out.
fn draw<R: Rng>(pool: &mut Vec<usize>, all: &[usize], k: usize, rng: &mut R) -> (Vec<usize>, bool) {
    let take = k.min(pool.len());
    let mut out: Vec<usize> = pool.drain(..take).collect();
    let short = out.len() < k;
    while out.len() < k {
        out.push(all[rng.random_range(0..all.len())]);
    }
    (out, short)
}

fn scenario<'a>(label: &'a str, sep: &str) -> &'a str {
    label.split_once(sep).map_or(label, |(s, _)| s)
}

/// Builds a benchmark from `corpus`, using `far` as the far-OOD source.
pub fn build_benchmark(
    corpus: &ClassificationCorpus,
    far: Option<&ClassificationCorpus>,
    cfg: &BenchmarkConfig,
) -> Result<Benchmark> {
    cfg.validate()?;
    let mut rng = seeded(cfg.seed, "benchmark");
    let test_fraction = 1.0 - cfg.train_fraction;
    let train_count = |n: usize| n - test_count(n, test_fraction);

    let mut dropped: Vec<String> = Vec::new();
    let mut retained: Vec<String> = Vec::new();
    for (label, &n) in corpus.class_counts() {
        if label != OUT_OF_SCOPE && n >= 2 && train_count(n) >= cfg.retention_min() {
            retained.push(label.clone());
        } else {
            dropped.push(label.clone());
        }
    }
    retained.shuffle(&mut rng);
    let n_id = ((cfg.id_class_fraction * retained.len() as f64).round() as usize).min(retained.len());
    if n_id < 2 {
        return Err(Error::NotEnoughClasses {
            available: n_id,
            required: 2,
        });
    }
    let mut id_classes: Vec<String> = retained[..n_id].to_vec();
    let held_out: Vec<String> = retained[n_id..].to_vec();
    id_classes.sort();
    let id_scenarios: BTreeSet<&str> = id_classes.iter().map(|l| scenario(l, &cfg.scenario_separator)).collect();
    let (mut close_classes, mut mid_classes): (Vec<String>, Vec<String>) = if cfg.close_ood {
        held_out
            .into_iter()
            .partition(|l| id_scenarios.contains(scenario(l, &cfg.scenario_separator)))
    } else {
        (Vec::new(), held_out)
    };
    close_classes.sort();
    mid_classes.sort();

    let mut by_label: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in corpus.samples().iter().enumerate() {
        by_label.entry(s.label.as_str()).or_default().push(i);
    }

    let mut train_ids = Vec::new();
    let mut test_ids = Vec::new();
    let mut shots = BTreeMap::new();
    let mut kept_id = Vec::new();
    for label in &id_classes {
        let mut ids = by_label[label.as_str()].clone();
        ids.shuffle(&mut rng);
        let t = test_count(ids.len(), test_fraction);
        let (test, train) = ids.split_at(t);
        let train = match cfg.n_shot_range {
            Some((lo, hi)) => {
                let want = rng.random_range(lo..=hi);
                if train.len() < lo {
                    dropped.push(label.clone());
                    continue;
                }
                let n = want.min(train.len());
                shots.insert(label.clone(), n);
                &train[..n]
            }
            None => train,
        };
        kept_id.push(label.clone());
        train_ids.extend_from_slice(train);
        test_ids.extend_from_slice(test);
    }
    if kept_id.len() < 2 {
        return Err(Error::NotEnoughClasses {
            available: kept_id.len(),
            required: 2,
        });
    }
    dropped.sort();
    train_ids.sort_unstable();
    test_ids.sort_unstable();

    let mut test_sizes: BTreeMap<&str, usize> = BTreeMap::new();
    for &i in &test_ids {
        *test_sizes.entry(corpus.samples()[i].label.as_str()).or_default() += 1;
    }
    let types = cfg.ood_types();
    let test_budget = nearest_rank_p95(&test_sizes.values().copied().collect::<Vec<_>>());
    let train_budget = match cfg.protocol {
        Protocol::OodAware => train_ids.len() / 2,
        Protocol::OodInTest => 0,
    };
    let test_budgets: BTreeMap<OodType, usize> = types.iter().copied().zip(split_budget(test_budget, types.len())).collect();
    let train_budgets: BTreeMap<OodType, usize> =
        types.iter().copied().zip(split_budget(train_budget, types.len())).collect();

    let gib_cfg = GibberishConfig {
        seed: cfg.seed ^ cfg.gibberish.seed,
        ..cfg.gibberish.clone()
    };
    let gib_pool_texts = gibberish(&gib_cfg, GIBBERISH_POOL)?;
    let mut assembly = OodAssembly {
        test_budget,
        test_budgets: test_budgets.clone(),
        train_budget,
        train_budgets: train_budgets.clone(),
        with_replacement: BTreeSet::new(),
        missing: BTreeSet::new(),
    };
    let mut ood_test = Vec::new();
    let mut ood_train = Vec::new();
    for ty in types {
        let all: Vec<usize> = match ty {
            OodType::Close | OodType::Mid => {
                let classes = if ty == OodType::Close { &close_classes } else { &mid_classes };
                classes.iter().flat_map(|l| by_label[l.as_str()].iter().copied()).collect()
            }
            OodType::Far => far.map_or(Vec::new(), |f| (0..f.len()).collect()),
            OodType::VeryFar => (0..gib_pool_texts.len()).collect(),
        };
        let need = test_budgets[&ty] + train_budgets[&ty];
        if all.is_empty() {
            if need > 0 {
                assembly.missing.insert(ty);
            }
            continue;
        }
        let mut pool = all.clone();
        pool.shuffle(&mut rng);
        let (te, short_te) = draw(&mut pool, &all, test_budgets[&ty], &mut rng);
        let (tr, short_tr) = draw(&mut pool, &all, train_budgets[&ty], &mut rng);
        if short_te || short_tr {
            assembly.with_replacement.insert(ty);
        }
        let pick = |i: usize| match ty {
            OodType::Close | OodType::Mid => OodPick::Corpus { ood_type: ty, index: i },
            OodType::Far => OodPick::Far { index: i },
            OodType::VeryFar => OodPick::Gibberish {
                text: gib_pool_texts[i].clone(),
            },
        };
        ood_test.extend(te.into_iter().map(pick));
        ood_train.extend(tr.into_iter().map(pick));
    }
    if !assembly.missing.is_empty() {
        log::warn!("benchmark OOD types without a source: {:?}", assembly.missing);
    }

    let manifest = BenchmarkManifest {
        config: cfg.clone(),
        id_classes: kept_id,
        mid_classes,
        close_classes,
        dropped_classes: dropped,
        shots,
        train_ids,
        test_ids,
        ood_train,
        ood_test,
        assembly,
    };
    replay(&manifest, corpus, far)
}

fn resolve_pick(pick: &OodPick, corpus: &ClassificationCorpus, far: Option<&ClassificationCorpus>) -> Result<String> {
    let out_of_range = |i: usize| Error::Integrity(format!("manifest index {i} out of range"));
    Ok(match pick {
        OodPick::Corpus { index, .. } => corpus.samples().get(*index).ok_or_else(|| out_of_range(*index))?.text.clone(),
        OodPick::Far { index } => far
            .ok_or_else(|| Error::Config("manifest needs a far-OOD corpus".into()))?
            .samples()
            .get(*index)
            .ok_or_else(|| out_of_range(*index))?
            .text
            .clone(),
        OodPick::Gibberish { text } => text.clone(),
    })
}

/// Rebuilds the benchmark described by `manifest`.
pub fn replay(
    manifest: &BenchmarkManifest,
    corpus: &ClassificationCorpus,
    far: Option<&ClassificationCorpus>,
) -> Result<Benchmark> {
    let sample = |i: usize| -> Result<ClassificationSample> {
        corpus
            .samples()
            .get(i)
            .cloned()
            .ok_or_else(|| Error::Integrity(format!("manifest index {i} out of range")))
    };
    let mut train: Vec<ClassificationSample> = manifest.train_ids.iter().map(|&i| sample(i)).collect::<Result<_>>()?;
    for p in &manifest.ood_train {
        train.push(ClassificationSample::new(resolve_pick(p, corpus, far)?, OUT_OF_SCOPE)?);
    }
    let mut test: Vec<ClassificationSample> = manifest.test_ids.iter().map(|&i| sample(i)).collect::<Result<_>>()?;
    let mut test_types = vec![None; test.len()];
    for p in &manifest.ood_test {
        test.push(ClassificationSample::new(resolve_pick(p, corpus, far)?, OUT_OF_SCOPE)?);
        test_types.push(Some(p.ood_type()));
    }
    Ok(Benchmark {
        train: Corpus::new(train)?,
        test: Corpus::new_unchecked(test),
        test_types,
        manifest: manifest.clone(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub protocol: Protocol,
    pub report: ClassificationReport,
    pub train: TrainReport,
}

/// Trains on the benchmark and scores the routed test predictions.
/// Under [`Protocol::OodAware`] the out-of-scope label is a regular class
/// backed by the explicit-class detector.
pub fn run_protocol(bench: &Benchmark, cfg: &PipelineConfig) -> Result<ProtocolReport> {
    let protocol = bench.manifest.config.protocol;
    let mut cfg = cfg.clone();
    if protocol == Protocol::OodAware {
        cfg.ood.method = crate::ood::OodMethod::ExplicitOutOfScopeClass.flag().into();
    }
    let outcome = train_classification(&bench.train, Some(&bench.test), &cfg, None)?;
    let report = outcome
        .report
        .routed
        .clone()
        .ok_or_else(|| Error::Config("pipeline produced no classification report".into()))?;
    Ok(ProtocolReport {
        protocol,
        report,
        train: outcome.report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_and_split() {
        assert_eq!(nearest_rank_p95(&[100, 100, 100, 200]), 200);
        assert_eq!(split_budget(200, 3), vec![66, 67, 67]);
        assert_eq!(split_budget(9, 3), vec![3, 3, 3]);
        assert_eq!(split_budget(5, 4), vec![1, 1, 1, 2]);
        let sizes: Vec<usize> = (1..=20).collect();
        assert_eq!(nearest_rank_p95(&sizes), 19);
        assert_eq!(nearest_rank_p95(&[7]), 7);
    }

    #[test]
    fn pairings() {
        let none = BTreeMap::new();
        assert_eq!(far_ood_pairing("Banking77", &none).unwrap(), "HWU64");
        assert_eq!(far_ood_pairing("HWU64", &none).unwrap(), "Banking77");
        assert_eq!(far_ood_pairing("MASSIVE", &none).unwrap(), "Banking77");
        assert_eq!(far_ood_pairing("SNIPS", &none).unwrap(), "Banking77");
        assert!(matches!(far_ood_pairing("CLINC", &none), Err(Error::UnknownDataset(_))));
        let custom: BTreeMap<String, String> = [("CLINC".to_string(), "SNIPS".to_string())].into();
        assert_eq!(far_ood_pairing("CLINC", &custom).unwrap(), "SNIPS");
    }
}
