//! Self-describing model directories and batched inference over them.
//!
//! A bundle holds `meta.json`, `labels.json`, `weights.bin` and, for anchored
//! classifiers, `anchors.json`. Weight blocks are little-endian `f32` in the
//! order listed by the manifest in `meta.json`, and the file digest is
//! checked on load.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{BioTag, EntitySpan, Task};
use crate::embed::Featurizer;
use crate::error::{Error, Result};
use crate::ood::{Calibration, MahalanobisStats, OodDetector, OodMethod, OodScorer, OUT_OF_SCOPE};
use crate::train::{Anchors, Classifier, Matrix, RegimeDecision, TokenTagger};

pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_BATCH_CEILING: usize = 256;

pub const META_FILE: &str = "meta.json";
pub const LABELS_FILE: &str = "labels.json";
pub const WEIGHTS_FILE: &str = "weights.bin";
pub const ANCHORS_FILE: &str = "anchors.json";

const TOKEN_METHOD: &str = "token_tagger";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockShape {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

impl BlockShape {
    fn new(name: &str, rows: usize, cols: usize) -> Self {
        Self {
            name: name.to_string(),
            rows,
            cols,
        }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OodMeta {
    pub base_threshold: f64,
    pub threshold_factor: f64,
    pub f1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_index: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub format_version: u32,
    pub task: Task,
    pub method: String,
    pub ood_method: String,
    pub featurizer: Featurizer,
    pub created_unix: u64,
    pub blocks: Vec<BlockShape>,
    pub weights_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ood: Option<OodMeta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<RegimeDecision>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct AnchorsFile {
    descriptions: Vec<String>,
    margin: f64,
}

/// What a bundle contains.
#[derive(Clone, Debug, PartialEq)]
pub enum BundleModel {
    Classification {
        classifier: Classifier,
        detector: Option<OodDetector>,
    },
    Token(TokenTagger),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelBundle {
    pub meta: BundleMeta,
    pub model: BundleModel,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn push_block(blocks: &mut Vec<BlockShape>, bytes: &mut Vec<u8>, name: &str, rows: usize, cols: usize, data: &[f32]) {
    debug_assert_eq!(rows * cols, data.len());
    blocks.push(BlockShape::new(name, rows, cols));
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
}

/// Writes `model` to `dir`, creating it if needed.
pub fn save(model: &BundleModel, dir: impl AsRef<Path>) -> Result<ModelBundle> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut blocks = Vec::new();
    let mut bytes = Vec::new();
    let created_unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());

    let (task, method, ood_method, featurizer, labels, ood, regime) = match model {
        BundleModel::Classification { classifier, detector } => {
            let k = classifier.labels().len();
            if let Some(p) = classifier.projection() {
                push_block(&mut blocks, &mut bytes, "projection", p.rows, p.cols, &p.data);
            }
            let w = classifier.weights();
            push_block(&mut blocks, &mut bytes, "weights", w.rows, w.cols, &w.data);
            push_block(&mut blocks, &mut bytes, "bias", 1, k, classifier.bias());
            if let Some(a) = classifier.anchors() {
                let e = &a.embeddings;
                push_block(&mut blocks, &mut bytes, "anchor_embeddings", e.rows, e.cols, &e.data);
                let file = AnchorsFile {
                    descriptions: a.descriptions.clone(),
                    margin: a.margin,
                };
                write_file(&dir.join(ANCHORS_FILE), &serde_json::to_vec_pretty(&file)?)?;
            } else {
                remove_stale(&dir.join(ANCHORS_FILE))?;
            }
            let ood = detector.as_ref().map(|d| {
                let class_index = match &d.scorer {
                    OodScorer::Mahalanobis(stats) => {
                        let n = stats.dim();
                        push_block(&mut blocks, &mut bytes, "ood_mean", 1, n, stats.mean());
                        push_block(&mut blocks, &mut bytes, "ood_precision", n, n, stats.precision());
                        None
                    }
                    OodScorer::MaxSoftmax => None,
                    OodScorer::OutOfScopeClass { index } => Some(*index),
                };
                OodMeta {
                    base_threshold: d.calibration.base_threshold,
                    threshold_factor: d.calibration.threshold_factor,
                    f1: d.calibration.f1,
                    class_index,
                }
            });
            (
                Task::Classification,
                classifier.method().name().to_string(),
                detector.as_ref().map_or("none", |d| d.method().flag()).to_string(),
                classifier.featurizer().clone(),
                classifier.labels().to_vec(),
                ood,
                Some(classifier.trained_with().clone()),
            )
        }
        BundleModel::Token(tagger) => {
            let w = tagger.weights();
            push_block(&mut blocks, &mut bytes, "weights", w.rows, w.cols, &w.data);
            push_block(&mut blocks, &mut bytes, "bias", 1, tagger.tags().len(), tagger.bias());
            remove_stale(&dir.join(ANCHORS_FILE))?;
            (
                Task::TokenClassification,
                TOKEN_METHOD.to_string(),
                "none".to_string(),
                tagger.feature_config().clone(),
                tagger.tags().iter().map(ToString::to_string).collect(),
                None,
                None,
            )
        }
    };

    let meta = BundleMeta {
        format_version: FORMAT_VERSION,
        task,
        method,
        ood_method,
        featurizer,
        created_unix,
        blocks,
        weights_sha256: hex(&Sha256::digest(&bytes)),
        ood,
        regime,
    };
    write_file(&dir.join(WEIGHTS_FILE), &bytes)?;
    write_file(&dir.join(LABELS_FILE), &serde_json::to_vec_pretty(&labels)?)?;
    write_file(&dir.join(META_FILE), &serde_json::to_vec_pretty(&meta)?)?;
    Ok(ModelBundle {
        meta,
        model: model.clone(),
    })
}

fn remove_stale(path: &Path) -> Result<()> {
    match std::fs::remove_file(path) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(Error::io(path, e)),
        _ => Ok(()),
    }
}

struct Blocks {
    shapes: Vec<BlockShape>,
    data: Vec<Vec<f32>>,
}

impl Blocks {
    fn take(&mut self, name: &str) -> Option<(BlockShape, Vec<f32>)> {
        let i = self.shapes.iter().position(|s| s.name == name)?;
        Some((self.shapes.remove(i), self.data.remove(i)))
    }

    fn require(&mut self, name: &str) -> Result<(BlockShape, Vec<f32>)> {
        self.take(name).ok_or_else(|| Error::Integrity(format!("missing weight block `{name}`")))
    }

    fn matrix(&mut self, name: &str) -> Result<Matrix> {
        let (s, d) = self.require(name)?;
        Matrix::new(s.rows, s.cols, d)
    }

    fn finish(self) -> Result<()> {
        match self.shapes.first() {
            Some(s) => Err(Error::Integrity(format!("unexpected weight block `{}`", s.name))),
            None => Ok(()),
        }
    }
}

fn read_blocks(meta: &BundleMeta, bytes: &[u8]) -> Result<Blocks> {
    let expected: usize = meta.blocks.iter().map(BlockShape::len).sum::<usize>() * 4;
    if bytes.len() != expected {
        return Err(Error::Integrity(format!(
            "{WEIGHTS_FILE} holds {} bytes, manifest declares {expected}",
            bytes.len()
        )));
    }
    let digest = hex(&Sha256::digest(bytes));
    if digest != meta.weights_sha256 {
        return Err(Error::Integrity(format!("{WEIGHTS_FILE} digest mismatch")));
    }
    let mut data = Vec::with_capacity(meta.blocks.len());
    let mut at = 0;
    for shape in &meta.blocks {
        let n = shape.len() * 4;
        data.push(
            bytes[at..at + n]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
        );
        at += n;
    }
    Ok(Blocks {
        shapes: meta.blocks.clone(),
        data,
    })
}

/// Reads and validates a bundle directory.
pub fn load(dir: impl AsRef<Path>) -> Result<ModelBundle> {
    let dir = dir.as_ref();
    let raw: serde_json::Value = serde_json::from_slice(&read_file(&dir.join(META_FILE))?)?;
    let found = raw.get("format_version").and_then(serde_json::Value::as_u64).unwrap_or(0) as u32;
    if found != FORMAT_VERSION {
        return Err(Error::Version {
            found,
            expected: FORMAT_VERSION,
        });
    }
    let meta: BundleMeta = serde_json::from_value(raw)?;
    meta.featurizer.validate()?;
    let labels: Vec<String> = serde_json::from_slice(&read_file(&dir.join(LABELS_FILE))?)?;
    let mut blocks = read_blocks(&meta, &read_file(&dir.join(WEIGHTS_FILE))?)?;

    let model = match meta.task {
        Task::TokenClassification => {
            let tags = labels.iter().map(|t| t.parse::<BioTag>()).collect::<Result<Vec<_>>>()?;
            let weights = blocks.matrix("weights")?;
            let (_, bias) = blocks.require("bias")?;
            blocks.finish()?;
            BundleModel::Token(TokenTagger::from_parts(meta.featurizer.clone(), tags, weights, bias)?)
        }
        Task::Classification => {
            let projection = blocks.take("projection").map(|(s, d)| Matrix::new(s.rows, s.cols, d)).transpose()?;
            let weights = blocks.matrix("weights")?;
            let (_, bias) = blocks.require("bias")?;
            let anchors = match blocks.take("anchor_embeddings") {
                Some((s, d)) => {
                    let path = dir.join(ANCHORS_FILE);
                    let file: AnchorsFile = serde_json::from_slice(&read_file(&path)?)?;
                    Some(Anchors {
                        descriptions: file.descriptions,
                        embeddings: Matrix::new(s.rows, s.cols, d)?,
                        margin: file.margin,
                    })
                }
                None => None,
            };
            let regime = meta.regime.clone().ok_or_else(|| Error::Integrity("meta.json lacks regime".into()))?;
            if regime.method.name() != meta.method {
                return Err(Error::Integrity(format!("method `{}` disagrees with regime", meta.method)));
            }
            let classifier =
                Classifier::from_parts(labels, meta.featurizer.clone(), projection, weights, bias, anchors, regime)?;
            let detector = match OodMethod::from_flag(&meta.ood_method)? {
                None => None,
                Some(method) => {
                    let ood = meta.ood.as_ref().ok_or_else(|| Error::Integrity("meta.json lacks ood block".into()))?;
                    let scorer = match method {
                        OodMethod::MarginalMahalanobis => {
                            let (_, mean) = blocks.require("ood_mean")?;
                            let (_, precision) = blocks.require("ood_precision")?;
                            OodScorer::Mahalanobis(MahalanobisStats::new(mean, precision)?)
                        }
                        OodMethod::MaxSoftmaxProb => OodScorer::MaxSoftmax,
                        OodMethod::ExplicitOutOfScopeClass => {
                            let index = ood
                                .class_index
                                .filter(|&i| i < classifier.labels().len())
                                .ok_or_else(|| Error::Integrity("explicit OOD class index invalid".into()))?;
                            OodScorer::OutOfScopeClass { index }
                        }
                    };
                    Some(OodDetector {
                        scorer,
                        calibration: Calibration {
                            base_threshold: ood.base_threshold,
                            threshold_factor: ood.threshold_factor,
                            f1: ood.f1,
                        },
                    })
                }
            };
            blocks.finish()?;
            BundleModel::Classification { classifier, detector }
        }
    };
    Ok(ModelBundle { meta, model })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledPrediction {
    pub label: String,
    pub confidence: f64,
    pub ood: bool,
    pub ood_score: Option<f64>,
}

/// Predicts one text; flagged inputs are relabeled [`OUT_OF_SCOPE`].
pub fn classify(classifier: &Classifier, detector: Option<&OodDetector>, text: &str) -> Result<LabeledPrediction> {
    let p = classifier.predict(text);
    let mut label = classifier.labels()[p.label].clone();
    let (mut ood, ood_score) = match detector {
        Some(d) => {
            let s = d.score(&p.features, &p.logits)?;
            (d.is_ood(s), Some(s))
        }
        None => (false, None),
    };
    ood |= label == OUT_OF_SCOPE;
    if ood {
        label = OUT_OF_SCOPE.to_string();
    }
    Ok(LabeledPrediction {
        label,
        confidence: p.confidence,
        ood,
        ood_score,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchStats {
    pub batches: usize,
    pub retries: usize,
    /// Batch size in effect when the call finished.
    pub batch_size: usize,
}

/// Loaded bundle plus a batch-size ceiling. Immutable; calls may run
/// concurrently.
#[derive(Clone, Debug)]
pub struct InferenceManager {
    bundle: ModelBundle,
    ceiling: usize,
    source: Option<PathBuf>,
}

impl InferenceManager {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let bundle = load(dir.as_ref())?;
        Ok(Self {
            bundle,
            ceiling: DEFAULT_BATCH_CEILING,
            source: Some(dir.as_ref().to_path_buf()),
        })
    }

    pub fn from_bundle(bundle: ModelBundle) -> Self {
        Self {
            bundle,
            ceiling: DEFAULT_BATCH_CEILING,
            source: None,
        }
    }

    pub fn with_ceiling(mut self, ceiling: usize) -> Self {
        self.ceiling = ceiling.max(1);
        self
    }

    pub fn ceiling(&self) -> usize {
        self.ceiling
    }

    pub fn bundle(&self) -> &ModelBundle {
        &self.bundle
    }

    pub fn source(&self) -> Option<&Path> {
        self.source.as_deref()
    }

    pub fn task(&self) -> Task {
        self.bundle.meta.task
    }

    fn run_batches<T: Send>(
        &self,
        n: usize,
        width: usize,
        mut fails: impl FnMut(usize) -> bool,
        process: impl Fn(std::ops::Range<usize>) -> Result<Vec<T>>,
    ) -> Result<(Vec<T>, BatchStats)> {
        let mut out = Vec::with_capacity(n);
        let mut size = self.ceiling.min(n.max(1));
        let mut stats = BatchStats {
            batches: 0,
            retries: 0,
            batch_size: size,
        };
        let mut at = 0;
        while at < n {
            let end = (at + size).min(n);
            let mut scratch: Vec<f64> = Vec::new();
            let oom = fails(end - at) || scratch.try_reserve_exact((end - at) * width).is_err();
            drop(scratch);
            if oom {
                if size == 1 {
                    return Err(Error::Inference("allocation failed at batch size 1".into()));
                }
                size = (size / 2).max(1);
                stats.retries += 1;
                log::warn!("allocation failed, retrying with batch size {size}");
                continue;
            }
            out.extend(process(at..end)?);
            stats.batches += 1;
            at = end;
        }
        stats.batch_size = size;
        Ok((out, stats))
    }

    pub fn predict(&self, texts: &[&str]) -> Result<Vec<LabeledPrediction>> {
        self.predict_with(texts, |_| false).map(|(p, _)| p)
    }

    /// Like [`predict`](Self::predict), with `fails(batch_len)` able to
    /// signal an allocation failure for the batch about to run.
    pub fn predict_with(
        &self,
        texts: &[&str],
        fails: impl FnMut(usize) -> bool,
    ) -> Result<(Vec<LabeledPrediction>, BatchStats)> {
        let BundleModel::Classification { classifier, detector } = &self.bundle.model else {
            return Err(Error::Config("bundle holds a token tagger; use predict_entities".into()));
        };
        let width = classifier.featurizer().dim;
        self.run_batches(texts.len(), width, fails, |r| {
            texts[r].par_iter().map(|t| classify(classifier, detector.as_ref(), t)).collect()
        })
    }

    pub fn predict_entities(&self, texts: &[&str]) -> Result<Vec<Vec<EntitySpan>>> {
        let BundleModel::Token(tagger) = &self.bundle.model else {
            return Err(Error::Config("bundle holds a text classifier; use predict".into()));
        };
        let width = tagger.feature_config().dim;
        self.run_batches(texts.len(), width, |_| false, |r| {
            Ok(texts[r].par_iter().map(|t| tagger.predict_entities(t)).collect())
        })
        .map(|(p, _)| p)
    }
}
