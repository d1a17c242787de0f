//! JSON configuration for every subcommand.
//!
//! Relative paths resolve against the directory holding the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use autonlu_core::augment::{GibberishConfig, PerturbationConfig};
use autonlu_core::bench::BenchmarkConfig;
use autonlu_core::corpus::{
    load_bracket_ner, load_classification, load_ner_jsonl, AnyCorpus, CorpusFormat, Task,
};
use autonlu_core::embed::Featurizer;
use autonlu_core::llmgen::LlmConfig;
use autonlu_core::ood::OodMethod;
use autonlu_core::pipeline::{OodConfig, PipelineConfig};
use autonlu_core::quality::{Evaluator, QualityConfig};
use autonlu_core::train::regime::{DEFAULT_LOW_RESOURCE_THRESHOLD, UPSAMPLE_TARGET};
use autonlu_core::train::{AnchoredConfig, ContrastiveConfig, FullTrainConfig, Method, TokenConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub dataset: DatasetSection,
    pub method: MethodSection,
    pub ood: OodSection,
    pub quality: QualitySection,
    pub bench: BenchSection,
    pub llm: LlmSection,
    pub seed: Option<u64>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub train: Option<PathBuf>,
    /// Held-out set; a stratified split of `train` is used when absent.
    pub test: Option<PathBuf>,
    pub format: CorpusFormat,
    /// Dataset name used for far-OOD pairing in benchmarks.
    pub name: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodSection {
    /// `auto` or a method name.
    pub name: String,
    pub upsample: bool,
    pub low_resource_threshold: f64,
    pub test_fraction: f64,
    pub featurizer: Featurizer,
    pub perturbation: PerturbationConfig,
    pub full: FullTrainConfig,
    pub contrastive: ContrastiveConfig,
    pub anchored: AnchoredConfig,
    pub token: TokenConfig,
}

impl Default for MethodSection {
    fn default() -> Self {
        Self {
            name: "auto".into(),
            upsample: true,
            low_resource_threshold: DEFAULT_LOW_RESOURCE_THRESHOLD,
            test_fraction: 0.2,
            featurizer: Featurizer::default(),
            perturbation: PerturbationConfig::default(),
            full: FullTrainConfig::default(),
            contrastive: ContrastiveConfig::default(),
            anchored: AnchoredConfig::default(),
            token: TokenConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OodSection {
    /// `auto`, `none`, `mahalanobis`, `msp` or `out_of_scope_class`.
    pub ood_method: String,
    pub threshold_factor: f64,
    pub shrinkage: f64,
    pub gibberish: GibberishConfig,
}

impl Default for OodSection {
    fn default() -> Self {
        let d = OodConfig::default();
        Self {
            ood_method: d.method,
            threshold_factor: d.threshold_factor,
            shrinkage: d.shrinkage,
            gibberish: d.gibberish,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QualitySection {
    /// Run evaluators before training.
    pub enabled: bool,
    /// Defaults to every evaluator the task supports.
    pub evaluators: Option<Vec<Evaluator>>,
    pub filter_flagged: bool,
    pub options: QualityConfig,
}

impl Default for QualitySection {
    fn default() -> Self {
        Self {
            enabled: false,
            evaluators: None,
            filter_flagged: true,
            options: QualityConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    /// Far-OOD corpus, overriding name-based pairing.
    pub far_ood: Option<PathBuf>,
    /// Corpus paths by dataset name, for pairing.
    pub sources: BTreeMap<String, PathBuf>,
    /// Extra dataset-to-far-source pairings.
    pub pairings: BTreeMap<String, String>,
    pub options: BenchmarkConfig,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportKind {
    #[default]
    Mock,
    Http,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSection {
    pub transport: TransportKind,
    /// Upsample through paraphrase generation instead of perturbations.
    pub upsample: bool,
    pub per_class: usize,
    pub options: LlmConfig,
}

impl Default for LlmSection {
    fn default() -> Self {
        Self {
            transport: TransportKind::Mock,
            upsample: false,
            per_class: 10,
            options: LlmConfig::default(),
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&raw)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn parse(raw: &str) -> Result<Self, CliError> {
        let cfg: Config = serde_json::from_str(raw).map_err(|e| CliError::Usage(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.ood.ood_method != "auto" {
            OodMethod::from_flag(&self.ood.ood_method)
                .map_err(|_| CliError::Usage(format!(
                    "invalid value `{}` for ood.ood_method (--ood-method); expected auto, none, mahalanobis, msp or out_of_scope_class",
                    self.ood.ood_method
                )))?;
        }
        if self.method.name != "auto" {
            Method::from_name(&self.method.name)
                .map_err(|_| CliError::Usage(format!("invalid value `{}` for method.name (--method)", self.method.name)))?;
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn task(&self) -> Task {
        match self.dataset.format {
            CorpusFormat::Jsonl => Task::Classification,
            CorpusFormat::NerJsonl | CorpusFormat::Bracket => Task::TokenClassification,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn load_corpus(&self, path: &Path) -> Result<AnyCorpus, CliError> {
        let path = self.resolve(path);
        Ok(match self.dataset.format {
            CorpusFormat::Jsonl => AnyCorpus::Classification(load_classification(&path)?),
            CorpusFormat::NerJsonl => AnyCorpus::Token(load_ner_jsonl(&path)?),
            CorpusFormat::Bracket => AnyCorpus::Token(load_bracket_ner(&path)?),
        })
    }

    pub fn train_corpus(&self) -> Result<AnyCorpus, CliError> {
        let p = self
            .dataset
            .train
            .as_ref()
            .ok_or_else(|| CliError::Usage("dataset.train is required".into()))?;
        self.load_corpus(p)
    }

    pub fn test_corpus(&self) -> Result<Option<AnyCorpus>, CliError> {
        self.dataset.test.as_ref().map(|p| self.load_corpus(p)).transpose()
    }

    pub fn pipeline(&self) -> PipelineConfig {
        let seed = self.seed();
        let m = &self.method;
        let evaluators = if self.quality.enabled {
            self.quality
                .evaluators
                .clone()
                .unwrap_or_else(|| Evaluator::defaults_for(self.task()))
        } else {
            Vec::new()
        };
        PipelineConfig {
            method: Method::from_name(&m.name).ok(),
            low_resource_threshold: m.low_resource_threshold,
            upsample: m.upsample,
            test_fraction: m.test_fraction,
            evaluators,
            filter_flagged: self.quality.filter_flagged,
            featurizer: m.featurizer.clone(),
            perturbation: m.perturbation.clone(),
            full: m.full.clone(),
            contrastive: m.contrastive.clone(),
            anchored: m.anchored.clone(),
            token: m.token.clone(),
            quality: QualityConfig {
                seed,
                ..self.quality.options.clone()
            },
            ood: OodConfig {
                method: self.ood.ood_method.clone(),
                threshold_factor: self.ood.threshold_factor,
                shrinkage: self.ood.shrinkage,
                gibberish: self.ood.gibberish.clone(),
            },
            seed,
        }
    }

    pub fn benchmark(&self) -> BenchmarkConfig {
        BenchmarkConfig {
            seed: self.seed(),
            ..self.bench.options.clone()
        }
    }

    pub fn llm(&self) -> LlmConfig {
        LlmConfig {
            seed: self.seed(),
            ..self.llm.options.clone()
        }
    }

    pub fn upsample_target(&self) -> usize {
        UPSAMPLE_TARGET
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = Config::parse(r#"{"dataset": {"train": "d.jsonl"}}"#).unwrap();
        assert_eq!(c.method.name, "auto");
        assert_eq!(c.ood.ood_method, "auto");
        let p = c.pipeline();
        assert_eq!(p.method, None);
        assert!(p.evaluators.is_empty());
        assert_eq!(p.ood.threshold_factor, 1.0);
    }

    #[test]
    fn bad_values_name_the_key() {
        let e = Config::parse(r#"{"ood": {"ood_method": "energy"}}"#).unwrap_err().to_string();
        assert!(e.contains("ood.ood_method"), "{e}");
        let e = Config::parse(r#"{"method": {"name": "svm"}}"#).unwrap_err().to_string();
        assert!(e.contains("method.name"), "{e}");
        let e = Config::parse(r#"{"datset": {}}"#).unwrap_err().to_string();
        assert!(e.contains("datset"), "{e}");
    }

    #[test]
    fn seed_propagates() {
        let c = Config::parse(r#"{"seed": 9, "quality": {"enabled": true}}"#).unwrap();
        let p = c.pipeline();
        assert_eq!((p.seed, p.quality.seed), (9, 9));
        assert_eq!(p.evaluators, Evaluator::defaults_for(Task::Classification));
        assert_eq!(c.benchmark().seed, 9);
        assert_eq!(c.llm().seed, 9);
    }
}
