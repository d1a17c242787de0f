//! Text generation through an OpenAI-compatible chat endpoint.
//!
//! Used for paraphrase upsampling, domain summaries and synthetic test sets.
//! [`MockTransport`] answers every request locally and deterministically.
//! The prompt templates in this module are original.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::PerturbationConfig;
use crate::corpus::{ClassificationCorpus, ClassificationSample};
use crate::error::{Error, Result};
use crate::metrics::{classification_report, ClassificationReport};
use crate::rng::{seeded, stable_hash};
use crate::train::{Classifier, PerturbationUpsampler, Upsampler};

pub const ENV_BASE_URL: &str = "AUTONLU_LLM_BASE_URL";
pub const ENV_API_KEY: &str = "AUTONLU_LLM_API_KEY";
pub const ENV_MODEL: &str = "AUTONLU_LLM_MODEL";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    fn new(role: &str, content: impl Into<String>) -> Self {
        Self {
            role: role.to_string(),
            content: content.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

impl ChatRequest {
    pub fn prompt_hash(&self) -> String {
        let mut h = Sha256::new();
        for m in &self.messages {
            h.update(m.role.as_bytes());
            h.update([0]);
            h.update(m.content.as_bytes());
            h.update([0]);
        }
        h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// What a request asks for, so offline transports can answer without
/// parsing prompts.
#[derive(Clone, Debug, PartialEq)]
pub enum RequestKind {
    DomainAnalysis { labels: Vec<String> },
    Paraphrase { label: String, seeds: Vec<String>, k: usize },
    TestSet { labels: Vec<String>, examples: BTreeMap<String, Vec<String>>, per_label: usize },
}

pub trait Transport: Send + Sync {
    /// Returns the assistant message content.
    fn complete(&self, request: &ChatRequest, kind: &RequestKind) -> std::result::Result<String, String>;

    fn is_offline(&self) -> bool {
        false
    }
}

#[derive(Clone, Debug)]
pub struct HttpTransport {
    pub base_url: String,
    api_key: String,
    pub timeout: Duration,
}

impl HttpTransport {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>) -> Result<Self> {
        let base_url = base_url.into();
        let api_key = api_key.into();
        if base_url.is_empty() || api_key.is_empty() {
            return Err(Error::Config("HTTP transport needs a base URL and an API key".into()));
        }
        Ok(Self {
            base_url,
            api_key,
            timeout: Duration::from_secs(60),
        })
    }

    pub fn endpoint(&self) -> String {
        let base = self.base_url.trim_end_matches('/');
        if base.ends_with("/v1") {
            format!("{base}/chat/completions")
        } else {
            format!("{base}/v1/chat/completions")
        }
    }
}

impl Transport for HttpTransport {
    fn complete(&self, request: &ChatRequest, _kind: &RequestKind) -> std::result::Result<String, String> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let mut resp = agent
            .post(&self.endpoint())
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(request)
            .map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(|e| e.to_string())?;
        if status != 200 {
            return Err(format!("HTTP {status}"));
        }
        let value: serde_json::Value = serde_json::from_str(&body).map_err(|e| e.to_string())?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| "response lacks choices[0].message.content".to_string())
    }
}

/// Fault injection for [`MockTransport`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MockFaults {
    /// The first `n` requests fail at the transport level.
    pub fail_first: usize,
    /// Every request fails.
    pub always_fail: bool,
    /// Answers include an empty string and a copy of a seed text.
    pub invalid_items: bool,
    /// Test-set answers include a label outside the requested set.
    pub foreign_label: bool,
}

#[derive(Debug, Default)]
pub struct MockTransport {
    pub seed: u64,
    pub faults: MockFaults,
    calls: AtomicUsize,
}

impl MockTransport {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            faults: MockFaults::default(),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn with_faults(mut self, faults: MockFaults) -> Self {
        self.faults = faults;
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

const OPENERS: [&str; 8] = ["please", "could you", "i would like to", "hey", "can you", "i want to", "quickly", "kindly"];
const CLOSERS: [&str; 6] = ["now", "for me", "thanks", "right away", "if possible", "today"];

fn rephrase<R: Rng>(text: &str, rng: &mut R) -> String {
    let opener = OPENERS.choose(rng).expect("openers");
    let closer = CLOSERS.choose(rng).expect("closers");
    format!("{opener} {text} {closer}")
}

impl Transport for MockTransport {
    fn complete(&self, request: &ChatRequest, kind: &RequestKind) -> std::result::Result<String, String> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        if self.faults.always_fail || n < self.faults.fail_first {
            return Err("simulated connection failure".into());
        }
        let mut rng = seeded(self.seed ^ stable_hash(0, &request.prompt_hash()), "mock");
        let out = match kind {
            RequestKind::DomainAnalysis { labels } => serde_json::Value::String(format!(
                "Domain with {} intents: {}. Users issue short imperative requests.",
                labels.len(),
                labels.join(", ")
            )),
            RequestKind::Paraphrase { seeds, k, .. } => {
                let mut items: Vec<String> = Vec::new();
                if self.faults.invalid_items {
                    items.push(String::new());
                    items.push(seeds[0].clone());
                }
                for _ in 0..*k {
                    items.push(rephrase(seeds.choose(&mut rng).expect("seeds"), &mut rng));
                }
                serde_json::json!(items)
            }
            RequestKind::TestSet { labels, examples, per_label } => {
                let mut items = Vec::new();
                if self.faults.foreign_label {
                    items.push(serde_json::json!({"text": "an utterance of an unknown intent", "label": "__unknown__"}));
                }
                for label in labels {
                    let pool = &examples[label];
                    for _ in 0..*per_label {
                        let text = rephrase(pool.choose(&mut rng).expect("examples"), &mut rng);
                        items.push(serde_json::json!({"text": text, "label": label}));
                    }
                }
                serde_json::Value::Array(items)
            }
        };
        Ok(match out {
            serde_json::Value::String(s) => s,
            other => format!("```json\n{other}\n```"),
        })
    }

    fn is_offline(&self) -> bool {
        true
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub model: String,
    pub temperature: f64,
    pub max_retries: usize,
    pub backoff_base_ms: u64,
    pub max_in_flight: usize,
    /// Request rounds per generation call before reporting a shortfall.
    pub rounds: usize,
    /// Examples per class shown in domain and test-set prompts.
    pub digest_size: usize,
    pub seed: u64,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            model: "gpt-4o-mini".into(),
            temperature: 0.7,
            max_retries: 3,
            backoff_base_ms: 500,
            max_in_flight: 4,
            rounds: 3,
            digest_size: 3,
            seed: 0,
        }
    }
}

/// Chat client with retries and a cached domain summary. Shareable across
/// threads.
pub struct GenerationClient {
    pub config: LlmConfig,
    transport: Arc<dyn Transport>,
    domain: Mutex<Option<String>>,
    requests: AtomicUsize,
}

impl std::fmt::Debug for GenerationClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GenerationClient")
            .field("config", &self.config)
            .field("offline", &self.transport.is_offline())
            .finish()
    }
}

impl GenerationClient {
    pub fn new(config: LlmConfig, transport: Arc<dyn Transport>) -> Self {
        Self {
            config,
            transport,
            domain: Mutex::new(None),
            requests: AtomicUsize::new(0),
        }
    }

    pub fn mock(config: LlmConfig) -> Self {
        let seed = config.seed;
        Self::new(LlmConfig { backoff_base_ms: 0, ..config }, Arc::new(MockTransport::new(seed)))
    }

    /// HTTP client configured from the environment. The model variable
    /// overrides `config.model` when set.
    pub fn from_env(config: LlmConfig) -> Result<Self> {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        let base = var(ENV_BASE_URL).ok_or_else(|| Error::Config(format!("{ENV_BASE_URL} is not set")))?;
        let key = var(ENV_API_KEY).ok_or_else(|| Error::Config(format!("{ENV_API_KEY} is not set")))?;
        let model = var(ENV_MODEL).unwrap_or(config.model.clone());
        Ok(Self::new(LlmConfig { model, ..config }, Arc::new(HttpTransport::new(base, key)?)))
    }

    /// Requests sent so far, including retries.
    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    fn request(&self, system: &str, user: String, kind: &RequestKind) -> Result<(String, String)> {
        let req = ChatRequest {
            model: self.config.model.clone(),
            messages: vec![ChatMessage::new("system", system), ChatMessage::new("user", user)],
            temperature: self.config.temperature,
        };
        let hash = req.prompt_hash();
        let mut last = String::new();
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 && self.config.backoff_base_ms > 0 {
                std::thread::sleep(Duration::from_millis(self.config.backoff_base_ms << (attempt - 1).min(16)));
            }
            self.requests.fetch_add(1, Ordering::SeqCst);
            match self.transport.complete(&req, kind) {
                Ok(text) => return Ok((text, hash)),
                Err(e) => {
                    log::warn!("generation request failed (attempt {}): {e}", attempt + 1);
                    last = e;
                }
            }
        }
        Err(Error::Transport {
            attempts: self.config.max_retries + 1,
            message: last,
        })
    }

    fn digest(&self, corpus: &ClassificationCorpus) -> BTreeMap<String, Vec<String>> {
        let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for s in corpus.samples() {
            let e = out.entry(s.label.clone()).or_default();
            if e.len() < self.config.digest_size.max(1) {
                e.push(s.text.clone());
            }
        }
        out
    }

    /// One-paragraph description of the corpus domain, computed once.
    pub fn analyze_domain(&self, corpus: &ClassificationCorpus) -> Result<String> {
        if let Some(s) = self.domain.lock().expect("domain cache").as_ref() {
            return Ok(s.clone());
        }
        let digest = self.digest(corpus);
        let mut user = String::from("Describe the domain of this intent dataset in two sentences.\n");
        for (label, texts) in &digest {
            user.push_str(&format!("{label}: {}\n", texts.join(" | ")));
        }
        let kind = RequestKind::DomainAnalysis {
            labels: digest.keys().cloned().collect(),
        };
        let (summary, _) = self.request("You analyse datasets for text classification.", user, &kind)?;
        let summary = summary.trim().to_string();
        *self.domain.lock().expect("domain cache") = Some(summary.clone());
        Ok(summary)
    }

    pub fn cached_domain(&self) -> Option<String> {
        self.domain.lock().expect("domain cache").clone()
    }

    /// `k` new phrasings of `seeds` for `label`.
    pub fn generate_paraphrases(&self, label: &str, seeds: &[&str], k: usize) -> Result<ParaphraseResult> {
        if k == 0 || seeds.is_empty() {
            return Err(Error::Config("paraphrasing needs k >= 1 and at least one seed".into()));
        }
        let system = self.cached_domain().unwrap_or_else(|| "You write natural user utterances.".into());
        let mut seen: BTreeSet<String> = seeds.iter().map(|s| s.trim().to_lowercase()).collect();
        let mut texts = Vec::with_capacity(k);
        let mut rejected = 0;
        for round in 0..self.config.rounds.max(1) {
            let need = k - texts.len();
            let user = format!(
                "Write {need} new, varied paraphrases for the intent `{label}` (round {round}). Return a JSON array of strings.\nExamples:\n{}",
                seeds.iter().map(|s| format!("- {s}")).collect::<Vec<_>>().join("\n")
            );
            let kind = RequestKind::Paraphrase {
                label: label.to_string(),
                seeds: seeds.iter().map(|s| s.to_string()).collect(),
                k: need,
            };
            let (raw, _) = self.request(&system, user, &kind)?;
            for item in parse_items(&raw) {
                let text = item.text.trim().to_string();
                if texts.len() == k {
                    break;
                }
                if text.is_empty() || !seen.insert(text.to_lowercase()) {
                    rejected += 1;
                    continue;
                }
                texts.push(text);
            }
            if texts.len() == k {
                break;
            }
        }
        let shortfall = k - texts.len();
        if shortfall > 0 {
            log::warn!("paraphrase shortfall of {shortfall} for `{label}`");
        }
        Ok(ParaphraseResult {
            texts,
            rejected,
            shortfall,
        })
    }

    /// A labeled set with `per_class` samples for every corpus label.
    pub fn generate_test_set(&self, corpus: &ClassificationCorpus, per_class: usize) -> Result<GeneratedSet> {
        if per_class == 0 {
            return Err(Error::Config("per_class must be at least 1".into()));
        }
        let domain = self.analyze_domain(corpus)?;
        let examples = self.digest(corpus);
        let labels = corpus.labels();
        let training: BTreeSet<String> = corpus.samples().iter().map(|s| s.text.trim().to_lowercase()).collect();

        let chunks: Vec<&[String]> = labels.chunks(1).collect();
        let mut per_label: BTreeMap<String, Vec<(String, String)>> = labels.iter().map(|l| (l.clone(), Vec::new())).collect();
        let mut seen = training.clone();
        let mut rejected = 0;
        let label_set: BTreeSet<&String> = labels.iter().collect();

        for round in 0..self.config.rounds.max(1) {
            let pending: Vec<&[String]> = chunks
                .iter()
                .copied()
                .filter(|c| c.iter().any(|l| per_label[l].len() < per_class))
                .collect();
            if pending.is_empty() {
                break;
            }
            let answers: Vec<Result<(String, String)>> = pending
                .chunks(self.config.max_in_flight.max(1))
                .flat_map(|wave| {
                    std::thread::scope(|scope| {
                        let handles: Vec<_> = wave
                            .iter()
                            .map(|chunk| {
                                let need: usize = chunk.iter().map(|l| per_class - per_label[l].len()).max().unwrap_or(0);
                                let kind = RequestKind::TestSet {
                                    labels: chunk.to_vec(),
                                    examples: chunk.iter().map(|l| (l.clone(), examples[l].clone())).collect(),
                                    per_label: need,
                                };
                                let user = test_prompt(chunk, &examples, need, round);
                                let domain = &domain;
                                scope.spawn(move || self.request(domain, user, &kind))
                            })
                            .collect();
                        handles.into_iter().map(|h| h.join().expect("request thread")).collect::<Vec<_>>()
                    })
                })
                .collect();
            for answer in answers {
                let (raw, hash) = answer?;
                for item in parse_items(&raw) {
                    let text = item.text.trim().to_string();
                    let Some(label) = item.label.filter(|l| label_set.contains(l)) else {
                        rejected += 1;
                        continue;
                    };
                    let bucket = per_label.get_mut(&label).expect("label in set");
                    if text.is_empty() || bucket.len() >= per_class || !seen.insert(text.to_lowercase()) {
                        rejected += 1;
                        continue;
                    }
                    bucket.push((text, hash.clone()));
                }
            }
        }

        let mut samples = Vec::new();
        let mut provenance = Vec::new();
        let mut shortfall = 0;
        for (label, items) in per_label {
            shortfall += per_class - items.len();
            for (text, hash) in items {
                samples.push(ClassificationSample::new(text, label.clone())?);
                provenance.push(hash);
            }
        }
        Ok(GeneratedSet {
            samples,
            provenance,
            rejected,
            shortfall,
        })
    }
}

fn test_prompt(labels: &[String], examples: &BTreeMap<String, Vec<String>>, need: usize, round: usize) -> String {
    let mut s = format!(
        "Write {need} realistic, new user utterances for each intent below (round {round}). Return a JSON array of objects with `text` and `label`.\n"
    );
    for l in labels {
        s.push_str(&format!("{l}: {}\n", examples[l].join(" | ")));
    }
    s
}

#[derive(Clone, Debug, Deserialize)]
struct Item {
    text: String,
    #[serde(default)]
    label: Option<String>,
}

/// Parses a JSON array of strings or `{text, label}` objects, tolerating a
/// surrounding code fence. Anything unparseable yields no items.
fn parse_items(raw: &str) -> Vec<Item> {
    let body = raw.trim();
    let body = body
        .strip_prefix("```json")
        .or_else(|| body.strip_prefix("```"))
        .map_or(body, |b| b.trim_end().trim_end_matches("```"))
        .trim();
    let Ok(serde_json::Value::Array(values)) = serde_json::from_str::<serde_json::Value>(body) else {
        return Vec::new();
    };
    values
        .into_iter()
        .filter_map(|v| match v {
            serde_json::Value::String(text) => Some(Item { text, label: None }),
            other => serde_json::from_value(other).ok(),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParaphraseResult {
    pub texts: Vec<String>,
    pub rejected: usize,
    pub shortfall: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratedSet {
    pub samples: Vec<ClassificationSample>,
    /// Prompt hash per sample.
    pub provenance: Vec<String>,
    pub rejected: usize,
    /// Missing samples summed over labels.
    pub shortfall: usize,
}

impl GeneratedSet {
    pub fn counts(&self) -> BTreeMap<String, usize> {
        let mut c = BTreeMap::new();
        for s in &self.samples {
            *c.entry(s.label.clone()).or_default() += 1;
        }
        c
    }

    pub fn is_balanced(&self) -> bool {
        let c = self.counts();
        c.values().min() == c.values().max()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub original: ClassificationReport,
    pub generated: ClassificationReport,
    /// Generated minus original macro-F1.
    pub macro_f1_delta: f64,
}

/// Scores `classifier` on a real held-out set and on a generated one.
pub fn test_set_delta(
    classifier: &Classifier,
    original: &ClassificationCorpus,
    generated: &GeneratedSet,
) -> Result<DeltaReport> {
    let score = |texts: Vec<&str>, gold: Vec<&str>| classification_report(&gold, &classifier.predict_labels(&texts), None);
    let original = score(original.texts(), original.gold_labels())?;
    let generated = score(
        generated.samples.iter().map(|s| s.text.as_str()).collect(),
        generated.samples.iter().map(|s| s.label.as_str()).collect(),
    )?;
    Ok(DeltaReport {
        macro_f1_delta: generated.macro_f1 - original.macro_f1,
        original,
        generated,
    })
}

/// Upsampler backed by paraphrase generation; shortfalls are filled with
/// perturbations of the seeds.
pub struct LlmUpsampler<'a> {
    pub client: &'a GenerationClient,
    pub fallback: PerturbationUpsampler,
}

impl<'a> LlmUpsampler<'a> {
    pub fn new(client: &'a GenerationClient, perturbation: PerturbationConfig) -> Self {
        Self {
            client,
            fallback: PerturbationUpsampler { config: perturbation },
        }
    }
}

impl Upsampler for LlmUpsampler<'_> {
    fn generate(&mut self, label: &str, seeds: &[&str], k: usize) -> Result<Vec<String>> {
        if k == 0 {
            return Ok(Vec::new());
        }
        let mut out = self.client.generate_paraphrases(label, seeds, k)?;
        if out.shortfall > 0 {
            out.texts.extend(self.fallback.generate(label, seeds, out.shortfall)?);
        }
        Ok(out.texts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Corpus;
    use crate::synthetic::intent_corpus;

    fn client(faults: MockFaults) -> GenerationClient {
        let cfg = LlmConfig { backoff_base_ms: 0, ..Default::default() };
        GenerationClient::new(cfg, Arc::new(MockTransport::new(7).with_faults(faults)))
    }

    #[test]
    fn domain_is_cached() {
        let c = client(MockFaults::default());
        let corpus = intent_corpus(5, 0).unwrap();
        let a = c.analyze_domain(&corpus).unwrap();
        assert_eq!(c.request_count(), 1);
        assert_eq!(c.analyze_domain(&corpus).unwrap(), a);
        assert_eq!(c.request_count(), 1);
    }

    #[test]
    fn retries_then_transport_error() {
        let corpus = intent_corpus(5, 0).unwrap();
        let c = client(MockFaults { fail_first: 2, ..Default::default() });
        assert!(c.analyze_domain(&corpus).is_ok());
        assert_eq!(c.request_count(), 3);
        let c = client(MockFaults { always_fail: true, ..Default::default() });
        let err = c.analyze_domain(&corpus).unwrap_err();
        assert!(matches!(err, Error::Transport { attempts: 4, .. }), "{err}");
        assert_eq!(c.request_count(), 4);
    }

    #[test]
    fn paraphrases_are_validated() {
        let c = client(MockFaults { invalid_items: true, ..Default::default() });
        let seeds = ["book a flight to rome", "fly me to oslo"];
        let out = c.generate_paraphrases("book_flight", &seeds, 6).unwrap();
        assert_eq!(out.texts.len(), 6);
        assert!(out.rejected >= 2);
        assert!(out.texts.iter().all(|t| !t.is_empty() && !seeds.contains(&t.as_str())));
        let again = client(MockFaults { invalid_items: true, ..Default::default() })
            .generate_paraphrases("book_flight", &seeds, 6)
            .unwrap();
        assert_eq!(again, out);
    }

    #[test]
    fn test_set_is_balanced_and_label_valid() {
        let corpus = Corpus::new(
            intent_corpus(6, 2).unwrap().into_samples().into_iter().filter(|s| s.label < "p".to_string()).collect(),
        )
        .unwrap();
        assert_eq!(corpus.labels().len(), 3);
        let c = client(MockFaults { foreign_label: true, ..Default::default() });
        let set = c.generate_test_set(&corpus, 5).unwrap();
        assert_eq!(set.samples.len(), 15);
        assert!(set.is_balanced());
        assert_eq!(set.shortfall, 0);
        assert!(set.rejected >= 1);
        let labels = corpus.labels();
        let train: BTreeSet<&str> = corpus.texts().into_iter().collect();
        for s in &set.samples {
            assert!(labels.contains(&s.label));
            assert!(!train.contains(s.text.as_str()));
        }
        assert_eq!(set.provenance.len(), 15);
    }

    #[test]
    fn fenced_and_plain_json() {
        assert_eq!(parse_items("```json\n[\"a\", \"b\"]\n```").len(), 2);
        assert_eq!(parse_items("[{\"text\": \"x\", \"label\": \"y\"}]")[0].label.as_deref(), Some("y"));
        assert!(parse_items("not json").is_empty());
    }

    #[test]
    fn endpoint_and_env() {
        let t = HttpTransport::new("http://localhost:8000/v1/", "k").unwrap();
        assert_eq!(t.endpoint(), "http://localhost:8000/v1/chat/completions");
        let t = HttpTransport::new("http://h", "k").unwrap();
        assert_eq!(t.endpoint(), "http://h/v1/chat/completions");
        assert!(HttpTransport::new("", "k").is_err());
    }
}
