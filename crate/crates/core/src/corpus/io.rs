use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{parse_bracket_ner, ClassificationCorpus, ClassificationSample, Corpus, EntitySpan, NerCorpus, NerSample};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CorpusFormat {
    /// `{"text": ..., "label": ...}` per line.
    #[default]
    Jsonl,
    /// `{"text": ..., "entities": [{"start", "end", "label"}]}` per line.
    NerJsonl,
    /// One `[surface](LABEL)` marked-up sentence per line.
    Bracket,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn numbered_lines(content: &str) -> impl Iterator<Item = (usize, &str)> {
    content
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn string_field(record: &Value, key: &str, line: usize) -> Result<String> {
    match record.get(key) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(Value::Number(n)) => Ok(n.to_string()),
        Some(_) => Err(parse_err(line, format!("field `{key}` must be a string"))),
        None => Err(parse_err(line, format!("missing field `{key}`"))),
    }
}

/// Loads a classification JSONL file, preserving line order.
pub fn load_classification(path: impl AsRef<Path>) -> Result<ClassificationCorpus> {
    let content = read(path.as_ref())?;
    let mut samples = Vec::new();
    for (line, raw) in numbered_lines(&content) {
        let record: Value =
            serde_json::from_str(raw).map_err(|e| parse_err(line, e.to_string()))?;
        let text = string_field(&record, "text", line)?;
        let label = string_field(&record, "label", line)?;
        let sample = ClassificationSample { text, label };
        sample
            .validate()
            .map_err(|e| parse_err(line, e.to_string()))?;
        samples.push(sample);
    }
    Corpus::new(samples)
}

#[derive(Deserialize)]
struct NerRecord {
    text: String,
    #[serde(default)]
    entities: Vec<EntitySpan>,
}

pub fn load_ner_jsonl(path: impl AsRef<Path>) -> Result<NerCorpus> {
    let content = read(path.as_ref())?;
    let mut samples = Vec::new();
    for (line, raw) in numbered_lines(&content) {
        let record: NerRecord =
            serde_json::from_str(raw).map_err(|e| parse_err(line, e.to_string()))?;
        let sample = NerSample::new(record.text, record.entities)
            .map_err(|e| parse_err(line, e.to_string()))?;
        samples.push(sample);
    }
    Corpus::new(samples)
}

pub fn load_bracket_ner(path: impl AsRef<Path>) -> Result<NerCorpus> {
    let content = read(path.as_ref())?;
    let mut samples = Vec::new();
    for (line, raw) in numbered_lines(&content) {
        let sample = parse_bracket_ner(raw).map_err(|e| parse_err(line, e.to_string()))?;
        samples.push(sample);
    }
    Corpus::new(samples)
}

pub fn write_classification_jsonl(
    path: impl AsRef<Path>,
    samples: &[ClassificationSample],
) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for s in samples {
        serde_json::to_writer(&mut out, s)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}
