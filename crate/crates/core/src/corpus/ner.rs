use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Sample, Task};
use crate::error::{Error, Result};

/// A labelled character range `[start, end)` counted in Unicode scalar values.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

impl EntitySpan {
    pub fn new(start: usize, end: usize, label: impl Into<String>) -> Self {
        Self {
            start,
            end,
            label: label.into(),
        }
    }

    pub fn overlaps(&self, other: &EntitySpan) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn same_bounds(&self, other: &EntitySpan) -> bool {
        self.start == other.start && self.end == other.end
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NerSample {
    pub text: String,
    pub entities: Vec<EntitySpan>,
}

impl NerSample {
    /// Validates span bounds and sorts spans by start offset.
    pub fn new(text: impl Into<String>, mut entities: Vec<EntitySpan>) -> Result<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(Error::Config("sample text is empty".into()));
        }
        let len = text.chars().count();
        for e in &entities {
            if e.start >= e.end || e.end > len {
                return Err(Error::InvalidSpan {
                    start: e.start,
                    end: e.end,
                    len,
                });
            }
            if e.label.trim().is_empty() {
                return Err(Error::Config("entity label is empty".into()));
            }
        }
        entities.sort();
        check_overlaps(&entities)?;
        Ok(Self { text, entities })
    }

    /// Surface string of a span.
    pub fn surface(&self, span: &EntitySpan) -> String {
        self.text
            .chars()
            .skip(span.start)
            .take(span.end - span.start)
            .collect()
    }
}

impl Sample for NerSample {
    const TASK: Task = Task::TokenClassification;

    fn text(&self) -> &str {
        &self.text
    }

    fn keys(&self) -> Vec<&str> {
        let set: BTreeSet<&str> = self.entities.iter().map(|e| e.label.as_str()).collect();
        set.into_iter().collect()
    }

    fn strata(&self) -> String {
        self.keys().join("|")
    }
}

fn check_overlaps(sorted: &[EntitySpan]) -> Result<()> {
    for pair in sorted.windows(2) {
        if pair[0].overlaps(&pair[1]) {
            return Err(Error::Overlap {
                a_start: pair[0].start,
                a_end: pair[0].end,
                b_start: pair[1].start,
                b_end: pair[1].end,
            });
        }
    }
    Ok(())
}

/// Parses `[surface](LABEL)` inline markup.
pub fn parse_bracket_ner(marked: &str) -> Result<NerSample> {
    let err = |position: usize, message: &str| Error::Markup {
        position,
        message: message.to_string(),
    };

    let chars: Vec<char> = marked.chars().collect();
    let mut text = String::with_capacity(marked.len());
    let mut out_len = 0usize;
    let mut entities = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        match chars[i] {
            '[' => {
                let open = i;
                let start = out_len;
                i += 1;
                while i < chars.len() && chars[i] != ']' {
                    if chars[i] == '[' {
                        return Err(err(i, "nested brackets"));
                    }
                    text.push(chars[i]);
                    out_len += 1;
                    i += 1;
                }
                if i == chars.len() {
                    return Err(err(open, "unclosed `[`"));
                }
                if out_len == start {
                    return Err(err(open, "empty entity surface"));
                }
                let end = out_len;
                // skip `]`, expect `(`
                i += 1;
                if i == chars.len() || chars[i] != '(' {
                    return Err(err(i, "expected `(` after `]`"));
                }
                i += 1;
                let label_start = i;
                while i < chars.len() && chars[i] != ')' {
                    if matches!(chars[i], '(' | '[' | ']') {
                        return Err(err(i, "unexpected bracket inside label"));
                    }
                    i += 1;
                }
                if i == chars.len() {
                    return Err(err(label_start, "unclosed `(`"));
                }
                let label: String = chars[label_start..i].iter().collect();
                let label = label.trim();
                if label.is_empty() {
                    return Err(err(label_start, "empty label"));
                }
                entities.push(EntitySpan::new(start, end, label));
                i += 1;
            }
            ']' => return Err(err(i, "unmatched `]`")),
            c => {
                text.push(c);
                out_len += 1;
                i += 1;
            }
        }
    }
    NerSample::new(text, entities)
}

/// A whitespace-delimited token with character offsets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut start = 0;
    let mut n = 0;
    for (idx, c) in text.chars().enumerate() {
        n = idx + 1;
        if c.is_whitespace() {
            if !current.is_empty() {
                tokens.push(Token {
                    text: std::mem::take(&mut current),
                    start,
                    end: idx,
                });
            }
        } else {
            if current.is_empty() {
                start = idx;
            }
            current.push(c);
        }
    }
    if !current.is_empty() {
        tokens.push(Token {
            text: current,
            start,
            end: n,
        });
    }
    tokens
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BioTag {
    O,
    B(String),
    I(String),
}

impl BioTag {
    pub fn entity(&self) -> Option<&str> {
        match self {
            BioTag::O => None,
            BioTag::B(t) | BioTag::I(t) => Some(t),
        }
    }
}

impl fmt::Display for BioTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BioTag::O => f.write_str("O"),
            BioTag::B(t) => write!(f, "B-{t}"),
            BioTag::I(t) => write!(f, "I-{t}"),
        }
    }
}

impl FromStr for BioTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "O" {
            return Ok(BioTag::O);
        }
        match s.split_once('-') {
            Some(("B", t)) if !t.is_empty() => Ok(BioTag::B(t.to_string())),
            Some(("I", t)) if !t.is_empty() => Ok(BioTag::I(t.to_string())),
            _ => Err(Error::Config(format!("invalid BIO tag `{s}`"))),
        }
    }
}

/// Converts a sample to whitespace tokens tagged with BIO markers.
///
/// A token overlapping a span at all is claimed by it; a token touching
/// several spans goes to the first one.
pub fn to_bio(sample: &NerSample) -> Result<Vec<(Token, BioTag)>> {
    let mut spans = sample.entities.clone();
    spans.sort();
    check_overlaps(&spans)?;

    let mut tagged = Vec::new();
    let mut last_span: Option<usize> = None;
    for token in tokenize(&sample.text) {
        let hit = spans
            .iter()
            .position(|s| token.start < s.end && s.start < token.end);
        let tag = match hit {
            Some(idx) if last_span == Some(idx) => BioTag::I(spans[idx].label.clone()),
            Some(idx) => BioTag::B(spans[idx].label.clone()),
            None => BioTag::O,
        };
        last_span = hit;
        tagged.push((token, tag));
    }
    Ok(tagged)
}

/// Rebuilds token-aligned spans from a tag sequence. An `I-X` that does not
/// continue an `X` entity opens a new one.
pub fn from_bio(tokens: &[Token], tags: &[BioTag]) -> Vec<EntitySpan> {
    let mut spans: Vec<EntitySpan> = Vec::new();
    let mut open: Option<EntitySpan> = None;
    for (token, tag) in tokens.iter().zip(tags) {
        match tag {
            BioTag::O => {
                spans.extend(open.take());
            }
            BioTag::B(t) => {
                spans.extend(open.take());
                open = Some(EntitySpan::new(token.start, token.end, t.clone()));
            }
            BioTag::I(t) => match open.as_mut() {
                Some(span) if &span.label == t => span.end = token.end,
                _ => {
                    spans.extend(open.take());
                    open = Some(EntitySpan::new(token.start, token.end, t.clone()));
                }
            },
        }
    }
    spans.extend(open);
    spans
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tags_of(sample: &NerSample) -> Vec<String> {
        to_bio(sample)
            .unwrap()
            .into_iter()
            .map(|(_, t)| t.to_string())
            .collect()
    }

    #[test]
    fn bracket_single_entity() {
        let s = parse_bracket_ner("fly to [paris](CITY)").unwrap();
        assert_eq!(s.text, "fly to paris");
        assert_eq!(s.entities, vec![EntitySpan::new(7, 12, "CITY")]);
    }

    #[test]
    fn bracket_two_entities() {
        let s = parse_bracket_ner("[a](X) [b](X)").unwrap();
        assert_eq!(s.text, "a b");
        assert_eq!(
            s.entities,
            vec![EntitySpan::new(0, 1, "X"), EntitySpan::new(2, 3, "X")]
        );
    }

    #[test]
    fn bracket_errors() {
        for bad in [
            "fly to [paris](",
            "fly to [paris",
            "fly [to [paris]](X)",
            "fly to paris](X)",
            "fly to [paris]()",
            "fly to [paris] now",
            "[](X)",
        ] {
            assert!(
                matches!(parse_bracket_ner(bad), Err(Error::Markup { .. })),
                "{bad}"
            );
        }
    }

    #[test]
    fn bracket_counts_characters_not_bytes() {
        let s = parse_bracket_ner("über [zürich](CITY)").unwrap();
        assert_eq!(s.entities[0], EntitySpan::new(5, 11, "CITY"));
        assert_eq!(s.surface(&s.entities[0]), "zürich");
    }

    #[test]
    fn bio_examples() {
        let s = NerSample::new("fly to paris", vec![EntitySpan::new(7, 12, "CITY")]).unwrap();
        assert_eq!(tags_of(&s), ["O", "O", "B-CITY"]);

        let s = NerSample::new("new york city", vec![EntitySpan::new(0, 8, "LOC")]).unwrap();
        assert_eq!(tags_of(&s), ["B-LOC", "I-LOC", "O"]);
    }

    #[test]
    fn partial_overlap_claims_token() {
        let s = NerSample::new("new york city", vec![EntitySpan::new(1, 6, "LOC")]).unwrap();
        assert_eq!(tags_of(&s), ["B-LOC", "I-LOC", "O"]);
    }

    #[test]
    fn adjacent_spans_of_same_type_stay_separate() {
        let s = NerSample::new(
            "a b",
            vec![EntitySpan::new(0, 1, "X"), EntitySpan::new(2, 3, "X")],
        )
        .unwrap();
        assert_eq!(tags_of(&s), ["B-X", "B-X"]);
    }

    #[test]
    fn overlapping_spans_are_rejected() {
        let err = NerSample::new(
            "abcdefghij",
            vec![EntitySpan::new(0, 5, "A"), EntitySpan::new(3, 8, "B")],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Overlap { .. }));

        let raw = NerSample {
            text: "abcdefghij".into(),
            entities: vec![EntitySpan::new(0, 5, "A"), EntitySpan::new(3, 8, "B")],
        };
        assert!(matches!(to_bio(&raw), Err(Error::Overlap { .. })));
    }

    #[test]
    fn orphan_inside_opens_entity() {
        let tokens = tokenize("a b c");
        let tags = vec![
            BioTag::O,
            BioTag::I("X".into()),
            BioTag::I("Y".into()),
        ];
        assert_eq!(
            from_bio(&tokens, &tags),
            vec![EntitySpan::new(2, 3, "X"), EntitySpan::new(4, 5, "Y")]
        );
    }

    #[test]
    fn tokenize_unicode_whitespace() {
        let t = tokenize(" a\u{00A0}bc\t d ");
        let texts: Vec<_> = t.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(texts, ["a", "bc", "d"]);
        assert_eq!((t[1].start, t[1].end), (3, 5));
    }

    #[test]
    fn tag_parse_roundtrip() {
        for s in ["O", "B-LOC", "I-PER"] {
            assert_eq!(s.parse::<BioTag>().unwrap().to_string(), s);
        }
        assert!("X-LOC".parse::<BioTag>().is_err());
        assert!("B-".parse::<BioTag>().is_err());
    }
}
