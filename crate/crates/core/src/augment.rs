//! Label-preserving text perturbation and synthetic gibberish generation.
//!
//! Perturbations are either character-level (typo-style edits restricted to
//! keyboard neighbours) or word-level (duplicate, drop, adjacent swap). Each
//! output uses one family, so it stays within `max_edits` Damerau-Levenshtein
//! edits of the source at that family's granularity.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{seeded, stable_hash};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CharOp {
    SwapAdjacent,
    Delete,
    Insert,
    KeyboardSubstitute,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WordOp {
    Duplicate,
    Drop,
    ShuffleWindow,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationConfig {
    pub char_ops: Vec<CharOp>,
    pub word_ops: Vec<WordOp>,
    pub max_edits: usize,
    pub seed: u64,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self {
            char_ops: vec![
                CharOp::SwapAdjacent,
                CharOp::Delete,
                CharOp::Insert,
                CharOp::KeyboardSubstitute,
            ],
            word_ops: vec![WordOp::Duplicate, WordOp::Drop, WordOp::ShuffleWindow],
            max_edits: 2,
            seed: 0,
        }
    }
}

impl PerturbationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_edits == 0 {
            return Err(Error::Config("max_edits must be at least 1".into()));
        }
        if self.char_ops.is_empty() && self.word_ops.is_empty() {
            return Err(Error::Config("at least one perturbation op is required".into()));
        }
        Ok(())
    }
}

const QWERTY_ROWS: [&str; 3] = ["qwertyuiop", "asdfghjkl", "zxcvbnm"];

/// Lowercase letters adjacent to `c` on a QWERTY layout (same row and the
/// rows directly above and below, offset by at most one key).
pub fn keyboard_neighbors(c: char) -> Vec<char> {
    let lower = c.to_ascii_lowercase();
    let Some((row, col)) = QWERTY_ROWS
        .iter()
        .enumerate()
        .find_map(|(r, keys)| keys.find(lower).map(|col| (r, col)))
    else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for dr in [-1i32, 0, 1] {
        let r = row as i32 + dr;
        if !(0..3).contains(&r) {
            continue;
        }
        let keys = QWERTY_ROWS[r as usize].as_bytes();
        // rows are staggered: the row below is shifted half a key right
        let (lo, hi) = match dr {
            0 => (col as i32 - 1, col as i32 + 1),
            -1 => (col as i32, col as i32 + 1),
            _ => (col as i32 - 1, col as i32),
        };
        for k in lo..=hi {
            if (0..keys.len() as i32).contains(&k) {
                let n = keys[k as usize] as char;
                if n != lower {
                    out.push(if c.is_ascii_uppercase() { n.to_ascii_uppercase() } else { n });
                }
            }
        }
    }
    out
}

/// Produces `k` perturbed variants of `text`.
///
/// Outputs are never empty and differ from the source whenever the source
/// has at least two characters. Deterministic in `(config.seed, text, k)`.
pub fn perturb(text: &str, config: &PerturbationConfig, k: usize) -> Result<Vec<String>> {
    config.validate()?;
    if text.trim().is_empty() {
        return Err(Error::Config("cannot perturb empty text".into()));
    }
    let mut rng = seeded(config.seed ^ stable_hash(0, text), "perturb");
    let enforce_change = text.chars().count() >= 2;
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let mut produced = None;
        for _ in 0..16 {
            let candidate = perturb_once(text, config, &mut rng);
            if !candidate.trim().is_empty() && (!enforce_change || candidate != text) {
                produced = Some(candidate);
                break;
            }
        }
        out.push(produced.unwrap_or_else(|| text.to_string()));
    }
    Ok(out)
}

fn perturb_once(text: &str, config: &PerturbationConfig, rng: &mut impl Rng) -> String {
    let edits = rng.random_range(1..=config.max_edits);
    let use_words = match (config.char_ops.is_empty(), config.word_ops.is_empty()) {
        (true, _) => true,
        (_, true) => false,
        _ => rng.random_bool(0.5),
    };
    if use_words {
        let mut words: Vec<String> = text.split_whitespace().map(str::to_string).collect();
        for _ in 0..edits {
            let op = *config.word_ops.choose(rng).expect("non-empty");
            apply_word_op(&mut words, op, rng);
        }
        words.join(" ")
    } else {
        let mut chars: Vec<char> = text.chars().collect();
        for _ in 0..edits {
            let op = *config.char_ops.choose(rng).expect("non-empty");
            apply_char_op(&mut chars, op, rng);
        }
        chars.into_iter().collect()
    }
}

fn apply_word_op(words: &mut Vec<String>, op: WordOp, rng: &mut impl Rng) {
    if words.is_empty() {
        return;
    }
    match op {
        WordOp::Duplicate => {
            let i = rng.random_range(0..words.len());
            let w = words[i].clone();
            words.insert(i + 1, w);
        }
        WordOp::Drop if words.len() >= 2 => {
            let i = rng.random_range(0..words.len());
            words.remove(i);
        }
        WordOp::ShuffleWindow if words.len() >= 2 => {
            let i = rng.random_range(0..words.len() - 1);
            words.swap(i, i + 1);
        }
        _ => {}
    }
}

fn apply_char_op(chars: &mut Vec<char>, op: CharOp, rng: &mut impl Rng) {
    let solid = |c: &char| !c.is_whitespace();
    match op {
        CharOp::SwapAdjacent => {
            let slots: Vec<usize> = (0..chars.len().saturating_sub(1))
                .filter(|&i| solid(&chars[i]) && solid(&chars[i + 1]) && chars[i] != chars[i + 1])
                .collect();
            if let Some(&i) = slots.choose(rng) {
                chars.swap(i, i + 1);
            }
        }
        CharOp::Delete => {
            // only from words that keep at least one character
            let slots: Vec<usize> = (0..chars.len())
                .filter(|&i| {
                    solid(&chars[i])
                        && ((i > 0 && solid(&chars[i - 1]))
                            || (i + 1 < chars.len() && solid(&chars[i + 1])))
                })
                .collect();
            if let Some(&i) = slots.choose(rng) {
                chars.remove(i);
            }
        }
        CharOp::Insert => {
            let slots: Vec<usize> = (0..chars.len()).filter(|&i| solid(&chars[i])).collect();
            if let Some(&i) = slots.choose(rng) {
                let neighbors = keyboard_neighbors(chars[i]);
                let c = neighbors.choose(rng).copied().unwrap_or(chars[i]);
                let at = if rng.random_bool(0.5) { i } else { i + 1 };
                chars.insert(at, c);
            }
        }
        CharOp::KeyboardSubstitute => {
            let slots: Vec<usize> = (0..chars.len())
                .filter(|&i| !keyboard_neighbors(chars[i]).is_empty())
                .collect();
            if let Some(&i) = slots.choose(rng) {
                let neighbors = keyboard_neighbors(chars[i]);
                chars[i] = *neighbors.choose(rng).expect("non-empty");
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GibberishConfig {
    /// Inclusive range of words per sentence.
    pub words_per_sentence: (usize, usize),
    /// Inclusive range of characters per word.
    pub word_length: (usize, usize),
    pub alphabet: Vec<char>,
    pub seed: u64,
}

impl Default for GibberishConfig {
    fn default() -> Self {
        Self {
            words_per_sentence: (3, 15),
            word_length: (1, 12),
            alphabet: ('a'..='z').collect(),
            seed: 0,
        }
    }
}

impl GibberishConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |(lo, hi): (usize, usize)| lo >= 1 && lo <= hi;
        if !ok(self.words_per_sentence) || !ok(self.word_length) {
            return Err(Error::Config(
                "gibberish ranges must be non-empty with lower bound >= 1".into(),
            ));
        }
        if self.alphabet.is_empty() {
            return Err(Error::Config("gibberish alphabet is empty".into()));
        }
        Ok(())
    }
}

/// Random letter sequences shaped like sentences.
pub fn gibberish(config: &GibberishConfig, k: usize) -> Result<Vec<String>> {
    config.validate()?;
    let mut rng = seeded(config.seed, "gibberish");
    let (wlo, whi) = config.words_per_sentence;
    let (clo, chi) = config.word_length;
    let sentences = (0..k)
        .map(|_| {
            let words = rng.random_range(wlo..=whi);
            (0..words)
                .map(|_| {
                    let len = rng.random_range(clo..=chi);
                    (0..len)
                        .map(|_| *config.alphabet.choose(&mut rng).expect("non-empty"))
                        .collect::<String>()
                })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    Ok(sentences)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;
    use std::hash::Hash;

    /// Unrestricted Damerau-Levenshtein distance (Lowrance-Wagner).
    fn damerau<T: Eq + Hash + Clone>(a: &[T], b: &[T]) -> usize {
        let (n, m) = (a.len(), b.len());
        let inf = n + m;
        let mut last_row: HashMap<T, usize> = HashMap::new();
        let mut d = vec![vec![0usize; m + 2]; n + 2];
        d[0][0] = inf;
        for i in 0..=n {
            d[i + 1][0] = inf;
            d[i + 1][1] = i;
        }
        for j in 0..=m {
            d[0][j + 1] = inf;
            d[1][j + 1] = j;
        }
        for i in 1..=n {
            let mut last_col = 0;
            for j in 1..=m {
                let i1 = *last_row.get(&b[j - 1]).unwrap_or(&0);
                let j1 = last_col;
                let cost = if a[i - 1] == b[j - 1] {
                    last_col = j;
                    0
                } else {
                    1
                };
                d[i + 1][j + 1] = (d[i][j] + cost)
                    .min(d[i + 1][j] + 1)
                    .min(d[i][j + 1] + 1)
                    .min(d[i1][j1] + (i - i1 - 1) + 1 + (j - j1 - 1));
            }
            last_row.insert(a[i - 1].clone(), i);
        }
        d[n + 1][m + 1]
    }

    #[test]
    fn oracle_sanity() {
        let c = |s: &str| s.chars().collect::<Vec<_>>();
        assert_eq!(damerau(&c("ca"), &c("abc")), 2);
        assert_eq!(damerau(&c("kitten"), &c("sitting")), 3);
        assert_eq!(damerau(&c("ab"), &c("ba")), 1);
    }

    #[test]
    fn single_delete_on_cat() {
        let cfg = PerturbationConfig {
            char_ops: vec![CharOp::Delete],
            word_ops: vec![],
            max_edits: 1,
            seed: 11,
        };
        for out in perturb("cat", &cfg, 20).unwrap() {
            assert!(["at", "ct", "ca"].contains(&out.as_str()), "{out}");
        }
    }

    #[test]
    fn zero_edits_rejected() {
        let cfg = PerturbationConfig {
            max_edits: 0,
            ..Default::default()
        };
        assert!(perturb("cat", &cfg, 1).is_err());
        let cfg = PerturbationConfig {
            char_ops: vec![],
            word_ops: vec![],
            ..Default::default()
        };
        assert!(perturb("cat", &cfg, 1).is_err());
    }

    #[test]
    fn deterministic() {
        let cfg = PerturbationConfig {
            seed: 5,
            ..Default::default()
        };
        assert_eq!(
            perturb("book a table for two", &cfg, 8).unwrap(),
            perturb("book a table for two", &cfg, 8).unwrap()
        );
    }

    #[test]
    fn outputs_within_edit_budget() {
        for seed in 0..50 {
            for max_edits in 1..=3 {
                let cfg = PerturbationConfig {
                    max_edits,
                    seed,
                    ..Default::default()
                };
                let src = "book a table";
                let outs = perturb(src, &cfg, 5).unwrap();
                assert_eq!(outs.len(), 5);
                let src_chars: Vec<char> = src.chars().collect();
                let src_words: Vec<&str> = src.split_whitespace().collect();
                for out in &outs {
                    assert_ne!(out, src);
                    assert!(!out.is_empty());
                    let dc = damerau(&src_chars, &out.chars().collect::<Vec<_>>());
                    let dw = damerau(&src_words, &out.split_whitespace().collect::<Vec<_>>());
                    assert!(dc <= max_edits || dw <= max_edits, "{out}: {dc}/{dw}");
                }
            }
        }
    }

    #[test]
    fn one_char_text_may_stay() {
        let cfg = PerturbationConfig {
            char_ops: vec![CharOp::Delete],
            word_ops: vec![],
            max_edits: 1,
            seed: 0,
        };
        assert_eq!(perturb("a", &cfg, 3).unwrap(), vec!["a"; 3]);
    }

    #[test]
    fn substitutions_stay_on_keyboard() {
        let cfg = PerturbationConfig {
            char_ops: vec![CharOp::KeyboardSubstitute],
            word_ops: vec![],
            max_edits: 1,
            seed: 2,
        };
        for out in perturb("hello", &cfg, 30).unwrap() {
            let diffs: Vec<(char, char)> = "hello"
                .chars()
                .zip(out.chars())
                .filter(|(a, b)| a != b)
                .collect();
            assert_eq!(diffs.len(), 1);
            assert!(keyboard_neighbors(diffs[0].0).contains(&diffs[0].1));
        }
    }

    #[test]
    fn neighbors_are_symmetric() {
        for c in 'a'..='z' {
            for n in keyboard_neighbors(c) {
                assert!(keyboard_neighbors(n).contains(&c), "{c} -> {n}");
            }
        }
        assert!(keyboard_neighbors('1').is_empty());
        assert_eq!(keyboard_neighbors('S').iter().all(|c| c.is_ascii_uppercase()), true);
    }

    #[test]
    fn gibberish_shape() {
        let cfg = GibberishConfig {
            words_per_sentence: (3, 3),
            word_length: (4, 4),
            seed: 9,
            ..Default::default()
        };
        for s in gibberish(&cfg, 100).unwrap() {
            let words: Vec<&str> = s.split(' ').collect();
            assert_eq!(words.len(), 3);
            assert!(words
                .iter()
                .all(|w| w.len() == 4 && w.chars().all(|c| c.is_ascii_lowercase())));
        }
    }

    #[test]
    fn gibberish_budget_and_determinism() {
        let cfg = GibberishConfig::default();
        let a = gibberish(&cfg, 1000).unwrap();
        assert_eq!(a.len(), 1000);
        assert_eq!(a, gibberish(&cfg, 1000).unwrap());
        for s in &a {
            let words: Vec<&str> = s.split(' ').collect();
            assert!((3..=15).contains(&words.len()));
            assert!(words.iter().all(|w| (1..=12).contains(&w.len())));
        }
    }

    #[test]
    fn gibberish_rejects_bad_ranges() {
        let cfg = GibberishConfig {
            word_length: (0, 3),
            ..Default::default()
        };
        assert!(gibberish(&cfg, 1).is_err());
        let cfg = GibberishConfig {
            words_per_sentence: (5, 3),
            ..Default::default()
        };
        assert!(gibberish(&cfg, 1).is_err());
    }
}
