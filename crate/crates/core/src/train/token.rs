//! BIO tagging with a per-token softmax over hashed window features.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{from_bio, to_bio, tokenize, BioTag, EntitySpan, NerCorpus, Token};
use crate::embed::Featurizer;
use crate::error::{Error, Result};
use crate::math::{argmax, softmax};
use crate::rng::{seeded, stable_hash};
use crate::train::classifier::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenConfig {
    /// Hashing settings. `ngram_lo..=ngram_hi` is the affix length range and
    /// `dim` the number of feature buckets.
    pub features: Featurizer,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TokenConfig {
    fn default() -> Self {
        Self {
            features: Featurizer {
                dim: 1 << 14,
                ngram_lo: 1,
                ngram_hi: 3,
                hash_seed: 0,
                normalize: false,
            },
            epochs: 10,
            learning_rate: 0.1,
            seed: 0,
        }
    }
}

/// Turns orphan `I-X` tags (not preceded by `B-X` or `I-X`) into `B-X`.
pub fn repair_bio(tags: &mut [BioTag]) {
    let mut prev: Option<String> = None;
    for tag in tags.iter_mut() {
        match tag {
            BioTag::I(t) if prev.as_deref() != Some(t.as_str()) => *tag = BioTag::B(t.clone()),
            _ => {}
        }
        prev = tag.entity().map(str::to_string);
    }
}

fn shape(word: &str) -> String {
    let mut out = String::new();
    for c in word.chars() {
        let s = if c.is_uppercase() {
            'X'
        } else if c.is_lowercase() {
            'x'
        } else if c.is_numeric() {
            'd'
        } else {
            c
        };
        if !out.ends_with(s) {
            out.push(s);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct TokenTagger {
    pub(crate) features: Featurizer,
    pub(crate) tags: Vec<BioTag>,
    pub(crate) weights: Matrix,
    pub(crate) bias: Vec<f32>,
}

impl TokenTagger {
    pub fn from_parts(features: Featurizer, tags: Vec<BioTag>, weights: Matrix, bias: Vec<f32>) -> Result<Self> {
        if weights.rows != tags.len() || weights.cols != features.dim || bias.len() != tags.len() {
            return Err(Error::DimensionMismatch {
                expected: tags.len() * features.dim,
                actual: weights.rows * weights.cols,
            });
        }
        if !tags.contains(&BioTag::O) {
            return Err(Error::Integrity("tag set lacks O".into()));
        }
        Ok(Self {
            features,
            tags,
            weights,
            bias,
        })
    }

    pub fn tags(&self) -> &[BioTag] {
        &self.tags
    }

    pub fn feature_config(&self) -> &Featurizer {
        &self.features
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    /// Entity types, sorted.
    pub fn entity_types(&self) -> Vec<String> {
        let mut types: Vec<String> = self.tags.iter().filter_map(|t| t.entity().map(str::to_string)).collect();
        types.sort();
        types.dedup();
        types
    }

    pub(crate) fn token_features(cfg: &Featurizer, tokens: &[Token], i: usize) -> Vec<usize> {
        let word = |j: isize| -> String {
            if j < 0 {
                "<s>".to_string()
            } else if j as usize >= tokens.len() {
                "</s>".to_string()
            } else {
                tokens[j as usize].text.to_lowercase()
            }
        };
        let i = i as isize;
        let w = word(i);
        let mut names = vec![
            format!("w0={w}"),
            format!("w-1={}", word(i - 1)),
            format!("w+1={}", word(i + 1)),
            format!("w-2={}", word(i - 2)),
            format!("w+2={}", word(i + 2)),
            format!("bi-1={}|{w}", word(i - 1)),
            format!("bi+1={w}|{}", word(i + 1)),
            format!("shape={}", shape(&tokens[i as usize].text)),
        ];
        let chars: Vec<char> = w.chars().collect();
        for n in cfg.ngram_lo..=cfg.ngram_hi.min(chars.len()) {
            names.push(format!("p{n}={}", chars[..n].iter().collect::<String>()));
            names.push(format!("s{n}={}", chars[chars.len() - n..].iter().collect::<String>()));
        }
        names
            .iter()
            .map(|n| (stable_hash(cfg.hash_seed, n) % cfg.dim as u64) as usize)
            .collect()
    }

    fn scores(&self, active: &[(usize, f64)]) -> Vec<f64> {
        (0..self.tags.len())
            .map(|c| {
                let row = self.weights.row(c);
                f64::from(self.bias[c]) + active.iter().map(|&(f, v)| f64::from(row[f]) * v).sum::<f64>()
            })
            .collect()
    }

    fn decode(&self, tokens: &[Token], mut keep: impl FnMut(usize) -> Option<f64>) -> Vec<BioTag> {
        let mut tags: Vec<BioTag> = (0..tokens.len())
            .map(|i| {
                let active: Vec<(usize, f64)> = Self::token_features(&self.features, tokens, i)
                    .into_iter()
                    .filter_map(|f| keep(f).map(|v| (f, v)))
                    .collect();
                self.tags[argmax(&self.scores(&active))].clone()
            })
            .collect();
        repair_bio(&mut tags);
        tags
    }

    /// Greedy decode followed by BIO repair.
    pub fn tag_tokens(&self, tokens: &[Token]) -> Vec<BioTag> {
        self.decode(tokens, |_| Some(1.0))
    }

    /// Decode with each active feature dropped with probability `rate`
    /// (survivors rescaled by `1 / (1 - rate)`).
    pub fn tag_tokens_dropout<R: Rng>(&self, tokens: &[Token], rate: f64, rng: &mut R) -> Vec<BioTag> {
        let scale = 1.0 / (1.0 - rate);
        self.decode(tokens, |_| (rng.random::<f64>() >= rate).then_some(scale))
    }

    pub fn predict_entities(&self, text: &str) -> Vec<EntitySpan> {
        let tokens = tokenize(text);
        let tags = self.tag_tokens(&tokens);
        from_bio(&tokens, &tags)
    }

    /// Tag probabilities for each token, without repair.
    pub fn token_probabilities(&self, tokens: &[Token]) -> Vec<Vec<f64>> {
        (0..tokens.len())
            .map(|i| {
                let active: Vec<(usize, f64)> =
                    Self::token_features(&self.features, tokens, i).into_iter().map(|f| (f, 1.0)).collect();
                softmax(&self.scores(&active))
            })
            .collect()
    }
}

/// Trains the tagger with plain SGD on the cross-entropy of every token.
pub fn train_token(corpus: &NerCorpus, cfg: &TokenConfig) -> Result<TokenTagger> {
    cfg.features.validate()?;
    if cfg.epochs == 0 || !(cfg.learning_rate > 0.0) {
        return Err(Error::Config("epochs and learning_rate must be positive".into()));
    }
    let mut tags = vec![BioTag::O];
    for t in corpus.labels() {
        tags.push(BioTag::B(t.clone()));
        tags.push(BioTag::I(t));
    }
    let k = tags.len();
    let d = cfg.features.dim;

    let mut rows: Vec<(Vec<usize>, usize)> = Vec::new();
    for sample in corpus.samples() {
        let tagged = to_bio(sample)?;
        let tokens: Vec<Token> = tagged.iter().map(|(t, _)| t.clone()).collect();
        for (i, (_, tag)) in tagged.iter().enumerate() {
            let y = tags.iter().position(|t| t == tag).expect("tag derived from corpus labels");
            rows.push((TokenTagger::token_features(&cfg.features, &tokens, i), y));
        }
    }

    let mut w = vec![0.0f64; k * d];
    let mut b = vec![0.0f64; k];
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut rng = seeded(cfg.seed, "token");
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let lr = cfg.learning_rate / (1.0 + epoch as f64);
        for &r in &order {
            let (feats, y) = &rows[r];
            let scores: Vec<f64> = (0..k)
                .map(|c| b[c] + feats.iter().map(|&f| w[c * d + f]).sum::<f64>())
                .collect();
            let mut p = softmax(&scores);
            p[*y] -= 1.0;
            for (c, g) in p.iter().enumerate() {
                b[c] -= lr * g;
                for &f in feats {
                    w[c * d + f] -= lr * g;
                }
            }
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { epoch: epoch + 1 });
        }
    }
    TokenTagger::from_parts(
        cfg.features.clone(),
        tags,
        Matrix::from_f64(k, d, &w),
        b.into_iter().map(|v| v as f32).collect(),
    )
}
