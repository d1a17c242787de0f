use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{to_bio, NerCorpus, Token};
use crate::error::{Error, Result};
use crate::math::argmax;
use crate::rng::seeded;
use crate::train::TokenTagger;

/// Items by annotators; `None` marks a missing annotation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationMatrix {
    n_classes: usize,
    rows: Vec<Vec<Option<usize>>>,
}

impl AnnotationMatrix {
    pub fn new(n_classes: usize, rows: Vec<Vec<Option<usize>>>) -> Result<Self> {
        if n_classes == 0 {
            return Err(Error::Config("annotation matrix needs at least one class".into()));
        }
        let width = rows.first().map_or(0, Vec::len);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(Error::DimensionMismatch {
                    expected: width,
                    actual: row.len(),
                });
            }
            if row.iter().all(Option::is_none) {
                return Err(Error::Config(format!("item {i} has no annotations")));
            }
            if let Some(&l) = row.iter().flatten().find(|&&l| l >= n_classes) {
                return Err(Error::Config(format!("label {l} out of range for {n_classes} classes")));
            }
        }
        Ok(Self { n_classes, rows })
    }

    /// Matrix with every cell observed.
    pub fn dense(n_classes: usize, rows: Vec<Vec<usize>>) -> Result<Self> {
        Self::new(n_classes, rows.into_iter().map(|r| r.into_iter().map(Some).collect()).collect())
    }

    pub fn n_items(&self) -> usize {
        self.rows.len()
    }

    pub fn n_annotators(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn rows(&self) -> &[Vec<Option<usize>>] {
        &self.rows
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DawidSkeneConfig {
    pub max_iter: usize,
    pub tol: f64,
    pub smoothing: f64,
}

impl Default for DawidSkeneConfig {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol: 1e-6,
            smoothing: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DawidSkeneResult {
    pub consensus: Vec<usize>,
    pub posteriors: Vec<Vec<f64>>,
    pub priors: Vec<f64>,
    /// `confusion[a][true][observed]`.
    pub confusion: Vec<Vec<Vec<f64>>>,
    /// Smoothed log-posterior objective after each M-step.
    pub log_likelihood: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

struct Params {
    priors: Vec<f64>,
    confusion: Vec<Vec<Vec<f64>>>,
}

fn m_step(m: &AnnotationMatrix, post: &[Vec<f64>], s: f64) -> Params {
    let k = m.n_classes;
    let mut priors = vec![s; k];
    for p in post {
        for c in 0..k {
            priors[c] += p[c];
        }
    }
    let total: f64 = priors.iter().sum();
    priors.iter_mut().for_each(|p| *p /= total);

    let mut confusion = vec![vec![vec![s; k]; k]; m.n_annotators()];
    for (row, p) in m.rows.iter().zip(post) {
        for (a, obs) in row.iter().enumerate() {
            if let Some(l) = *obs {
                for c in 0..k {
                    confusion[a][c][l] += p[c];
                }
            }
        }
    }
    for per_true in confusion.iter_mut().flatten() {
        let z: f64 = per_true.iter().sum();
        per_true.iter_mut().for_each(|v| *v /= z);
    }
    Params { priors, confusion }
}

/// New posteriors and the objective under `params`.
fn e_step(m: &AnnotationMatrix, params: &Params, s: f64) -> (Vec<Vec<f64>>, f64) {
    let k = m.n_classes;
    let mut objective = 0.0;
    let post = m
        .rows
        .iter()
        .map(|row| {
            let log: Vec<f64> = (0..k)
                .map(|c| {
                    params.priors[c].ln()
                        + row
                            .iter()
                            .enumerate()
                            .filter_map(|(a, o)| o.map(|l| params.confusion[a][c][l].ln()))
                            .sum::<f64>()
                })
                .collect();
            let lse = crate::math::log_sum_exp(&log);
            objective += lse;
            log.iter().map(|v| (v - lse).exp()).collect()
        })
        .collect();
    let prior_term: f64 = params.priors.iter().map(|p| p.ln()).sum::<f64>()
        + params.confusion.iter().flatten().flatten().map(|p| p.ln()).sum::<f64>();
    (post, objective + s * prior_term)
}

/// EM estimate of true labels and per-annotator confusion, initialised from
/// vote fractions.
pub fn dawid_skene(m: &AnnotationMatrix, cfg: &DawidSkeneConfig) -> Result<DawidSkeneResult> {
    if !(cfg.smoothing > 0.0) || !(cfg.tol > 0.0) {
        return Err(Error::Config("smoothing and tol must be positive".into()));
    }
    let k = m.n_classes;
    let mut post: Vec<Vec<f64>> = m
        .rows
        .iter()
        .map(|row| {
            let mut p = vec![0.0; k];
            let mut n = 0.0;
            for l in row.iter().flatten() {
                p[*l] += 1.0;
                n += 1.0;
            }
            p.iter_mut().for_each(|v| *v /= n);
            p
        })
        .collect();

    let mut params = m_step(m, &post, cfg.smoothing);
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    if m.n_annotators() == 1 {
        // One annotator is unidentifiable; EM would drift toward the prior.
        history.push(e_step(m, &params, cfg.smoothing).1);
        converged = true;
    }
    while !converged && iterations < cfg.max_iter {
        iterations += 1;
        let (next, objective) = e_step(m, &params, cfg.smoothing);
        history.push(objective);
        let delta = post
            .iter()
            .zip(&next)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        post = next;
        params = m_step(m, &post, cfg.smoothing);
        if delta < cfg.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("dawid-skene stopped after {iterations} iterations without converging");
    }
    Ok(DawidSkeneResult {
        consensus: post.iter().map(|p| argmax(p)).collect(),
        posteriors: post,
        priors: params.priors,
        confusion: params.confusion,
        log_likelihood: history,
        iterations,
        converged,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelAggregationOutput {
    /// Per sample, per token: consensus disagrees with the annotation.
    pub token_flags: Vec<Vec<bool>>,
    pub converged: bool,
}

impl LabelAggregationOutput {
    /// Fraction of flagged tokens in each sample.
    pub fn scores(&self) -> Vec<f64> {
        self.token_flags
            .iter()
            .map(|t| {
                if t.is_empty() {
                    0.0
                } else {
                    t.iter().filter(|&&f| f).count() as f64 / t.len() as f64
                }
            })
            .collect()
    }
}

/// Treats `passes` dropout decodes of `tagger` as annotators and flags tokens
/// whose consensus tag differs from the annotated one.
pub fn eval_label_aggregation(
    corpus: &NerCorpus,
    tagger: &TokenTagger,
    passes: usize,
    dropout_rate: f64,
    ds: &DawidSkeneConfig,
    seed: u64,
) -> Result<LabelAggregationOutput> {
    if passes == 0 {
        return Err(Error::Config("label aggregation needs at least one pass".into()));
    }
    if !(0.0..1.0).contains(&dropout_rate) {
        return Err(Error::Config(format!("dropout_rate must lie in [0, 1), got {dropout_rate}")));
    }
    let tags = tagger.tags();
    let mut rng = seeded(seed, "label-aggregation");
    let mut rows = Vec::new();
    let mut annotated = Vec::new();
    let mut lengths = Vec::new();
    for sample in corpus.samples() {
        let tagged = to_bio(sample)?;
        let tokens: Vec<Token> = tagged.iter().map(|(t, _)| t.clone()).collect();
        let decodes: Vec<Vec<usize>> = (0..passes)
            .map(|_| {
                let mut pass_rng = seeded(rng.random(), "pass");
                tagger
                    .tag_tokens_dropout(&tokens, dropout_rate, &mut pass_rng)
                    .iter()
                    .map(|t| tags.iter().position(|x| x == t).expect("decoded tag in tag set"))
                    .collect()
            })
            .collect();
        for (i, (_, tag)) in tagged.iter().enumerate() {
            rows.push(decodes.iter().map(|d| d[i]).collect::<Vec<usize>>());
            annotated.push(tags.iter().position(|x| x == tag));
        }
        lengths.push(tokens.len());
    }
    let (flat, converged) = if rows.is_empty() {
        (Vec::new(), true)
    } else {
        let result = dawid_skene(&AnnotationMatrix::dense(tags.len(), rows)?, ds)?;
        let flat: Vec<bool> = result.consensus.iter().zip(&annotated).map(|(c, a)| Some(*c) != *a).collect();
        (flat, result.converged)
    };
    let mut token_flags = Vec::with_capacity(lengths.len());
    let mut at = 0;
    for n in lengths {
        token_flags.push(flat[at..at + n].to_vec());
        at += n;
    }
    Ok(LabelAggregationOutput { token_flags, converged })
}
