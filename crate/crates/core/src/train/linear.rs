//! Multinomial logistic regression trained with mini-batch AdamW.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{argmax, dot, softmax};
use crate::rng::seeded;
use crate::train::trace::TrainingTrace;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinearConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub epochs: usize,
    /// Evaluations without improvement before stopping; only used with a
    /// validation set.
    pub patience: usize,
}

impl Default for LinearConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            batch_size: 16,
            weight_decay: 0.01,
            epochs: 30,
            patience: 5,
        }
    }
}

impl LinearConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch_size and epochs must be >= 1".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config(format!("weight_decay must be >= 0, got {}", self.weight_decay)));
        }
        Ok(())
    }
}

/// Adam moments with decoupled weight decay.
#[derive(Clone, Debug)]
pub(crate) struct AdamW {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamW {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub(crate) fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// One update; only the first `decay_upto` parameters are decayed.
    pub(crate) fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64, weight_decay: f64, decay_upto: usize) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
            *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
            if i < decay_upto {
                *p -= lr * weight_decay * *p;
            }
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

/// Dense softmax head: `logits = W x + b`, with `W` stored row-major `k x d`
/// followed by `b` in a single parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftmaxHead {
    pub k: usize,
    pub d: usize,
    pub params: Vec<f64>,
}

impl SoftmaxHead {
    pub(crate) fn zeros(k: usize, d: usize) -> Self {
        Self {
            k,
            d,
            params: vec![0.0; k * d + k],
        }
    }

    pub(crate) fn weights(&self) -> &[f64] {
        &self.params[..self.k * self.d]
    }

    pub(crate) fn bias(&self) -> &[f64] {
        &self.params[self.k * self.d..]
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let (w, b) = self.params.split_at(self.k * self.d);
        w.chunks_exact(self.d)
            .zip(b)
            .map(|(row, bias)| dot(row, x) + bias)
            .collect()
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.logits(x))
    }
}

/// Macro-F1 over the classes that occur in `gold` or `pred`.
pub(crate) fn macro_f1(gold: &[usize], pred: &[usize], k: usize) -> f64 {
    let mut tp = vec![0usize; k];
    let mut gold_n = vec![0usize; k];
    let mut pred_n = vec![0usize; k];
    for (&g, &p) in gold.iter().zip(pred) {
        gold_n[g] += 1;
        pred_n[p] += 1;
        if g == p {
            tp[g] += 1;
        }
    }
    let mut sum = 0.0;
    let mut present = 0;
    for c in 0..k {
        if gold_n[c] + pred_n[c] == 0 {
            continue;
        }
        present += 1;
        sum += 2.0 * tp[c] as f64 / (gold_n[c] + pred_n[c]) as f64;
    }
    if present == 0 {
        0.0
    } else {
        sum / present as f64
    }
}

pub(crate) struct FitOutcome {
    pub head: SoftmaxHead,
    /// 1-based epoch of the retained checkpoint.
    pub best_epoch: usize,
    pub best_val: Option<f64>,
    pub val_history: Vec<f64>,
}

/// Fits a softmax head on dense vectors without early stopping.
pub fn train_head(x: &[Vec<f64>], y: &[usize], k: usize, cfg: &LinearConfig, seed: u64) -> Result<SoftmaxHead> {
    Ok(fit_softmax(x, y, k, None, cfg, seed, None)?.head)
}

/// Trains a softmax head. With `val`, the checkpoint with the best
/// validation macro-F1 is kept and training stops after `patience`
/// evaluations without improvement. Each epoch appends the training-set
/// logits to `trace` when given.
pub(crate) fn fit_softmax(
    x: &[Vec<f64>],
    y: &[usize],
    k: usize,
    val: Option<(&[Vec<f64>], &[usize])>,
    cfg: &LinearConfig,
    seed: u64,
    mut trace: Option<&mut TrainingTrace>,
) -> Result<FitOutcome> {
    cfg.validate()?;
    if x.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if x.len() != y.len() {
        return Err(Error::LengthMismatch { gold: y.len(), pred: x.len() });
    }
    let d = x[0].len();
    if let Some(bad) = x.iter().find(|v| v.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, actual: bad.len() });
    }
    let mut head = SoftmaxHead::zeros(k, d);
    let mut opt = AdamW::new(head.params.len());
    let mut grads = vec![0.0; head.params.len()];
    let mut order: Vec<usize> = (0..x.len()).collect();
    let mut rng = seeded(seed, "linear");

    let mut best = (head.clone(), 0usize, f64::NEG_INFINITY);
    let mut val_history = Vec::new();
    let mut since_best = 0;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            grads.iter_mut().for_each(|g| *g = 0.0);
            let mut loss = 0.0;
            for &i in batch {
                let mut p = softmax(&head.logits(&x[i]));
                loss -= p[y[i]].ln();
                p[y[i]] -= 1.0;
                let (gw, gb) = grads.split_at_mut(k * d);
                for (c, pc) in p.iter().enumerate() {
                    gb[c] += pc;
                    if *pc != 0.0 {
                        for (g, xv) in gw[c * d..(c + 1) * d].iter_mut().zip(&x[i]) {
                            *g += pc * xv;
                        }
                    }
                }
            }
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            let scale = 1.0 / batch.len() as f64;
            grads.iter_mut().for_each(|g| *g *= scale);
            opt.step(&mut head.params, &grads, cfg.learning_rate, cfg.weight_decay, k * d);
        }
        if head.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence { epoch });
        }
        if let Some(t) = trace.as_deref_mut() {
            t.push_epoch(x.iter().map(|v| head.logits(v)).collect())?;
        }
        if let Some((vx, vy)) = val {
            let pred: Vec<usize> = vx.iter().map(|v| head.predict(v)).collect();
            let score = macro_f1(vy, &pred, k);
            val_history.push(score);
            if score > best.2 {
                best = (head.clone(), epoch, score);
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= cfg.patience {
                    break;
                }
            }
        } else {
            best = (head.clone(), epoch, f64::NAN);
        }
    }
    let (head, best_epoch, score) = best;
    Ok(FitOutcome {
        head,
        best_epoch,
        best_val: val.map(|_| score),
        val_history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blobs(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let c = i % 2;
            let shift = if c == 0 { -1.0 } else { 1.0 };
            x.push(vec![shift + rng.random_range(-0.5..0.5), rng.random_range(-1.0..1.0)]);
            y.push(c);
        }
        (x, y)
    }

    #[test]
    fn separable_blobs() {
        let (x, y) = blobs(400, 1);
        let out = fit_softmax(&x, &y, 2, None, &LinearConfig::default(), 0, None).unwrap();
        let pred: Vec<usize> = x.iter().map(|v| out.head.predict(v)).collect();
        assert_eq!(macro_f1(&y, &pred, 2), 1.0);
        assert_eq!(out.best_epoch, 30);
    }

    #[test]
    fn retained_checkpoint_dominates_later_evaluations() {
        let (x, y) = blobs(200, 2);
        let (vx, mut vy) = blobs(60, 3);
        // noisy validation labels make the curve non-monotone
        for i in (0..vy.len()).step_by(3) {
            vy[i] = 1 - vy[i];
        }
        let out = fit_softmax(&x, &y, 2, Some((&vx, &vy)), &LinearConfig::default(), 0, None).unwrap();
        let best = out.best_val.unwrap();
        assert!(out.val_history[out.best_epoch - 1..].iter().all(|&v| v <= best));
        assert!(out.val_history.len() <= 30);
    }

    #[test]
    fn divergence_is_reported() {
        let x = vec![vec![1e300, -1e300], vec![-1e300, 1e300]];
        let y = vec![0, 1];
        let cfg = LinearConfig { learning_rate: 1e300, ..Default::default() };
        assert!(matches!(
            fit_softmax(&x, &y, 2, None, &cfg, 0, None),
            Err(Error::Divergence { .. })
        ));
    }

    #[test]
    fn macro_f1_hand_case() {
        // gold a a b b, pred a b b b
        let f = macro_f1(&[0, 0, 1, 1], &[0, 1, 1, 1], 2);
        assert!((f - (2.0 / 3.0 + 0.8) / 2.0).abs() < 1e-12);
    }
}
