//! Tree-structured Parzen Estimator over the linear trainer's search space.
//!
//! Scores are maximized. The learning rate is modelled in `log10` space.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::seeded;

pub const GAMMA: f64 = 0.25;
pub const N_STARTUP: usize = 3;
pub const N_CANDIDATES: usize = 24;
const MIN_BANDWIDTH: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HpoSpace {
    /// Log-uniform interval.
    pub learning_rate: (f64, f64),
    pub batch_sizes: Vec<usize>,
    pub weight_decay: (f64, f64),
    pub trials: usize,
}

impl Default for HpoSpace {
    fn default() -> Self {
        Self {
            learning_rate: (1e-6, 1e-3),
            batch_sizes: vec![8, 16, 32, 64],
            weight_decay: (0.0, 0.1),
            trials: 10,
        }
    }
}

impl HpoSpace {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.learning_rate;
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return Err(Error::Config(format!("invalid learning_rate interval ({lo}, {hi})")));
        }
        let (lo, hi) = self.weight_decay;
        if !(lo >= 0.0 && lo < hi && hi.is_finite()) {
            return Err(Error::Config(format!("invalid weight_decay interval ({lo}, {hi})")));
        }
        if self.batch_sizes.is_empty() || self.batch_sizes.contains(&0) {
            return Err(Error::Config("batch_sizes must be non-empty and positive".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        Ok(())
    }

    fn log_lr(&self) -> (f64, f64) {
        (self.learning_rate.0.log10(), self.learning_rate.1.log10())
    }

    fn contains(&self, p: &HpoParams) -> bool {
        let (lo, hi) = self.learning_rate;
        let (wlo, whi) = self.weight_decay;
        p.learning_rate >= lo
            && p.learning_rate <= hi
            && p.weight_decay >= wlo
            && p.weight_decay <= whi
            && self.batch_sizes.contains(&p.batch_size)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HpoParams {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
}

/// Number of observations in the "good" group for a history of `n`.
pub fn good_set_size(n: usize) -> usize {
    ((GAMMA * n as f64).ceil() as usize).clamp(1, n.max(1))
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + libm::erf(z / std::f64::consts::SQRT_2))
}

/// One-dimensional Parzen estimator on `[lo, hi]`: a truncated Gaussian per
/// observation plus a broad prior component centred on the interval.
struct Parzen {
    lo: f64,
    hi: f64,
    mus: Vec<f64>,
    sigmas: Vec<f64>,
}

impl Parzen {
    /// Scott-rule bandwidth over every observation in the dimension, so the
    /// good and bad estimators share one kernel width.
    fn bandwidth(all: &[f64], lo: f64, hi: f64) -> f64 {
        let n = all.len() as f64;
        let mean = all.iter().sum::<f64>() / n;
        let std = (all.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n).sqrt();
        (1.06 * std * n.powf(-0.2)).max(MIN_BANDWIDTH * (hi - lo))
    }

    fn fit(points: &[f64], bandwidth: f64, lo: f64, hi: f64) -> Self {
        let mut mus = points.to_vec();
        let mut sigmas = vec![bandwidth; points.len()];
        mus.push(0.5 * (lo + hi));
        sigmas.push(hi - lo);
        Self { lo, hi, mus, sigmas }
    }

    fn pdf(&self, x: f64) -> f64 {
        let w = 1.0 / self.mus.len() as f64;
        self.mus
            .iter()
            .zip(&self.sigmas)
            .map(|(&mu, &s)| {
                let mass = normal_cdf((self.hi - mu) / s) - normal_cdf((self.lo - mu) / s);
                let z = (x - mu) / s;
                w * (-0.5 * z * z).exp() / (s * (2.0 * std::f64::consts::PI).sqrt() * mass.max(1e-300))
            })
            .sum()
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        let c = rng.random_range(0..self.mus.len());
        let (mu, s) = (self.mus[c], self.sigmas[c]);
        for _ in 0..64 {
            // Box-Muller
            let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            let u2: f64 = rng.random();
            let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
            let x = mu + s * z;
            if (self.lo..=self.hi).contains(&x) {
                return x;
            }
        }
        mu.clamp(self.lo, self.hi)
    }
}

/// Smoothed categorical estimator over choice indices.
struct Categorical(Vec<f64>);

impl Categorical {
    fn fit(indices: &[usize], m: usize) -> Self {
        let mut w = vec![1.0; m];
        for &i in indices {
            w[i] += 1.0;
        }
        let total: f64 = w.iter().sum();
        Self(w.into_iter().map(|v| v / total).collect())
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        let mut u: f64 = rng.random();
        for (i, p) in self.0.iter().enumerate() {
            if u < *p {
                return i;
            }
            u -= p;
        }
        self.0.len() - 1
    }
}

fn random_draw(space: &HpoSpace, rng: &mut ChaCha8Rng) -> HpoParams {
    let (llo, lhi) = space.log_lr();
    HpoParams {
        learning_rate: 10f64.powf(rng.random_range(llo..=lhi)),
        batch_size: space.batch_sizes[rng.random_range(0..space.batch_sizes.len())],
        weight_decay: rng.random_range(space.weight_decay.0..=space.weight_decay.1),
    }
}

struct Encoded {
    log_lr: f64,
    wd: f64,
    batch: usize,
}

fn encode(space: &HpoSpace, p: &HpoParams) -> Encoded {
    let (llo, lhi) = space.log_lr();
    let batch = space
        .batch_sizes
        .iter()
        .enumerate()
        .min_by_key(|(_, &b)| b.abs_diff(p.batch_size))
        .map_or(0, |(i, _)| i);
    Encoded {
        log_lr: p.learning_rate.log10().clamp(llo, lhi),
        wd: p.weight_decay.clamp(space.weight_decay.0, space.weight_decay.1),
        batch,
    }
}

/// Proposes the next configuration given scored trials (higher is better).
pub fn tpe_suggest(history: &[(HpoParams, f64)], space: &HpoSpace, seed: u64) -> HpoParams {
    let mut rng = seeded(seed ^ (history.len() as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15), "tpe");
    if history.len() < N_STARTUP {
        return random_draw(space, &mut rng);
    }
    let mut ranked: Vec<(Encoded, f64)> = history.iter().map(|(p, s)| (encode(space, p), *s)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    let (good, bad) = ranked.split_at(good_set_size(ranked.len()));

    let (llo, lhi) = space.log_lr();
    let (wlo, whi) = space.weight_decay;
    let m = space.batch_sizes.len();
    let col = |set: &[(Encoded, f64)], f: fn(&Encoded) -> f64| set.iter().map(|(e, _)| f(e)).collect::<Vec<_>>();
    let bw_lr = Parzen::bandwidth(&col(&ranked, |e| e.log_lr), llo, lhi);
    let bw_wd = Parzen::bandwidth(&col(&ranked, |e| e.wd), wlo, whi);
    let l_lr = Parzen::fit(&col(good, |e| e.log_lr), bw_lr, llo, lhi);
    let l_wd = Parzen::fit(&col(good, |e| e.wd), bw_wd, wlo, whi);
    let l_bs = Categorical::fit(&good.iter().map(|(e, _)| e.batch).collect::<Vec<_>>(), m);
    let g_lr = Parzen::fit(&col(bad, |e| e.log_lr), bw_lr, llo, lhi);
    let g_wd = Parzen::fit(&col(bad, |e| e.wd), bw_wd, wlo, whi);
    let g_bs = Categorical::fit(&bad.iter().map(|(e, _)| e.batch).collect::<Vec<_>>(), m);

    let mut best: Option<(f64, HpoParams)> = None;
    for _ in 0..N_CANDIDATES {
        let lr = l_lr.sample(&mut rng);
        let wd = l_wd.sample(&mut rng);
        let bs = l_bs.sample(&mut rng);
        let ratio = (l_lr.pdf(lr) / g_lr.pdf(lr)).ln()
            + (l_wd.pdf(wd) / g_wd.pdf(wd)).ln()
            + (l_bs.0[bs] / g_bs.0[bs]).ln();
        if best.as_ref().is_none_or(|(r, _)| ratio > *r) {
            best = Some((
                ratio,
                HpoParams {
                    learning_rate: 10f64.powf(lr),
                    batch_size: space.batch_sizes[bs],
                    weight_decay: wd,
                },
            ));
        }
    }
    best.map(|(_, p)| p).expect("N_CANDIDATES > 0")
}

/// Runs `space.trials` sequential trials and returns the scored history.
pub fn optimize<F>(space: &HpoSpace, seed: u64, mut objective: F) -> Result<Vec<(HpoParams, f64)>>
where
    F: FnMut(&HpoParams, usize) -> Result<f64>,
{
    space.validate()?;
    let mut history = Vec::with_capacity(space.trials);
    for trial in 0..space.trials {
        let params = tpe_suggest(&history, space, seed);
        debug_assert!(space.contains(&params));
        let score = objective(&params, trial)?;
        if !score.is_finite() {
            return Err(Error::Config(format!("trial {trial} produced a non-finite score")));
        }
        history.push((params, score));
    }
    Ok(history)
}

/// Index of the best-scoring trial; the earliest wins ties.
pub fn best_trial(history: &[(HpoParams, f64)]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, (_, s)) in history.iter().enumerate() {
        if best.is_none_or(|b| *s > history[b].1) {
            best = Some(i);
        }
    }
    best
}
