//! Out-of-distribution scoring and threshold calibration.
//!
//! Scores are oriented so that higher means more likely out of distribution.
//! A sample is flagged iff its score exceeds `base_threshold * threshold_factor`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::softmax;

/// Label reported for inputs flagged as out of scope.
pub const OUT_OF_SCOPE: &str = "outOfScope";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OodMethod {
    MarginalMahalanobis,
    MaxSoftmaxProb,
    ExplicitOutOfScopeClass,
}

impl OodMethod {
    pub fn flag(self) -> &'static str {
        match self {
            OodMethod::MarginalMahalanobis => "mahalanobis",
            OodMethod::MaxSoftmaxProb => "msp",
            OodMethod::ExplicitOutOfScopeClass => "out_of_scope_class",
        }
    }

    /// Parses an `ood_method` flag value; `"none"` disables detection.
    pub fn from_flag(flag: &str) -> Result<Option<OodMethod>> {
        match flag {
            "mahalanobis" => Ok(Some(OodMethod::MarginalMahalanobis)),
            "msp" => Ok(Some(OodMethod::MaxSoftmaxProb)),
            "out_of_scope_class" => Ok(Some(OodMethod::ExplicitOutOfScopeClass)),
            "none" => Ok(None),
            other => Err(Error::Config(format!(
                "invalid ood_method `{other}`; expected one of mahalanobis, msp, out_of_scope_class, none"
            ))),
        }
    }
}

impl fmt::Display for OodMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.flag())
    }
}

impl FromStr for OodMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OodMethod::from_flag(s)?
            .ok_or_else(|| Error::Config("`none` is not a detection method".into()))
    }
}

/// Mean and precision (inverse covariance) of a single Gaussian fitted to
/// all training features regardless of class.
#[derive(Clone, Debug, PartialEq)]
pub struct MahalanobisStats {
    dim: usize,
    mean: Vec<f32>,
    /// Row-major `dim x dim`.
    precision: Vec<f32>,
}

impl MahalanobisStats {
    pub fn new(mean: Vec<f32>, precision: Vec<f32>) -> Result<Self> {
        let dim = mean.len();
        if precision.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                actual: precision.len(),
            });
        }
        Ok(Self {
            dim,
            mean,
            precision,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mean(&self) -> &[f32] {
        &self.mean
    }

    pub fn precision(&self) -> &[f32] {
        &self.precision
    }

    pub fn distance(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: x.len(),
            });
        }
        let diff: Vec<f64> = x
            .iter()
            .zip(&self.mean)
            .map(|(v, m)| v - f64::from(*m))
            .collect();
        let mut quad = 0.0;
        for (i, row) in self.precision.chunks_exact(self.dim).enumerate() {
            if diff[i] == 0.0 {
                continue;
            }
            let r: f64 = row.iter().zip(&diff).map(|(p, d)| f64::from(*p) * d).sum();
            quad += diff[i] * r;
        }
        Ok(quad.max(0.0).sqrt())
    }
}

/// Fits the marginal Gaussian with covariance
/// `(1 - shrinkage) * S + shrinkage * (tr(S) / dim) * I`.
pub fn fit_mahalanobis<V: AsRef<[f64]>>(features: &[V], shrinkage: f64) -> Result<MahalanobisStats> {
    if !(shrinkage > 0.0 && shrinkage <= 1.0) {
        return Err(Error::Config(format!("shrinkage must lie in (0, 1], got {shrinkage}")));
    }
    let n = features.len();
    if n == 0 {
        return Err(Error::EmptyCorpus);
    }
    let dim = features[0].as_ref().len();
    for f in features {
        if f.as_ref().len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: f.as_ref().len(),
            });
        }
    }
    let mut mean = vec![0.0; dim];
    for f in features {
        for (m, v) in mean.iter_mut().zip(f.as_ref()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let centered = DMatrix::from_fn(n, dim, |i, j| features[i].as_ref()[j] - mean[j]);
    let mut cov = centered.transpose() * &centered;
    if n > 1 {
        cov /= (n - 1) as f64;
    }
    let scale = cov.trace() / dim as f64;
    cov *= 1.0 - shrinkage;
    for i in 0..dim {
        cov[(i, i)] += shrinkage * scale;
    }
    let chol = cov
        .cholesky()
        .filter(|_| scale > 0.0)
        .ok_or(Error::SingularCovariance { shrinkage })?;
    let inv = chol.inverse();
    let mut precision = Vec::with_capacity(dim * dim);
    for i in 0..dim {
        for j in 0..dim {
            // symmetrize away round-off
            precision.push((0.5 * (inv[(i, j)] + inv[(j, i)])) as f32);
        }
    }
    if precision.iter().any(|p| !p.is_finite()) {
        return Err(Error::SingularCovariance { shrinkage });
    }
    MahalanobisStats::new(mean.into_iter().map(|m| m as f32).collect(), precision)
}

/// `1 - max softmax(logits)`.
pub fn msp_score(logits: &[f64]) -> f64 {
    let p = softmax(logits);
    1.0 - p.iter().copied().fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq)]
pub enum OodScorer {
    Mahalanobis(MahalanobisStats),
    MaxSoftmax,
    /// Probability mass on the dedicated out-of-scope class at `index`.
    OutOfScopeClass { index: usize },
}

impl OodScorer {
    pub fn method(&self) -> OodMethod {
        match self {
            OodScorer::Mahalanobis(_) => OodMethod::MarginalMahalanobis,
            OodScorer::MaxSoftmax => OodMethod::MaxSoftmaxProb,
            OodScorer::OutOfScopeClass { .. } => OodMethod::ExplicitOutOfScopeClass,
        }
    }

    /// Scores one input given the classifier's head features and logits.
    pub fn score(&self, features: &[f64], logits: &[f64]) -> Result<f64> {
        match self {
            OodScorer::Mahalanobis(stats) => stats.distance(features),
            OodScorer::MaxSoftmax => Ok(msp_score(logits)),
            OodScorer::OutOfScopeClass { index } => {
                if *index >= logits.len() {
                    return Err(Error::DimensionMismatch {
                        expected: index + 1,
                        actual: logits.len(),
                    });
                }
                Ok(softmax(logits)[*index])
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub base_threshold: f64,
    pub threshold_factor: f64,
    /// F1 of the binary decision at the base threshold on the calibration mix.
    pub f1: f64,
}

impl Calibration {
    pub fn effective_threshold(&self) -> f64 {
        self.base_threshold * self.threshold_factor
    }

    pub fn with_factor(self, threshold_factor: f64) -> Self {
        Self {
            threshold_factor,
            ..self
        }
    }
}

/// Picks the base threshold maximizing F1 of `score > t` with the synthetic
/// OOD scores as positives. Candidates are midpoints between adjacent
/// distinct scores; ties go to the lowest candidate.
pub fn calibrate(id_scores: &[f64], ood_scores: &[f64], threshold_factor: f64) -> Result<Calibration> {
    if id_scores.is_empty() || ood_scores.is_empty() {
        return Err(Error::Config("calibration needs ID and OOD scores".into()));
    }
    if !threshold_factor.is_finite() || threshold_factor < 0.0 {
        return Err(Error::Config(format!("invalid threshold_factor {threshold_factor}")));
    }
    let mut all: Vec<(f64, bool)> = id_scores
        .iter()
        .map(|&s| (s, false))
        .chain(ood_scores.iter().map(|&s| (s, true)))
        .collect();
    if all.iter().any(|(s, _)| !s.is_finite()) {
        return Err(Error::Config("calibration scores must be finite".into()));
    }
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    if all.first().map(|a| a.0) == all.last().map(|a| a.0) {
        return Err(Error::DegenerateScores(all[0].0));
    }

    let positives = ood_scores.len();
    // sweep: everything above the cut is flagged
    let mut best: Option<(f64, f64)> = None;
    let mut below_pos = 0usize;
    let mut below = 0usize;
    let mut i = 0;
    while i < all.len() {
        let v = all[i].0;
        while i < all.len() && all[i].0 == v {
            below += 1;
            below_pos += usize::from(all[i].1);
            i += 1;
        }
        if i == all.len() {
            break;
        }
        let threshold = 0.5 * (v + all[i].0);
        let tp = positives - below_pos;
        let flagged = all.len() - below;
        let fn_ = below_pos;
        let f1 = 2.0 * tp as f64 / (flagged + tp + fn_) as f64;
        if best.is_none_or(|(_, b)| f1 > b) {
            best = Some((threshold, f1));
        }
    }
    let (base_threshold, f1) = best.expect("at least two distinct scores");
    Ok(Calibration {
        base_threshold,
        threshold_factor,
        f1,
    })
}

/// A fitted scorer with its calibrated decision threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct OodDetector {
    pub scorer: OodScorer,
    pub calibration: Calibration,
}

impl OodDetector {
    pub fn method(&self) -> OodMethod {
        self.scorer.method()
    }

    pub fn score(&self, features: &[f64], logits: &[f64]) -> Result<f64> {
        self.scorer.score(features, logits)
    }

    pub fn is_ood(&self, score: f64) -> bool {
        score > self.calibration.effective_threshold()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn identity(dim: usize) -> Vec<f32> {
        let mut m = vec![0.0; dim * dim];
        for i in 0..dim {
            m[i * dim + i] = 1.0;
        }
        m
    }

    #[test]
    fn mean_of_square() {
        let pts = vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![0.0, 2.0], vec![2.0, 2.0]];
        let stats = fit_mahalanobis(&pts, 0.1).unwrap();
        assert_eq!(stats.mean(), &[1.0, 1.0]);
        assert!(stats.distance(&[1.0, 1.0]).unwrap().abs() < 1e-12);
    }

    #[test]
    fn full_shrinkage_is_scaled_identity() {
        let pts = vec![vec![0.0, 0.0, 1.0], vec![3.0, 1.0, 0.0], vec![1.0, 5.0, 2.0]];
        let stats = fit_mahalanobis(&pts, 1.0).unwrap();
        // sample covariance trace
        let n = pts.len() as f64;
        let mut tr = 0.0;
        for j in 0..3 {
            let m: f64 = pts.iter().map(|p| p[j]).sum::<f64>() / n;
            tr += pts.iter().map(|p| (p[j] - m).powi(2)).sum::<f64>() / (n - 1.0);
        }
        let expected = 3.0 / tr;
        for i in 0..3 {
            for j in 0..3 {
                let p = f64::from(stats.precision()[i * 3 + j]);
                let e = if i == j { expected } else { 0.0 };
                assert!((p - e).abs() < 1e-6, "{i},{j}: {p}");
            }
        }
    }

    #[test]
    fn identical_points_are_singular() {
        let pts = vec![vec![1.0, 1.0]; 5];
        assert!(matches!(
            fit_mahalanobis(&pts, 1.0),
            Err(Error::SingularCovariance { .. })
        ));
    }

    #[test]
    fn euclidean_case() {
        let stats = MahalanobisStats::new(vec![0.0, 0.0], identity(2)).unwrap();
        assert!((stats.distance(&[3.0, 4.0]).unwrap() - 5.0).abs() < 1e-12);
        assert!(matches!(
            stats.distance(&[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn msp_values() {
        assert!((msp_score(&[0.0; 4]) - 0.75).abs() < 1e-12);
        let e10 = 10f64.exp();
        let expected = 1.0 - e10 / (e10 + 2.0);
        assert!((msp_score(&[10.0, 0.0, 0.0]) - expected).abs() < 1e-15);
        assert!((expected - 9.0797e-5).abs() < 1e-8);
    }

    #[test]
    fn explicit_class_score() {
        let scorer = OodScorer::OutOfScopeClass { index: 2 };
        let s = scorer.score(&[], &[0.0, 0.0, 0.0]).unwrap();
        assert!((s - 1.0 / 3.0).abs() < 1e-12);
        assert!(scorer.score(&[], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn perfect_separation_picks_gap_midpoint() {
        let cal = calibrate(&[0.1, 0.5, 0.9], &[2.5, 3.0, 2.1], 1.0).unwrap();
        assert!((cal.base_threshold - 1.5).abs() < 1e-12);
        assert_eq!(cal.f1, 1.0);
        let doubled = calibrate(&[0.1, 0.5, 0.9], &[2.5, 3.0, 2.1], 2.0).unwrap();
        assert!((doubled.effective_threshold() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn separated_gaussians_auroc() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        // 0.9976 on seed 7; bound from the analytic value Phi(4 / sqrt 2)
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let id_dist = Normal::new(0.0, 1.0).unwrap();
        let ood_dist = Normal::new(4.0, 1.0).unwrap();
        let id: Vec<f64> = (0..500).map(|_| id_dist.sample(&mut rng)).collect();
        let ood: Vec<f64> = (0..500).map(|_| ood_dist.sample(&mut rng)).collect();
        let auc = crate::metrics::auroc(&id, &ood);
        assert!(auc >= 0.95, "{auc}");
        let cal = calibrate(&id, &ood, 1.0).unwrap();
        assert!(cal.base_threshold > 1.0 && cal.base_threshold < 3.0);
    }

    #[test]
    fn degenerate_scores() {
        assert!(matches!(
            calibrate(&[1.0, 1.0], &[1.0], 1.0),
            Err(Error::DegenerateScores(_))
        ));
    }

    #[test]
    fn flags() {
        assert_eq!(OodMethod::from_flag("none").unwrap(), None);
        assert_eq!(
            OodMethod::from_flag("msp").unwrap(),
            Some(OodMethod::MaxSoftmaxProb)
        );
        let err = OodMethod::from_flag("energy").unwrap_err().to_string();
        assert!(err.contains("ood_method"));
    }

    proptest! {
        #[test]
        fn flagged_set_is_antitone_in_factor(
            id in prop::collection::vec(0.0f64..5.0, 1..40),
            ood in prop::collection::vec(0.0f64..10.0, 1..40),
            f1 in 0.0f64..3.0,
            df in 0.0f64..3.0,
        ) {
            prop_assume!(id.iter().chain(&ood).any(|&s| s != id[0]));
            let lo = calibrate(&id, &ood, f1).unwrap();
            let hi = lo.with_factor(f1 + df);
            let count = |c: &Calibration| id.iter().chain(&ood).filter(|&&s| s > c.effective_threshold()).count();
            prop_assert!(count(&hi) <= count(&lo));
        }

        #[test]
        fn msp_is_bounded(logits in prop::collection::vec(-20.0f64..20.0, 2..8)) {
            let k = logits.len() as f64;
            let s = msp_score(&logits);
            prop_assert!(s >= 0.0 && s <= 1.0 - 1.0 / k + 1e-12);
        }

        #[test]
        fn refit_after_scaling_preserves_distances(
            pts in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), 6..20),
            probe in prop::collection::vec(-3.0f64..3.0, 3),
        ) {
            let Ok(a) = fit_mahalanobis(&pts, 0.2) else { return Ok(()) };
            let doubled: Vec<Vec<f64>> = pts.iter().map(|p| p.iter().map(|v| 2.0 * v).collect()).collect();
            let b = fit_mahalanobis(&doubled, 0.2).unwrap();
            let da = a.distance(&probe).unwrap();
            let db = b.distance(&probe.iter().map(|v| 2.0 * v).collect::<Vec<_>>()).unwrap();
            prop_assert!((da - db).abs() <= 1e-4 * (1.0 + da), "{} vs {}", da, db);
        }

        #[test]
        fn fit_is_order_invariant(
            pts in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), 6..20),
            probe in prop::collection::vec(-3.0f64..3.0, 3),
        ) {
            let Ok(a) = fit_mahalanobis(&pts, 0.2) else { return Ok(()) };
            let mut rev = pts.clone();
            rev.reverse();
            let b = fit_mahalanobis(&rev, 0.2).unwrap();
            let da = a.distance(&probe).unwrap();
            let db = b.distance(&probe).unwrap();
            prop_assert!((da - db).abs() <= 1e-4 * (1.0 + da));
        }
    }
}
