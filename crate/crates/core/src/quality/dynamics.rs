use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::ClassificationCorpus;
use crate::embed::{Featurizer, TextEncoder};
use crate::error::{Error, Result};
use crate::math::mean_std;
use crate::train::linear::{fit_softmax, LinearConfig};
use crate::train::trace::TrainingTrace;
use crate::train::{embed_corpus, label_indices};

use super::EvaluatorResult;

/// Text fed to the null model in place of every input.
pub const BLANK_TOKEN: &str = "_";
const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Dynamics {
    pub trace: TrainingTrace,
    pub null_trace: TrainingTrace,
}

/// Trains the linear backend on the whole corpus for `epochs` epochs,
/// recording per-sample logits, plus a null model that sees only
/// [`BLANK_TOKEN`].
pub fn dynamic_tune(
    corpus: &ClassificationCorpus,
    featurizer: &Featurizer,
    linear: &LinearConfig,
    epochs: usize,
    seed: u64,
) -> Result<Dynamics> {
    if epochs == 0 {
        return Err(Error::Config("dynamic tuning needs at least one epoch".into()));
    }
    let labels = corpus.labels();
    let y = label_indices(corpus, &labels);
    let ids: Vec<usize> = (0..corpus.len()).collect();
    let cfg = LinearConfig { epochs, ..linear.clone() };

    let x = embed_corpus(featurizer, corpus);
    let mut trace = TrainingTrace::new(ids.clone(), y.clone());
    fit_softmax(&x, &y, labels.len(), None, &cfg, seed, Some(&mut trace))?;

    let blank = featurizer.encode(BLANK_TOKEN).0;
    let xb = vec![blank; corpus.len()];
    let mut null_trace = TrainingTrace::new(ids, y.clone());
    fit_softmax(&xb, &y, labels.len(), None, &cfg, seed, Some(&mut null_trace))?;
    Ok(Dynamics { trace, null_trace })
}

/// Final-epoch gold probability; flagged below `tau`.
pub fn eval_uncertainty(trace: &TrainingTrace, tau: f64) -> EvaluatorResult {
    let scores: Vec<f64> = (0..trace.len()).map(|i| trace.final_gold_prob(i).unwrap_or(0.0)).collect();
    let flags = scores.iter().map(|&p| p < tau).collect();
    EvaluatorResult { scores, flags }
}

/// Pointwise V-information in bits.
pub fn pvi(p_trained: f64, p_null: f64) -> f64 {
    p_trained.max(PROB_FLOOR).log2() - p_null.max(PROB_FLOOR).log2()
}

/// PVI at the final epoch; flagged when it is not positive.
pub fn eval_pvi(trace: &TrainingTrace, null_trace: &TrainingTrace) -> Result<EvaluatorResult> {
    if trace.sample_ids != null_trace.sample_ids {
        return Err(Error::LengthMismatch {
            gold: trace.len(),
            pred: null_trace.len(),
        });
    }
    let scores: Vec<f64> = (0..trace.len())
        .map(|i| pvi(trace.final_gold_prob(i).unwrap_or(0.0), null_trace.final_gold_prob(i).unwrap_or(0.0)))
        .collect();
    let flags = scores.iter().map(|&v| v <= 0.0).collect();
    Ok(EvaluatorResult { scores, flags })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    EasyToLearn,
    Ambiguous,
    HardToLearn,
}

impl Region {
    pub fn name(self) -> &'static str {
        match self {
            Region::EasyToLearn => "easy_to_learn",
            Region::Ambiguous => "ambiguous",
            Region::HardToLearn => "hard_to_learn",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CartographyThresholds {
    pub conf_max: f64,
    pub var_max: f64,
    pub easy_min: f64,
}

impl Default for CartographyThresholds {
    fn default() -> Self {
        Self {
            conf_max: 0.5,
            var_max: 0.2,
            easy_min: 0.75,
        }
    }
}

impl CartographyThresholds {
    pub fn region(&self, confidence: f64, variability: f64) -> Region {
        if variability < self.var_max && confidence < self.conf_max {
            Region::HardToLearn
        } else if variability < self.var_max && confidence >= self.easy_min {
            Region::EasyToLearn
        } else {
            Region::Ambiguous
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CartographyPoint {
    pub id: usize,
    pub confidence: f64,
    /// Population standard deviation of the gold probability.
    pub variability: f64,
    pub region: Region,
}

pub fn cartography_point(id: usize, gold_probs: &[f64], thresholds: &CartographyThresholds) -> CartographyPoint {
    let (confidence, variability) = mean_std(gold_probs);
    CartographyPoint {
        id,
        confidence,
        variability,
        region: thresholds.region(confidence, variability),
    }
}

/// Data map over a trace; hard-to-learn samples are flagged and scored by
/// their confidence.
pub fn eval_cartography(
    trace: &TrainingTrace,
    thresholds: &CartographyThresholds,
) -> Result<(Vec<CartographyPoint>, EvaluatorResult)> {
    if trace.epochs() < 2 {
        return Err(Error::Config(format!(
            "cartography needs at least 2 epochs, trace has {}",
            trace.epochs()
        )));
    }
    let points: Vec<CartographyPoint> = (0..trace.len())
        .map(|i| cartography_point(trace.sample_ids[i], &trace.gold_probs(i), thresholds))
        .collect();
    let result = EvaluatorResult {
        scores: points.iter().map(|p| p.confidence).collect(),
        flags: points.iter().map(|p| p.region == Region::HardToLearn).collect(),
    };
    Ok((points, result))
}

pub fn data_map_csv(points: &[CartographyPoint]) -> String {
    let mut out = String::from("id,confidence,variability,region\n");
    for p in points {
        let _ = writeln!(out, "{},{},{},{}", p.id, p.confidence, p.variability, p.region.name());
    }
    out
}

/// Scatter plot of variability (x) against confidence (y).
pub fn data_map_svg(points: &[CartographyPoint]) -> String {
    const W: f64 = 480.0;
    const H: f64 = 480.0;
    const PAD: f64 = 40.0;
    let x = |v: f64| PAD + v / 0.5 * (W - 2.0 * PAD);
    let y = |c: f64| H - PAD - c * (H - 2.0 * PAD);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <line x1=\"{PAD}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{PAD}\" y1=\"{PAD}\" x2=\"{PAD}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <text x=\"{cx}\" y=\"{t}\" text-anchor=\"middle\" font-size=\"12\">variability</text>\n\
         <text x=\"12\" y=\"{cy}\" font-size=\"12\" transform=\"rotate(-90 12 {cy})\">confidence</text>\n",
        b = H - PAD,
        r = W - PAD,
        cx = W / 2.0,
        t = H - 10.0,
        cy = H / 2.0,
    );
    for p in points {
        let color = match p.region {
            Region::EasyToLearn => "#1b9e77",
            Region::Ambiguous => "#7570b3",
            Region::HardToLearn => "#d95f02",
        };
        let _ = writeln!(
            svg,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"{color}\" fill-opacity=\"0.7\"/>",
            x(p.variability),
            y(p.confidence)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

pub fn write_data_map(points: &[CartographyPoint], dir: &Path) -> Result<()> {
    for (name, body) in [("data_map.csv", data_map_csv(points)), ("data_map.svg", data_map_svg(points))] {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_computed_points() {
        let t = CartographyThresholds::default();
        let p = cartography_point(0, &[0.9, 0.9, 0.9], &t);
        assert!((p.confidence - 0.9).abs() < 1e-12 && p.variability.abs() < 1e-12);
        assert_eq!(p.region, Region::EasyToLearn);
        let p = cartography_point(1, &[0.2, 0.2, 0.2], &t);
        assert_eq!(p.region, Region::HardToLearn);
        let p = cartography_point(2, &[0.1, 0.9, 0.5], &t);
        assert!((p.confidence - 0.5).abs() < 1e-12);
        assert!((p.variability - (0.32f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((p.variability - 0.3266).abs() < 1e-4);
        assert_eq!(p.region, Region::Ambiguous);
    }

    #[test]
    fn uncertainty_boundary() {
        let mut t = TrainingTrace::new(vec![0, 1], vec![0, 0]);
        let logit = |p: f64| vec![(p / (1.0 - p)).ln(), 0.0];
        t.push_epoch(vec![logit(0.9), logit(0.49)]).unwrap();
        let r = eval_uncertainty(&t, 0.5);
        assert_eq!(r.flags, vec![false, true]);
        assert!(eval_uncertainty(&t, 0.0).flags.iter().all(|f| !f));
    }

    #[test]
    fn pvi_values() {
        assert_eq!(pvi(0.3, 0.3), 0.0);
        assert!((pvi(0.5, 0.25) - 1.0).abs() < 1e-12);
        assert!(pvi(0.0, 0.5).is_finite());
    }

    #[test]
    fn csv_header() {
        let t = CartographyThresholds::default();
        let csv = data_map_csv(&[cartography_point(3, &[0.2, 0.2], &t)]);
        assert!(csv.starts_with("id,confidence,variability,region\n3,"));
        assert!(csv.trim_end().ends_with("hard_to_learn"));
        assert!(data_map_svg(&[]).contains("<svg"));
    }

    proptest! {
        #[test]
        fn bounds_and_totality(probs in prop::collection::vec(0.0f64..=1.0, 2..12)) {
            let p = cartography_point(0, &probs, &CartographyThresholds::default());
            prop_assert!((0.0..=1.0).contains(&p.confidence));
            prop_assert!(p.variability >= 0.0 && p.variability <= 0.5 + 1e-12);
        }

        #[test]
        fn pvi_antisymmetric(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            prop_assert!((pvi(a, b) + pvi(b, a)).abs() < 1e-9);
        }
    }
}
