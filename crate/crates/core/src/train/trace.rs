use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::softmax;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub gold_prob: f64,
    pub logits: Vec<f64>,
}

/// Per-sample training dynamics: one record per (sample, epoch).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    /// Corpus index of each traced sample.
    pub sample_ids: Vec<usize>,
    pub gold: Vec<usize>,
    /// `records[i][e]` belongs to `sample_ids[i]` at epoch `e`.
    pub records: Vec<Vec<EpochRecord>>,
}

impl TrainingTrace {
    pub fn new(sample_ids: Vec<usize>, gold: Vec<usize>) -> Self {
        let records = vec![Vec::new(); sample_ids.len()];
        Self {
            sample_ids,
            gold,
            records,
        }
    }

    pub fn len(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }

    pub fn epochs(&self) -> usize {
        self.records.first().map_or(0, Vec::len)
    }

    /// Appends an epoch from per-sample logits, in trace order.
    pub fn push_epoch(&mut self, logits: Vec<Vec<f64>>) -> Result<()> {
        if logits.len() != self.len() {
            return Err(Error::LengthMismatch {
                gold: self.len(),
                pred: logits.len(),
            });
        }
        for ((records, l), &g) in self.records.iter_mut().zip(logits).zip(&self.gold) {
            let gold_prob = softmax(&l)[g];
            records.push(EpochRecord { gold_prob, logits: l });
        }
        Ok(())
    }

    /// Gold-class probabilities over epochs for trace row `i`.
    pub fn gold_probs(&self, i: usize) -> Vec<f64> {
        self.records[i].iter().map(|r| r.gold_prob).collect()
    }

    pub fn final_gold_prob(&self, i: usize) -> Option<f64> {
        self.records[i].last().map(|r| r.gold_prob)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gold_prob_matches_softmax() {
        let mut t = TrainingTrace::new(vec![4, 9], vec![0, 1]);
        t.push_epoch(vec![vec![2.0, 0.0], vec![0.0, 0.0]]).unwrap();
        t.push_epoch(vec![vec![3.0, 1.0], vec![-1.0, 1.0]]).unwrap();
        assert_eq!(t.epochs(), 2);
        let e2 = 2f64.exp();
        assert!((t.records[0][0].gold_prob - e2 / (e2 + 1.0)).abs() < 1e-12);
        assert_eq!(t.gold_probs(1)[0], 0.5);
        assert!(t.push_epoch(vec![vec![0.0, 0.0]]).is_err());
    }
}
