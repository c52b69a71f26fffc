//! Evaluation reports: top-k accuracy, confusion matrix, per-class metrics
//! and the frequency-baserate comparison.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How many top-k levels are reported explicitly.
pub const TOP_K_LEVELS: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    /// True-label count in the evaluated set.
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classes: Vec<String>,
    pub n_test: usize,
    /// Accuracy when the model is allowed 1..=TOP_K_LEVELS guesses.
    pub top_k_accuracy: Vec<f64>,
    /// Accuracy with all classes allowed; 1.0 by construction.
    pub top_m_accuracy: f64,
    /// Same allotments for a model that ranks classes by training frequency.
    pub baserate_top_k: Vec<f64>,
    /// `confusion[predicted][actual]` counts.
    pub confusion: Vec<Vec<usize>>,
    pub per_class: Vec<ClassMetrics>,
}

impl EvalReport {
    /// Score ranked predictions against true labels. `train_freq` is the
    /// per-class training count driving the baserate model.
    pub fn from_predictions(
        classes: &[String],
        ranked: &[Vec<usize>],
        truth: &[usize],
        train_freq: &[usize],
    ) -> Result<EvalReport> {
        let m = classes.len();
        if ranked.len() != truth.len() {
            return Err(Error::contract("prediction/label count mismatch"));
        }
        if train_freq.len() != m {
            return Err(Error::contract("train_freq length mismatch"));
        }
        let n = truth.len();
        if n == 0 {
            return Err(Error::contract("empty evaluation set"));
        }

        let mut top_hits = [0usize; TOP_K_LEVELS];
        let mut confusion = vec![vec![0usize; m]; m];
        for (ranks, &y) in ranked.iter().zip(truth) {
            if ranks.len() != m {
                return Err(Error::contract("ranking does not cover all classes"));
            }
            if y >= m {
                return Err(Error::contract(format!("label {y} out of range")));
            }
            confusion[ranks[0]][y] += 1;
            if let Some(pos) = ranks.iter().position(|&c| c == y) {
                for hit in top_hits.iter_mut().skip(pos) {
                    *hit += 1;
                }
            }
        }

        // Baserate model: a fixed ranking by descending training frequency,
        // ties broken by class order.
        let mut by_freq: Vec<usize> = (0..m).collect();
        by_freq.sort_by_key(|&c| (std::cmp::Reverse(train_freq[c]), c));
        let mut base_hits = [0usize; TOP_K_LEVELS];
        for &y in truth {
            if let Some(pos) = by_freq.iter().position(|&c| c == y) {
                for hit in base_hits.iter_mut().skip(pos) {
                    *hit += 1;
                }
            }
        }

        let nf = n as f64;
        let per_class = (0..m)
            .map(|c| {
                let predicted: usize = confusion[c].iter().sum();
                let actual: usize = (0..m).map(|p| confusion[p][c]).sum();
                let hit = confusion[c][c];
                ClassMetrics {
                    name: classes[c].clone(),
                    precision: if predicted > 0 {
                        hit as f64 / predicted as f64
                    } else {
                        0.0
                    },
                    recall: if actual > 0 {
                        hit as f64 / actual as f64
                    } else {
                        0.0
                    },
                    support: actual,
                }
            })
            .collect();

        Ok(EvalReport {
            classes: classes.to_vec(),
            n_test: n,
            top_k_accuracy: top_hits.iter().map(|&h| h as f64 / nf).collect(),
            top_m_accuracy: 1.0,
            baserate_top_k: base_hits.iter().map(|&h| h as f64 / nf).collect(),
            confusion,
            per_class,
        })
    }

    /// Score truncated rankings (e.g. a top-5 predictions file).
    /// `top_m_accuracy` then reports list coverage: how often the true label
    /// appears anywhere in the supplied list.
    pub fn from_topk_predictions(
        classes: &[String],
        ranked: &[Vec<usize>],
        truth: &[usize],
        baserate_freq: &[usize],
    ) -> Result<EvalReport> {
        let m = classes.len();
        if ranked.len() != truth.len() {
            return Err(Error::contract("prediction/label count mismatch"));
        }
        let n = truth.len();
        if n == 0 {
            return Err(Error::contract("empty evaluation set"));
        }
        let mut top_hits = [0usize; TOP_K_LEVELS];
        let mut covered = 0usize;
        let mut confusion = vec![vec![0usize; m]; m];
        for (ranks, &y) in ranked.iter().zip(truth) {
            if y >= m || ranks.iter().any(|&c| c >= m) {
                return Err(Error::contract("class index out of range"));
            }
            if let Some(&first) = ranks.first() {
                confusion[first][y] += 1;
            }
            if let Some(pos) = ranks.iter().position(|&c| c == y) {
                covered += 1;
                for hit in top_hits.iter_mut().skip(pos) {
                    *hit += 1;
                }
            }
        }
        let mut by_freq: Vec<usize> = (0..m).collect();
        by_freq
            .sort_by_key(|&c| (std::cmp::Reverse(baserate_freq.get(c).copied().unwrap_or(0)), c));
        let mut base_hits = [0usize; TOP_K_LEVELS];
        for &y in truth {
            if let Some(pos) = by_freq.iter().position(|&c| c == y) {
                for hit in base_hits.iter_mut().skip(pos) {
                    *hit += 1;
                }
            }
        }
        let nf = n as f64;
        let per_class = (0..m)
            .map(|c| {
                let predicted: usize = confusion[c].iter().sum();
                let actual: usize = (0..m).map(|p| confusion[p][c]).sum();
                let hit = confusion[c][c];
                ClassMetrics {
                    name: classes[c].clone(),
                    precision: if predicted > 0 {
                        hit as f64 / predicted as f64
                    } else {
                        0.0
                    },
                    recall: if actual > 0 {
                        hit as f64 / actual as f64
                    } else {
                        0.0
                    },
                    support: actual,
                }
            })
            .collect();
        Ok(EvalReport {
            classes: classes.to_vec(),
            n_test: n,
            top_k_accuracy: top_hits.iter().map(|&h| h as f64 / nf).collect(),
            top_m_accuracy: covered as f64 / nf,
            baserate_top_k: base_hits.iter().map(|&h| h as f64 / nf).collect(),
            confusion,
            per_class,
        })
    }

    pub fn top1(&self) -> f64 {
        self.top_k_accuracy[0]
    }

    /// Confusion matrix as CSV: header of true-class names, one row per
    /// predicted class.
    pub fn confusion_csv(&self) -> String {
        let mut out = String::from("predicted\\actual");
        for c in &self.classes {
            let _ = write!(out, ",{c}");
        }
        out.push('\n');
        for (p, row) in self.confusion.iter().enumerate() {
            let _ = write!(out, "{}", self.classes[p]);
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}
