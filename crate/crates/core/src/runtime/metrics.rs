use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Mat;

/// Lower/upper clamp applied to the true-class probability in the log loss.
pub const LOG_LOSS_CLAMP: f64 = 1e-12;

/// Classification quality on one node set.
///
/// Precision, recall and F1 are computed one-vs-rest per class and then
/// macro-averaged over every class that occurs among the true or predicted
/// labels; an undefined per-class ratio counts as 0. MAE is the mean absolute
/// difference of predicted and true class indices. Log loss is the mean
/// negative log of the true-class probability.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub mae: f64,
    pub log_loss: f64,
}

/// Index of the largest entry; ties go to the smallest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

impl MetricsReport {
    /// `probs` holds one probability row per entry of `truth`.
    pub fn compute<T: Scalar>(truth: &[usize], probs: &Mat<T>) -> Result<Self> {
        if truth.is_empty() {
            return Err(Error::invalid("metrics over an empty node set"));
        }
        if probs.rows() != truth.len() {
            return Err(Error::Dimension {
                op: "metrics",
                lhs: probs.shape(),
                rhs: (truth.len(), probs.cols()),
            });
        }
        let k = probs.cols();
        if let Some(&bad) = truth.iter().find(|&&y| y >= k) {
            return Err(Error::invalid(format!("label {bad} out of range for {k} classes")));
        }
        let rows: Vec<Vec<f64>> = (0..probs.rows())
            .map(|r| probs.row(r).iter().map(|v| v.as_f64()).collect())
            .collect();
        let predicted: Vec<usize> = rows.iter().map(|r| argmax(r)).collect();
        let n = truth.len() as f64;

        let correct = truth.iter().zip(&predicted).filter(|(a, b)| a == b).count();
        let mut tp = vec![0usize; k];
        let mut fp = vec![0usize; k];
        let mut fneg = vec![0usize; k];
        for (&y, &p) in truth.iter().zip(&predicted) {
            if y == p {
                tp[y] += 1;
            } else {
                fp[p] += 1;
                fneg[y] += 1;
            }
        }
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let classes: BTreeSet<usize> = truth.iter().chain(&predicted).copied().collect();
        let (mut p_sum, mut r_sum, mut f_sum) = (0.0, 0.0, 0.0);
        for &c in &classes {
            let p = ratio(tp[c], tp[c] + fp[c]);
            let r = ratio(tp[c], tp[c] + fneg[c]);
            let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
            p_sum += p;
            r_sum += r;
            f_sum += f;
        }
        let nc = classes.len() as f64;

        let mae = truth
            .iter()
            .zip(&predicted)
            .map(|(&y, &p)| (y as f64 - p as f64).abs())
            .sum::<f64>()
            / n;
        let log_loss = truth
            .iter()
            .zip(&rows)
            .map(|(&y, r)| -r[y].clamp(LOG_LOSS_CLAMP, 1.0 - LOG_LOSS_CLAMP).ln())
            .sum::<f64>()
            / n;

        Ok(Self {
            accuracy: correct as f64 / n,
            precision: p_sum / nc,
            recall: r_sum / nc,
            f1: f_sum / nc,
            mae,
            log_loss,
        })
    }
}
