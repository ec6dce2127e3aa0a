//! Classification and ranking metrics.

use crate::error::{Error, Result};

/// Micro- and macro-averaged F1 for single-label multiclass predictions.
/// Classes that appear in neither predictions nor truths count as F1 = 0
/// in the macro average.
pub fn micro_macro_f1(predictions: &[usize], truths: &[usize], num_classes: usize) -> Result<(f64, f64)> {
    if predictions.is_empty() {
        return Err(Error::arg("no predictions to score"));
    }
    if predictions.len() != truths.len() {
        return Err(Error::dim(format!("{} predictions for {} truths", predictions.len(), truths.len())));
    }
    if num_classes == 0 {
        return Err(Error::arg("num_classes must be >= 1"));
    }
    let mut tp = vec![0usize; num_classes];
    let mut fp = vec![0usize; num_classes];
    let mut fn_ = vec![0usize; num_classes];
    for (&p, &t) in predictions.iter().zip(truths) {
        if p >= num_classes || t >= num_classes {
            return Err(Error::arg(format!("class id outside [0, {num_classes})")));
        }
        if p == t {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fn_[t] += 1;
        }
    }
    let f1 = |tp: usize, fp: usize, fn_: usize| {
        let denom = 2 * tp + fp + fn_;
        if denom == 0 {
            0.0
        } else {
            2.0 * tp as f64 / denom as f64
        }
    };
    let micro = f1(tp.iter().sum(), fp.iter().sum(), fn_.iter().sum());
    let macro_ = (0..num_classes).map(|c| f1(tp[c], fp[c], fn_[c])).sum::<f64>() / num_classes as f64;
    Ok((micro, macro_))
}

/// Fraction of negatives scored strictly below the positive, ties counting
/// one half.
pub fn auc_one_vs_negatives(positive: f64, negatives: &[f64]) -> f64 {
    if negatives.is_empty() {
        return f64::NAN;
    }
    let wins: f64 = negatives
        .iter()
        .map(|&n| {
            if n < positive {
                1.0
            } else if n == positive {
                0.5
            } else {
                0.0
            }
        })
        .sum();
    wins / negatives.len() as f64
}

/// NDCG with a single relevant item at 1-based `rank`.
pub fn ndcg_single_relevant(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

/// NDCG of the positive among scored negatives. When the positive ties
/// with some negatives, its gain is averaged over the tied rank positions.
pub fn ndcg_with_ties(positive: f64, negatives: &[f64]) -> f64 {
    let above = negatives.iter().filter(|&&n| n > positive).count();
    let tied = negatives.iter().filter(|&&n| n == positive).count();
    let first = above + 1;
    (first..=first + tied).map(ndcg_single_relevant).sum::<f64>() / (tied + 1) as f64
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
