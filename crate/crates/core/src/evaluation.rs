//! Classification and accuracy metrics: one-vs-rest confusion counts, F1
//! (macro and micro), ROC curves with AUC, and sMAPE.

use serde::{Deserialize, Serialize};

use crate::climatology::TercileClass;
use crate::error::{Error, Result};

/// One-vs-rest counts for a single class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ClassCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// 2TP / (2TP + FN + FP), or 0 when the denominator vanishes.
    pub fn f1(&self) -> f64 {
        let den = 2 * self.tp + self.fn_ + self.fp;
        if den == 0 {
            0.0
        } else {
            (2 * self.tp) as f64 / den as f64
        }
    }
}

/// Confusion counts indexed by [`TercileClass::index`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub classes: [ClassCounts; 3],
}

impl ConfusionCounts {
    pub fn class(&self, c: TercileClass) -> &ClassCounts {
        &self.classes[c.index()]
    }

    pub fn samples(&self) -> u64 {
        self.classes[0].total()
    }

    pub fn correct(&self) -> u64 {
        self.classes.iter().map(|c| c.tp).sum()
    }
}

/// Counts predictions against actuals; pairs where either side is missing are skipped.
pub fn confusion(pred: &[Option<TercileClass>], actual: &[Option<TercileClass>]) -> Result<ConfusionCounts> {
    if pred.len() != actual.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: actual.len(),
        });
    }
    let mut out = ConfusionCounts::default();
    for (p, a) in pred.iter().zip(actual) {
        let (Some(p), Some(a)) = (p, a) else { continue };
        for c in TercileClass::ALL {
            let k = &mut out.classes[c.index()];
            match (*p == c, *a == c) {
                (true, true) => k.tp += 1,
                (true, false) => k.fp += 1,
                (false, true) => k.fn_ += 1,
                (false, false) => k.tn += 1,
            }
        }
    }
    Ok(out)
}

pub fn f1_macro(counts: &ConfusionCounts) -> f64 {
    counts.classes.iter().map(ClassCounts::f1).sum::<f64>() / 3.0
}

pub fn f1_micro(counts: &ConfusionCounts) -> f64 {
    let num: u64 = counts.classes.iter().map(|c| 2 * c.tp).sum();
    let den: u64 = counts.classes.iter().map(|c| 2 * c.tp + c.fn_ + c.fp).sum();
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Scores at or above this value are called positive.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// Starts at (0, 0) with an infinite threshold and ends at (1, 1).
    pub points: Vec<RocPoint>,
}

/// ROC curve swept over distinct score thresholds in descending order.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Domain("ROC scores contain NaN".into()));
    }
    let pos = labels.iter().filter(|l| **l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Undefined("ROC needs both positive and negative labels".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|a, b| scores[*b].total_cmp(&scores[*a]));
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: s,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
    }
    Ok(RocCurve { points })
}

/// Trapezoidal area under the curve.
pub fn auc(curve: &RocCurve) -> f64 {
    curve
        .points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

/// Mean of 2|f - a| / (|f| + |a|) over pairs with a present actual; 0/0 pairs count as 0.
pub fn smape(forecast: &[f64], actual: &[Option<f64>]) -> Result<f64> {
    if forecast.len() != actual.len() {
        return Err(Error::LengthMismatch {
            left: forecast.len(),
            right: actual.len(),
        });
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (f, a) in forecast.iter().zip(actual) {
        let Some(a) = a else { continue };
        let den = f.abs() + a.abs();
        if den > 0.0 {
            sum += 2.0 * (f - a).abs() / den;
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::InsufficientData("sMAPE has no valid pairs".into()));
    }
    Ok(sum / n as f64)
}
