//! Threshold-based multi-label evaluation: per-class (macro) and overall
//! (micro) precision, recall and F1.
//!
//! Any ratio with a zero denominator is 0.

use serde::{Deserialize, Serialize};

use crate::data::{Label, LabelMatrix};
use crate::error::{Error, Result};
use crate::nn::Matrix;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl LabelCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// Per-label confusion counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub labels: Vec<LabelCounts>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub c_p: f64,
    pub c_r: f64,
    pub c_f1: f64,
    pub o_p: f64,
    pub o_r: f64,
    pub o_f1: f64,
    pub per_label_precision: Vec<f64>,
    pub per_label_recall: Vec<f64>,
    pub per_label_f1: Vec<f64>,
}

#[inline]
fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[inline]
fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn tally(counts: &mut LabelCounts, pred: bool, truth: bool) {
    match (pred, truth) {
        (true, true) => counts.tp += 1,
        (true, false) => counts.fp += 1,
        (false, true) => counts.fn_ += 1,
        (false, false) => counts.tn += 1,
    }
}

/// Counts over `{0,1}` matrices of shape `m × N` (labels × instances).
pub fn confusion(pred: &Matrix, truth: &Matrix) -> Result<ConfusionCounts> {
    if pred.shape() != truth.shape() {
        return Err(Error::shape(
            "confusion",
            format!("{}x{}", truth.rows(), truth.cols()),
            format!("{}x{}", pred.rows(), pred.cols()),
        ));
    }
    let labels = (0..truth.rows())
        .map(|j| {
            let mut c = LabelCounts::default();
            for (&p, &t) in pred.row(j).iter().zip(truth.row(j)) {
                tally(&mut c, p > 0.5, t > 0.5);
            }
            c
        })
        .collect();
    Ok(ConfusionCounts { labels })
}

/// Like [`confusion`], but skips entries whose truth is missing.
pub fn confusion_known(pred: &Matrix, truth: &LabelMatrix) -> Result<ConfusionCounts> {
    if pred.shape() != (truth.n_labels(), truth.n_instances()) {
        return Err(Error::shape(
            "confusion_known",
            format!("{}x{}", truth.n_labels(), truth.n_instances()),
            format!("{}x{}", pred.rows(), pred.cols()),
        ));
    }
    let labels = (0..truth.n_labels())
        .map(|j| {
            let mut c = LabelCounts::default();
            for (i, &p) in pred.row(j).iter().enumerate() {
                match truth.get(j, i) {
                    Label::Missing => {}
                    t => tally(&mut c, p > 0.5, t == Label::Pos),
                }
            }
            c
        })
        .collect();
    Ok(ConfusionCounts { labels })
}

pub fn report(counts: &ConfusionCounts) -> MetricsReport {
    let m = counts.labels.len();
    let mut per_p = Vec::with_capacity(m);
    let mut per_r = Vec::with_capacity(m);
    let mut per_f = Vec::with_capacity(m);
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for c in &counts.labels {
        let p = ratio(c.tp, c.tp + c.fp);
        let r = ratio(c.tp, c.tp + c.fn_);
        per_p.push(p);
        per_r.push(r);
        per_f.push(f1(p, r));
        tp += c.tp;
        fp += c.fp;
        fn_ += c.fn_;
    }
    let mean = |v: &[f64]| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    let o_p = ratio(tp, tp + fp);
    let o_r = ratio(tp, tp + fn_);
    MetricsReport {
        c_p: mean(&per_p),
        c_r: mean(&per_r),
        c_f1: mean(&per_f),
        o_p,
        o_r,
        o_f1: f1(o_p, o_r),
        per_label_precision: per_p,
        per_label_recall: per_r,
        per_label_f1: per_f,
    }
}

/// Overall (micro) F1 of the pooled counts.
pub fn micro_f1(counts: &ConfusionCounts) -> f64 {
    let (tp, fp, fn_) = counts
        .labels
        .iter()
        .fold((0, 0, 0), |(a, b, c), l| (a + l.tp, b + l.fp, c + l.fn_));
    f1(ratio(tp, tp + fp), ratio(tp, tp + fn_))
}
