//! Pairwise exponential ranking loss over positive/negative label pairs.
//!
//! For instance `i` with known positives `P` and negatives `N`:
//!
//! ```text
//! Eᵢ = 1/(|P||N|) · Σ_{p∈P, q∈N} exp(cᵢ[q] − cᵢ[p]),      Γ = Σᵢ Eᵢ
//! ```
//!
//! Missing labels never enter a pair. An instance with no known positive or
//! no known negative contributes nothing.

use std::cell::Cell;

use log::warn;

use crate::data::{Label, LabelMatrix};
use crate::error::{Error, Result};
use crate::nn::Matrix;

/// Score differences are clamped to this magnitude before `exp`.
pub const EXP_CLAMP: f64 = 50.0;

/// Known positive / negative / missing label indices of one instance.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InstanceLabels {
    pub pos: Vec<usize>,
    pub neg: Vec<usize>,
    pub missing: Vec<usize>,
}

/// Per-instance label index sets for a batch of `m`-label instances.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSets {
    m: usize,
    instances: Vec<InstanceLabels>,
}

impl LabelSets {
    /// Validates that indices are in `[0, m)` and the three sets are disjoint.
    pub fn new(m: usize, instances: Vec<InstanceLabels>) -> Result<Self> {
        for (i, inst) in instances.iter().enumerate() {
            let mut seen = vec![false; m];
            for &j in inst.pos.iter().chain(&inst.neg).chain(&inst.missing) {
                if j >= m {
                    return Err(Error::invalid(format!(
                        "instance {i}: label index {j} out of range (m = {m})"
                    )));
                }
                if std::mem::replace(&mut seen[j], true) {
                    return Err(Error::invalid(format!(
                        "instance {i}: label {j} appears in more than one set"
                    )));
                }
            }
        }
        Ok(LabelSets { m, instances })
    }

    /// Index sets in ascending label order.
    pub fn from_labels(labels: &LabelMatrix) -> Self {
        let m = labels.n_labels();
        let instances = (0..labels.n_instances())
            .map(|i| {
                let mut inst = InstanceLabels::default();
                for j in 0..m {
                    match labels.get(j, i) {
                        Label::Pos => inst.pos.push(j),
                        Label::Neg => inst.neg.push(j),
                        Label::Missing => inst.missing.push(j),
                    }
                }
                inst
            })
            .collect();
        LabelSets { m, instances }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn instances(&self) -> &[InstanceLabels] {
        &self.instances
    }

    /// Number of instances with at least one known positive and one known
    /// negative, i.e. those that contribute to the ranking loss.
    pub fn n_rankable(&self) -> usize {
        self.instances
            .iter()
            .filter(|s| !s.pos.is_empty() && !s.neg.is_empty())
            .count()
    }
}

thread_local! {
    static RANKING_CALLS: Cell<u64> = const { Cell::new(0) };
}

/// Per-thread count of ranking-loss evaluations (loss or gradient), so callers
/// can confirm which code path a training mode goes through.
pub mod instrumentation {
    use super::RANKING_CALLS;

    pub fn ranking_calls() -> u64 {
        RANKING_CALLS.with(|c| c.get())
    }

    pub fn reset() {
        RANKING_CALLS.with(|c| c.set(0));
    }

    pub(super) fn bump() {
        RANKING_CALLS.with(|c| c.set(c.get() + 1));
    }
}

fn check(scores: &Matrix, sets: &LabelSets) -> Result<()> {
    if scores.rows() != sets.m || scores.cols() != sets.len() {
        return Err(Error::shape(
            "ranking loss",
            format!("{}x{} scores", sets.m, sets.len()),
            format!("{}x{}", scores.rows(), scores.cols()),
        ));
    }
    Ok(())
}

#[inline]
fn clamped_exp(diff: f64, clamped: &mut bool) -> f64 {
    if diff.abs() > EXP_CLAMP {
        *clamped = true;
        diff.clamp(-EXP_CLAMP, EXP_CLAMP).exp()
    } else {
        diff.exp()
    }
}

fn warn_if(clamped: bool) {
    if clamped {
        warn!("score differences beyond ±{EXP_CLAMP} clamped in ranking loss");
    }
}

/// `Γ = Σᵢ Eᵢ` over known pairs.
pub fn output_loss(scores: &Matrix, sets: &LabelSets) -> Result<f64> {
    check(scores, sets)?;
    instrumentation::bump();
    let mut clamped = false;
    let mut total = 0.0;
    for (i, inst) in sets.instances.iter().enumerate() {
        total += instance_loss(|j| scores.get(j, i), &inst.pos, &inst.neg, &mut clamped);
    }
    warn_if(clamped);
    Ok(total)
}

fn instance_loss(
    score: impl Fn(usize) -> f64,
    pos: &[usize],
    neg: &[usize],
    clamped: &mut bool,
) -> f64 {
    if pos.is_empty() || neg.is_empty() {
        return 0.0;
    }
    let mut sum = 0.0;
    for &p in pos {
        for &q in neg {
            sum += clamped_exp(score(q) - score(p), clamped);
        }
    }
    sum / (pos.len() * neg.len()) as f64
}

/// `∂Γ/∂scores`, `m × n`. Zero at missing labels and for instances that
/// lack a known positive or negative.
pub fn output_grad(scores: &Matrix, sets: &LabelSets) -> Result<Matrix> {
    check(scores, sets)?;
    instrumentation::bump();
    let mut grad = Matrix::zeros(scores.rows(), scores.cols());
    let mut clamped = false;
    for (i, inst) in sets.instances.iter().enumerate() {
        instance_grad(
            |j| scores.get(j, i),
            &inst.pos,
            &inst.neg,
            &mut clamped,
            |j, v| grad.set(j, i, v),
        );
    }
    warn_if(clamped);
    Ok(grad)
}

fn instance_grad(
    score: impl Fn(usize) -> f64,
    pos: &[usize],
    neg: &[usize],
    clamped: &mut bool,
    mut write: impl FnMut(usize, f64),
) {
    if pos.is_empty() || neg.is_empty() {
        return;
    }
    let norm = 1.0 / (pos.len() * neg.len()) as f64;
    for &j in pos {
        let s: f64 = neg
            .iter()
            .map(|&q| clamped_exp(-(score(j) - score(q)), clamped))
            .sum();
        write(j, -norm * s);
    }
    for &j in neg {
        let s: f64 = pos
            .iter()
            .map(|&p| clamped_exp(-(score(p) - score(j)), clamped))
            .sum();
        write(j, norm * s);
    }
}

/// Collects ascending positive / negative indices of column `i` of a
/// `{0,1}` target matrix.
fn dense_pairs(targets: &Matrix, i: usize) -> (Vec<usize>, Vec<usize>) {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for j in 0..targets.rows() {
        if targets.get(j, i) > 0.5 {
            pos.push(j);
        } else {
            neg.push(j);
        }
    }
    (pos, neg)
}

fn check_dense(scores: &Matrix, targets: &Matrix) -> Result<()> {
    if scores.shape() != targets.shape() {
        return Err(Error::shape(
            "ranking loss",
            format!("{}x{} scores", targets.rows(), targets.cols()),
            format!("{}x{}", scores.rows(), scores.cols()),
        ));
    }
    Ok(())
}

/// `Γ` against a fully observed `{0,1}` target matrix, without a mask.
pub fn output_loss_unmasked(scores: &Matrix, targets: &Matrix) -> Result<f64> {
    check_dense(scores, targets)?;
    instrumentation::bump();
    let mut clamped = false;
    let mut total = 0.0;
    for i in 0..scores.cols() {
        let (pos, neg) = dense_pairs(targets, i);
        total += instance_loss(|j| scores.get(j, i), &pos, &neg, &mut clamped);
    }
    warn_if(clamped);
    Ok(total)
}

/// Gradient of [`output_loss_unmasked`].
pub fn output_grad_unmasked(scores: &Matrix, targets: &Matrix) -> Result<Matrix> {
    check_dense(scores, targets)?;
    instrumentation::bump();
    let mut grad = Matrix::zeros(scores.rows(), scores.cols());
    let mut clamped = false;
    for i in 0..scores.cols() {
        let (pos, neg) = dense_pairs(targets, i);
        instance_grad(
            |j| scores.get(j, i),
            &pos,
            &neg,
            &mut clamped,
            |j, v| grad.set(j, i, v),
        );
    }
    warn_if(clamped);
    Ok(grad)
}
