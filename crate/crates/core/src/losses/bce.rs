use super::ranking::LabelSets;
use crate::error::{Error, Result};
use crate::nn::Matrix;

#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Sigmoid cross-entropy averaged over known labels, with its gradient.
///
/// Positives have target 1, negatives 0; missing labels are left out of both
/// the sum and the count. With no known label at all the loss is 0.
pub fn bce_loss(scores: &Matrix, sets: &LabelSets) -> Result<(f64, Matrix)> {
    if scores.rows() != sets.m() || scores.cols() != sets.len() {
        return Err(Error::shape(
            "bce_loss",
            format!("{}x{} scores", sets.m(), sets.len()),
            format!("{}x{}", scores.rows(), scores.cols()),
        ));
    }
    let known: usize = sets
        .instances()
        .iter()
        .map(|s| s.pos.len() + s.neg.len())
        .sum();
    let mut grad = Matrix::zeros(scores.rows(), scores.cols());
    if known == 0 {
        return Ok((0.0, grad));
    }
    let inv = 1.0 / known as f64;
    let mut total = 0.0;
    for (i, inst) in sets.instances().iter().enumerate() {
        for (labels, target) in [(&inst.pos, 1.0), (&inst.neg, 0.0)] {
            for &j in labels {
                let s = scores.get(j, i);
                total += softplus(s) - target * s;
                grad.set(j, i, (sigmoid(s) - target) * inv);
            }
        }
    }
    Ok((total * inv, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::InstanceLabels;

    fn sets(pos: &[usize], neg: &[usize], missing: &[usize], m: usize) -> LabelSets {
        LabelSets::new(
            m,
            vec![InstanceLabels {
                pos: pos.to_vec(),
                neg: neg.to_vec(),
                missing: missing.to_vec(),
            }],
        )
        .unwrap()
    }

    #[test]
    fn zero_score_costs_ln2() {
        let (l, _) = bce_loss(&Matrix::zeros(2, 1), &sets(&[0], &[1], &[], 2)).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn saturated_positive_costs_nothing() {
        let s = Matrix::from_vec(1, 1, vec![60.0]).unwrap();
        let (l, g) = bce_loss(&s, &sets(&[0], &[], &[], 1)).unwrap();
        assert!(l < 1e-25);
        assert!(g.get(0, 0).abs() < 1e-25);
    }

    #[test]
    fn missing_labels_are_excluded() {
        let s = Matrix::from_vec(3, 1, vec![0.0, 0.0, 9.0]).unwrap();
        let (l, g) = bce_loss(&s, &sets(&[0], &[1], &[2], 3)).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(g.get(2, 0), 0.0);
    }

    #[test]
    fn extreme_scores_are_stable() {
        let s = Matrix::from_vec(2, 1, vec![-800.0, 800.0]).unwrap();
        let (l, g) = bce_loss(&s, &sets(&[0], &[1], &[], 2)).unwrap();
        assert!((l - 800.0).abs() < 1e-9);
        assert!(g.is_finite());
    }
}
