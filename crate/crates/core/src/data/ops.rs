use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Label, LabelMatrix, MultiLabelDataset};
use crate::error::{Error, Result};
use crate::losses::LabelSets;
use crate::nn::Matrix;

/// Hides known labels at an overall rate of `rate`, except one uniformly
/// chosen positive per instance, which always survives.
///
/// The other `m − 1` labels of an instance are each hidden with probability
/// `rate · m/(m − 1)` (capped at 1), so the expected hidden fraction of all
/// `m · N` entries is `rate`.
pub fn mask_labels(ds: &MultiLabelDataset, rate: f64, seed: u64) -> Result<MultiLabelDataset> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!(
            "mask rate must lie in [0, 1), got {rate}"
        )));
    }
    if ds.has_missing() {
        return Err(Error::invalid("dataset already contains missing labels"));
    }
    let labels = ds.labels();
    let m = labels.n_labels();
    let mut out = labels.clone();
    let p_hide = if m > 1 {
        (rate * m as f64 / (m - 1) as f64).min(1.0)
    } else {
        0.0
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..labels.n_instances() {
        let positives: Vec<usize> = (0..m).filter(|&j| labels.get(j, i) == Label::Pos).collect();
        let Some(&protected) = positives.choose(&mut rng) else {
            return Err(Error::invalid(format!(
                "instance {i} has no positive label"
            )));
        };
        for j in 0..m {
            // draw for every label so the stream does not depend on `protected`
            let hide = rng.random::<f64>() < p_hide;
            if hide && j != protected {
                out.set(j, i, Label::Missing);
            }
        }
    }
    MultiLabelDataset::new(ds.features().clone(), out)
}

/// Encoder input for partially labeled data: positives 1, missing 0, and
/// negatives `−|pos|/|neg|` so every column with a negative sums to zero.
pub fn preprocess_missing_inputs(labels: &LabelMatrix) -> Matrix {
    let (m, n) = (labels.n_labels(), labels.n_instances());
    let mut out = Matrix::zeros(m, n);
    for i in 0..n {
        let n_pos = (0..m).filter(|&j| labels.get(j, i) == Label::Pos).count();
        let n_neg = (0..m).filter(|&j| labels.get(j, i) == Label::Neg).count();
        for j in 0..m {
            let v = match labels.get(j, i) {
                Label::Pos => 1.0,
                Label::Missing => 0.0,
                Label::Neg => -(n_pos as f64) / (n_neg as f64),
            };
            out.set(j, i, v);
        }
    }
    out
}

/// Seeded random partition into `(train, val)` with
/// `|val| = round(val_fraction · N)`. Both sides keep the original order.
pub fn split(
    ds: &MultiLabelDataset,
    val_fraction: f64,
    seed: u64,
) -> Result<(MultiLabelDataset, MultiLabelDataset)> {
    let (train, val) = split_indices(ds.n_instances(), val_fraction, seed)?;
    Ok((ds.subset(&train), ds.subset(&val)))
}

pub(crate) fn split_indices(
    n: usize,
    val_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "validation fraction must lie in (0, 1), got {val_fraction}"
        )));
    }
    let n_val = (val_fraction * n as f64).round() as usize;
    if n_val == 0 || n_val >= n {
        return Err(Error::invalid(format!(
            "split of {n} instances at {val_fraction} leaves an empty side"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut val = perm[..n_val].to_vec();
    let mut train = perm[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    Ok((train, val))
}

/// Visiting order for one epoch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchPlan {
    pub batch_size: usize,
    pub ordering: Vec<usize>,
    pub seed: u64,
}

impl BatchPlan {
    /// Permutation for `epoch`, drawn from stream `epoch` of the seeded
    /// generator so each epoch reshuffles independently.
    pub fn for_epoch(n: usize, batch_size: usize, seed: u64, epoch: u64) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::invalid("batch size must be >= 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(epoch);
        let mut ordering: Vec<usize> = (0..n).collect();
        ordering.shuffle(&mut rng);
        Ok(BatchPlan {
            batch_size,
            ordering,
            seed,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub features: Matrix,
    pub labels: LabelMatrix,
    pub sets: LabelSets,
}

/// Consecutive chunks of `plan.ordering`; the last one may be short.
pub fn batches<'a>(
    ds: &'a MultiLabelDataset,
    plan: &'a BatchPlan,
) -> impl Iterator<Item = Batch> + 'a {
    plan.ordering.chunks(plan.batch_size).map(move |idx| {
        let labels = ds.labels().select_columns(idx);
        Batch {
            indices: idx.to_vec(),
            features: ds.features().select_columns(idx),
            sets: LabelSets::from_labels(&labels),
            labels,
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_correlated;

    fn ds_with(columns: &[Vec<Label>]) -> MultiLabelDataset {
        let m = columns[0].len();
        MultiLabelDataset::new(
            Matrix::zeros(1, columns.len()),
            LabelMatrix::from_columns(m, columns).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn preprocessing_examples() {
        use Label::*;
        let ds = ds_with(&[vec![Pos, Missing, Neg, Neg], vec![Pos, Neg, Pos, Pos]]);
        let x = preprocess_missing_inputs(ds.labels());
        assert_eq!(x.column(0), vec![1.0, 0.0, -0.5, -0.5]);
        assert_eq!(x.column(1), vec![1.0, -3.0, 1.0, 1.0]);
        let y = preprocess_missing_inputs(ds_with(&[vec![Pos, Neg]]).labels());
        assert_eq!(y.column(0), vec![1.0, -1.0]);
    }

    #[test]
    fn all_positive_column_has_no_negatives_to_set() {
        use Label::*;
        let x = preprocess_missing_inputs(ds_with(&[vec![Pos, Missing, Pos]]).labels());
        assert_eq!(x.column(0), vec![1.0, 0.0, 1.0]);
    }

    #[test]
    fn mask_rate_zero_is_identity() {
        let ds = synth_correlated(50, 4, 5, 3).unwrap();
        assert_eq!(mask_labels(&ds, 0.0, 9).unwrap(), ds);
    }

    #[test]
    fn mask_rate_is_close_to_nominal_and_keeps_a_positive() {
        let ds = synth_correlated(1000, 5, 10, 4).unwrap();
        let masked = mask_labels(&ds, 0.3, 17).unwrap();
        let frac = masked.labels().count(Label::Missing) as f64 / 10_000.0;
        assert!((frac - 0.30).abs() <= 0.02, "missing fraction {frac}");
        for i in 0..1000 {
            assert!(masked.labels().column(i).contains(&Label::Pos));
        }
        assert_eq!(masked.features(), ds.features());
        assert_eq!(masked, mask_labels(&ds, 0.3, 17).unwrap());
    }

    #[test]
    fn mask_preconditions() {
        use Label::*;
        let no_pos = ds_with(&[vec![Neg, Neg]]);
        assert!(mask_labels(&no_pos, 0.2, 0).is_err());
        let missing = ds_with(&[vec![Pos, Missing]]);
        assert!(mask_labels(&missing, 0.2, 0).is_err());
        let ok = ds_with(&[vec![Pos, Neg]]);
        assert!(mask_labels(&ok, 1.0, 0).is_err());
    }

    #[test]
    fn split_sizes_and_partition() {
        let (tr, va) = split_indices(6, 1.0 / 6.0, 1).unwrap();
        assert_eq!(va.len(), 1);
        assert_eq!(tr.len(), 5);
        let mut all: Vec<usize> = tr.iter().chain(&va).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..6).collect::<Vec<_>>());
        assert_eq!(split_indices(6, 1.0 / 6.0, 1).unwrap(), (tr, va));
        assert!(split_indices(3, 0.1, 0).is_err());
        assert!(split_indices(3, 0.0, 0).is_err());
        assert!(split_indices(1, 0.5, 0).is_err());
    }

    #[test]
    fn batch_sizes_and_coverage() {
        let ds = synth_correlated(10, 2, 3, 0).unwrap();
        let plan = BatchPlan::for_epoch(10, 4, 5, 0).unwrap();
        let got: Vec<Batch> = batches(&ds, &plan).collect();
        let sizes: Vec<usize> = got.iter().map(|b| b.indices.len()).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
        let mut seen: Vec<usize> = got.iter().flat_map(|b| b.indices.clone()).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
        assert_eq!(plan, BatchPlan::for_epoch(10, 4, 5, 0).unwrap());
        assert_ne!(
            plan.ordering,
            BatchPlan::for_epoch(10, 4, 5, 1).unwrap().ordering
        );
        assert!(BatchPlan::for_epoch(10, 0, 5, 0).is_err());
    }
}
