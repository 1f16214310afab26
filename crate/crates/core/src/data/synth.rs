use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Label, LabelMatrix, MultiLabelDataset};
use crate::error::{Error, Result};
use crate::nn::Matrix;

const MAX_REDRAWS: usize = 10_000;
const NOISE: f64 = 0.1;

/// Synthetic data with labels correlated through shared latent factors.
///
/// Draws `k = max(2, m/2)` standard-normal factors `z` per instance, sets
/// features `x = A·z + 0.1·ε`, and makes label `j` positive iff
/// `wⱼᵀz > tⱼ`. Each threshold `tⱼ` is the empirical quantile that gives
/// label `j` a target positive rate in `[0.25, 0.45]` on the initial draw.
/// Instances with no positive label get fresh factors until they have one.
pub fn synth_correlated(n: usize, d: usize, m: usize, seed: u64) -> Result<MultiLabelDataset> {
    if n == 0 || d == 0 || m == 0 {
        return Err(Error::invalid(format!(
            "synthetic shape must be positive, got N={n} d={d} m={m}"
        )));
    }
    let k = (m / 2).max(2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = || -> f64 { rng.sample(StandardNormal) };

    let mixing = Matrix::from_fn(d, k, |_, _| normal());
    let weights = Matrix::from_fn(m, k, |_, _| normal());
    let mut factors = Matrix::from_fn(k, n, |_, _| normal());
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0000_0000_0001);
    let rates: Vec<f64> = (0..m).map(|_| rng.random_range(0.25..0.45)).collect();

    let scores = weights.matmul(&factors)?;
    let thresholds: Vec<f64> = (0..m)
        .map(|j| {
            let mut row = scores.row(j).to_vec();
            row.sort_by(f64::total_cmp);
            let cut = (((1.0 - rates[j]) * n as f64) as usize).min(n - 1);
            row[cut]
        })
        .collect();

    let label_of = |z: &[f64], j: usize| -> Label {
        let s: f64 = weights.row(j).iter().zip(z).map(|(w, v)| w * v).sum();
        if s > thresholds[j] {
            Label::Pos
        } else {
            Label::Neg
        }
    };

    let mut labels = LabelMatrix::filled(m, n, Label::Neg);
    for i in 0..n {
        let mut z = factors.column(i);
        let mut tries = 0;
        while (0..m).all(|j| label_of(&z, j) == Label::Neg) {
            tries += 1;
            if tries > MAX_REDRAWS {
                return Err(Error::RetriesExhausted(MAX_REDRAWS));
            }
            z = (0..k).map(|_| rng.sample(StandardNormal)).collect();
        }
        for (r, &v) in z.iter().enumerate() {
            factors.set(r, i, v);
        }
        for j in 0..m {
            labels.set(j, i, label_of(&z, j));
        }
    }

    let mut features = mixing.matmul(&factors)?;
    for v in features.as_mut_slice() {
        let e: f64 = rng.sample(StandardNormal);
        *v += NOISE * e;
    }
    MultiLabelDataset::new(features, labels)
}
