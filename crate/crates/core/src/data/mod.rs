//! Multi-label datasets: ternary labels, text I/O, missing-label simulation,
//! splitting, batching and a synthetic generator with correlated labels.

mod format;
mod ops;
mod synth;

pub use format::{format_dataset, load_dataset, parse_dataset, save_dataset};
pub use ops::{batches, mask_labels, preprocess_missing_inputs, split, Batch, BatchPlan};
pub use synth::synth_correlated;

use crate::error::{Error, Result};
use crate::nn::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Pos,
    Neg,
    Missing,
}

/// Ternary `m × n` label matrix: row `j` is label `j`, column `i` instance `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMatrix {
    labels: usize,
    instances: usize,
    data: Vec<Label>,
}

impl LabelMatrix {
    pub fn new(labels: usize, instances: usize, data: Vec<Label>) -> Result<Self> {
        if data.len() != labels * instances {
            return Err(Error::shape(
                "LabelMatrix::new",
                labels * instances,
                data.len(),
            ));
        }
        Ok(LabelMatrix {
            labels,
            instances,
            data,
        })
    }

    pub fn filled(labels: usize, instances: usize, value: Label) -> Self {
        LabelMatrix {
            labels,
            instances,
            data: vec![value; labels * instances],
        }
    }

    /// Positives where `binary[j][i] > 0.5`, negatives elsewhere.
    pub fn from_binary(binary: &Matrix) -> Self {
        LabelMatrix {
            labels: binary.rows(),
            instances: binary.cols(),
            data: binary
                .as_slice()
                .iter()
                .map(|&v| if v > 0.5 { Label::Pos } else { Label::Neg })
                .collect(),
        }
    }

    /// Builds from per-instance columns.
    pub fn from_columns(labels: usize, columns: &[Vec<Label>]) -> Result<Self> {
        let mut out = LabelMatrix::filled(labels, columns.len(), Label::Neg);
        for (i, col) in columns.iter().enumerate() {
            if col.len() != labels {
                return Err(Error::shape("LabelMatrix::from_columns", labels, col.len()));
            }
            for (j, &l) in col.iter().enumerate() {
                out.set(j, i, l);
            }
        }
        Ok(out)
    }

    #[inline]
    pub fn n_labels(&self) -> usize {
        self.labels
    }

    #[inline]
    pub fn n_instances(&self) -> usize {
        self.instances
    }

    #[inline]
    pub fn get(&self, label: usize, instance: usize) -> Label {
        self.data[label * self.instances + instance]
    }

    #[inline]
    pub fn set(&mut self, label: usize, instance: usize, value: Label) {
        self.data[label * self.instances + instance] = value;
    }

    pub fn column(&self, instance: usize) -> Vec<Label> {
        (0..self.labels).map(|j| self.get(j, instance)).collect()
    }

    pub fn select_columns(&self, idx: &[usize]) -> LabelMatrix {
        let mut data = Vec::with_capacity(self.labels * idx.len());
        for j in 0..self.labels {
            data.extend(idx.iter().map(|&i| self.get(j, i)));
        }
        LabelMatrix {
            labels: self.labels,
            instances: idx.len(),
            data,
        }
    }

    pub fn count(&self, which: Label) -> usize {
        self.data.iter().filter(|&&l| l == which).count()
    }

    /// `{0,1}` view: 1 for positives, 0 for negatives and missing.
    pub fn to_binary(&self) -> Matrix {
        let data = self
            .data
            .iter()
            .map(|&l| if l == Label::Pos { 1.0 } else { 0.0 })
            .collect();
        Matrix::from_vec(self.labels, self.instances, data).expect("shape preserved")
    }

    pub fn as_slice(&self) -> &[Label] {
        &self.data
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiLabelDataset {
    features: Matrix,
    labels: LabelMatrix,
}

impl MultiLabelDataset {
    /// Pairs a `d × N` feature matrix with an `m × N` label matrix. Rejects
    /// instances whose labels are all missing.
    pub fn new(features: Matrix, labels: LabelMatrix) -> Result<Self> {
        if features.cols() != labels.n_instances() {
            return Err(Error::shape(
                "MultiLabelDataset::new",
                format!("{} label columns", features.cols()),
                labels.n_instances(),
            ));
        }
        if labels.n_labels() > 0 {
            for i in 0..labels.n_instances() {
                if (0..labels.n_labels()).all(|j| labels.get(j, i) == Label::Missing) {
                    return Err(Error::invalid(format!(
                        "instance {i} has every label missing"
                    )));
                }
            }
        }
        Ok(MultiLabelDataset { features, labels })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &LabelMatrix {
        &self.labels
    }

    pub fn n_instances(&self) -> usize {
        self.features.cols()
    }

    pub fn n_features(&self) -> usize {
        self.features.rows()
    }

    pub fn n_labels(&self) -> usize {
        self.labels.n_labels()
    }

    pub fn has_missing(&self) -> bool {
        self.labels.count(Label::Missing) > 0
    }

    pub fn subset(&self, idx: &[usize]) -> MultiLabelDataset {
        MultiLabelDataset {
            features: self.features.select_columns(idx),
            labels: self.labels.select_columns(idx),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_missing_instance_is_rejected() {
        let labels = LabelMatrix::new(2, 1, vec![Label::Missing, Label::Missing]).unwrap();
        assert!(MultiLabelDataset::new(Matrix::zeros(3, 1), labels).is_err());
    }

    #[test]
    fn binary_view_maps_missing_to_zero() {
        let labels = LabelMatrix::new(3, 1, vec![Label::Pos, Label::Missing, Label::Neg]).unwrap();
        assert_eq!(labels.to_binary().as_slice(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn from_binary_round_trips() {
        let b = Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]).unwrap();
        assert_eq!(LabelMatrix::from_binary(&b).to_binary(), b);
    }
}
