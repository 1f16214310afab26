use std::time::Instant;

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

use super::{binarize, C2AEModel, LossMode, ModelSpec, ObjectiveValue};
use crate::data::{
    batches, preprocess_missing_inputs, split, BatchPlan, LabelMatrix, MultiLabelDataset,
};
use crate::error::{Error, Result};
use crate::losses::Whitening;
use crate::metrics::{confusion_known, micro_f1};
use crate::nn::{Algorithm, Matrix, OptimizerState, DEFAULT_SLOPE};

/// Number of equal steps between the lowest and highest validation score
/// scanned by [`calibrate_threshold`] (so `CALIBRATION_STEPS + 1` candidates).
pub const CALIBRATION_STEPS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub loss_mode: LossMode,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without a validation micro-F1 gain before stopping.
    pub patience: usize,
    pub learning_rate: f64,
    pub optimizer: Algorithm,
    pub seed: u64,
    pub val_fraction: f64,
    pub alpha: f64,
    pub lambda: f64,
    /// Candidates tried when `sweep_alpha` is set.
    pub alpha_grid: Vec<f64>,
    pub sweep_alpha: bool,
    /// Latent width `l`; `None` uses the label count.
    pub latent_dim: Option<usize>,
    pub hidden_dims: Vec<usize>,
    pub slope: f64,
    /// Feed `fe` zero-mean label codes instead of raw `{0,1}` labels.
    pub zero_mean_labels: bool,
    pub whitening: Whitening,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss_mode: LossMode::C2ae,
            batch_size: 500,
            epochs: 100,
            patience: 10,
            learning_rate: 1e-3,
            optimizer: Algorithm::default(),
            seed: 0,
            val_fraction: 1.0 / 6.0,
            alpha: 1.0,
            lambda: 0.5,
            alpha_grid: vec![0.1, 1.0, 10.0],
            sweep_alpha: false,
            latent_dim: None,
            hidden_dims: vec![512, 512],
            slope: DEFAULT_SLOPE,
            zero_mean_labels: false,
            whitening: Whitening::Sum,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveRecord {
    pub phi: f64,
    pub gamma: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Batch means over the epoch.
    pub phi: f64,
    pub gamma: f64,
    pub total: f64,
    pub val_micro_f1: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainHistory {
    pub alpha: f64,
    /// Batch-mean objective of the untouched initial model over the first
    /// epoch's batches.
    pub initial: ObjectiveRecord,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
    #[serde(skip)]
    pub wall_time_secs: f64,
}

impl PartialEq for TrainHistory {
    /// Ignores wall time.
    fn eq(&self, other: &Self) -> bool {
        self.alpha == other.alpha
            && self.initial == other.initial
            && self.epochs == other.epochs
            && self.best_epoch == other.best_epoch
    }
}

impl TrainHistory {
    pub fn best_val_micro_f1(&self) -> f64 {
        self.epochs
            .iter()
            .find(|e| e.epoch == self.best_epoch)
            .map_or(0.0, |e| e.val_micro_f1)
    }
}

/// What `fe` sees for a block of labels.
pub fn encoder_input(labels: &LabelMatrix, zero_mean: bool) -> Matrix {
    if zero_mean {
        preprocess_missing_inputs(labels)
    } else {
        labels.to_binary()
    }
}

/// `CALIBRATION_STEPS + 1` evenly spaced values from `lo` to `hi`.
pub fn threshold_candidates(lo: f64, hi: f64) -> Vec<f64> {
    let step = (hi - lo) / CALIBRATION_STEPS as f64;
    (0..=CALIBRATION_STEPS)
        .map(|k| {
            if k == CALIBRATION_STEPS {
                hi
            } else {
                lo + k as f64 * step
            }
        })
        .collect()
}

/// Picks the candidate threshold with the best micro-F1 against the known
/// entries of `truth`; ties go to the smallest candidate. Returns
/// `(threshold, micro_f1)`.
pub fn calibrate_threshold(scores: &Matrix, truth: &LabelMatrix) -> Result<(f64, f64)> {
    if scores.cols() == 0 || scores.rows() == 0 {
        return Err(Error::EmptyDataset("validation set".into()));
    }
    if scores.shape() != (truth.n_labels(), truth.n_instances()) {
        return Err(Error::shape(
            "calibrate_threshold",
            format!("{}x{}", truth.n_labels(), truth.n_instances()),
            format!("{}x{}", scores.rows(), scores.cols()),
        ));
    }
    let lo = scores
        .as_slice()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let hi = scores
        .as_slice()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    // micro-F1 = 2tp / (2tp + fp + fn), compared as exact fractions so equal
    // scores tie regardless of rounding
    let mut best: Option<(f64, u64, u64, f64)> = None;
    for t in threshold_candidates(lo, hi) {
        let counts = confusion_known(&binarize(scores, t), truth)?;
        let (tp, fp, fn_) = counts.labels.iter().fold((0u64, 0u64, 0u64), |a, c| {
            (a.0 + c.tp as u64, a.1 + c.fp as u64, a.2 + c.fn_ as u64)
        });
        let (num, den) = (2 * tp, 2 * tp + fp + fn_);
        let better = match best {
            None => true,
            Some((_, bn, bd, _)) => {
                u128::from(num) * u128::from(bd.max(1)) > u128::from(bn) * u128::from(den.max(1))
            }
        };
        if better {
            best = Some((t, num, den, micro_f1(&counts)));
        }
    }
    let (t, _, _, f) = best.expect("at least one candidate");
    Ok((t, f))
}

impl C2AEModel {
    /// Calibrates and stores the threshold on a validation set.
    pub fn calibrate_threshold(
        &mut self,
        val_features: &Matrix,
        val_labels: &LabelMatrix,
    ) -> Result<f64> {
        let scores = self.predict_scores(val_features)?;
        let (t, _) = calibrate_threshold(&scores, val_labels)?;
        self.threshold = Some(t);
        Ok(t)
    }
}

/// Trains on `dataset`, holding out `config.val_fraction` of it for early
/// stopping and threshold calibration. With `sweep_alpha`, trains once per
/// grid value and keeps the best validation micro-F1.
pub fn train(
    dataset: &MultiLabelDataset,
    config: &TrainConfig,
) -> Result<(C2AEModel, TrainHistory)> {
    if dataset.n_instances() == 0 {
        return Err(Error::EmptyDataset("no instances".into()));
    }
    if dataset.n_labels() == 0 {
        return Err(Error::EmptyDataset("no labels".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::invalid("batch size must be >= 1"));
    }
    let (train_set, val_set) = split(dataset, config.val_fraction, config.seed)?;

    if !config.sweep_alpha || config.loss_mode != LossMode::C2ae {
        return train_once(&train_set, &val_set, config, config.alpha);
    }
    if config.alpha_grid.is_empty() {
        return Err(Error::invalid("alpha sweep requested with an empty grid"));
    }
    let mut best: Option<(C2AEModel, TrainHistory)> = None;
    for &alpha in &config.alpha_grid {
        let (model, hist) = train_once(&train_set, &val_set, config, alpha)?;
        info!(
            "alpha {alpha}: best validation micro-F1 {:.4}",
            hist.best_val_micro_f1()
        );
        if best
            .as_ref()
            .is_none_or(|(_, h)| hist.best_val_micro_f1() > h.best_val_micro_f1())
        {
            best = Some((model, hist));
        }
    }
    Ok(best.expect("non-empty grid"))
}

fn train_once(
    train_set: &MultiLabelDataset,
    val_set: &MultiLabelDataset,
    config: &TrainConfig,
    alpha: f64,
) -> Result<(C2AEModel, TrainHistory)> {
    let start = Instant::now();
    let m = train_set.n_labels();
    let l = config.latent_dim.unwrap_or(m);
    if config.batch_size < l && config.loss_mode == LossMode::C2ae {
        warn!(
            "batch size {} is below the latent width {l}; the whitening penalty cannot reach zero",
            config.batch_size
        );
    }
    let spec = ModelSpec {
        mode: config.loss_mode,
        n_features: train_set.n_features(),
        n_labels: m,
        latent_dim: l,
        hidden_dims: config.hidden_dims.clone(),
        slope: config.slope,
        alpha,
        lambda: config.lambda,
        whitening: config.whitening,
    };
    let mut model = C2AEModel::init(&spec, config.seed)?;
    let sizes: Vec<usize> = model.param_slices_mut().iter().map(|s| s.len()).collect();
    let mut opt = OptimizerState::new(config.optimizer, config.learning_rate, &sizes)?;

    let n = train_set.n_instances();
    let initial = {
        let plan = BatchPlan::for_epoch(n, config.batch_size, config.seed, 0)?;
        let mut acc = Accumulator::default();
        for b in batches(train_set, &plan) {
            let enc = encoder_input(&b.labels, config.zero_mean_labels);
            acc.add(model.objective(&b.features, &enc, &b.sets)?);
        }
        acc.mean()
    };

    let mut records = Vec::new();
    let mut best: Option<(f64, usize, C2AEModel)> = None;
    let mut stale = 0;
    for epoch in 0..config.epochs {
        let plan = BatchPlan::for_epoch(n, config.batch_size, config.seed, epoch as u64)?;
        let mut acc = Accumulator::default();
        for b in batches(train_set, &plan) {
            let enc = encoder_input(&b.labels, config.zero_mean_labels);
            let (value, grads) = model.objective_and_grads(&b.features, &enc, &b.sets)?;
            if !value.total.is_finite() || !grads.is_finite() {
                return Err(Error::NonFinite(format!("objective at epoch {epoch}")));
            }
            acc.add(value);
            opt.step(&mut model.param_slices_mut(), &grads.slices())?;
        }
        let mean = acc.mean();
        let val_scores = model.predict_scores(val_set.features())?;
        if !val_scores.is_finite() {
            return Err(Error::NonFinite(format!(
                "validation scores at epoch {epoch}"
            )));
        }
        let (threshold, f1) = calibrate_threshold(&val_scores, val_set.labels())?;
        debug!(
            "epoch {epoch}: phi {:.6e} gamma {:.6e} total {:.6e} val micro-F1 {f1:.4}",
            mean.phi, mean.gamma, mean.total
        );
        records.push(EpochRecord {
            epoch,
            phi: mean.phi,
            gamma: mean.gamma,
            total: mean.total,
            val_micro_f1: f1,
            threshold,
        });
        if best.as_ref().is_none_or(|(b, _, _)| f1 > *b) {
            let mut snapshot = model.clone();
            snapshot.threshold = Some(threshold);
            best = Some((f1, epoch, snapshot));
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                info!("early stop after epoch {epoch}");
                break;
            }
        }
    }

    let (best_epoch, model) = match best {
        Some((_, e, snapshot)) => (e, snapshot),
        None => {
            // zero epochs requested: calibrate the initial model
            model.calibrate_threshold(val_set.features(), val_set.labels())?;
            (0, model)
        }
    };
    let history = TrainHistory {
        alpha,
        initial,
        epochs: records,
        best_epoch,
        wall_time_secs: start.elapsed().as_secs_f64(),
    };
    Ok((model, history))
}

#[derive(Default)]
struct Accumulator {
    sum: ObjectiveRecord,
    count: usize,
}

impl Accumulator {
    fn add(&mut self, v: ObjectiveValue) {
        self.sum.phi += v.phi;
        self.sum.gamma += v.gamma;
        self.sum.total += v.total;
        self.count += 1;
    }

    fn mean(&self) -> ObjectiveRecord {
        let c = self.count.max(1) as f64;
        ObjectiveRecord {
            phi: self.sum.phi / c,
            gamma: self.sum.gamma / c,
            total: self.sum.total / c,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_correlated, Label};

    fn small_config() -> TrainConfig {
        TrainConfig {
            batch_size: 32,
            epochs: 3,
            hidden_dims: vec![16],
            latent_dim: Some(3),
            ..TrainConfig::default()
        }
    }

    #[test]
    fn separable_scores_calibrate_to_perfect_f1() {
        let truth = LabelMatrix::new(
            2,
            3,
            vec![
                Label::Pos,
                Label::Neg,
                Label::Pos,
                Label::Neg,
                Label::Pos,
                Label::Neg,
            ],
        )
        .unwrap();
        let scores = Matrix::from_rows(&[&[2.0, -1.0, 1.5], &[-0.5, 3.0, -2.0]]).unwrap();
        let (t, f1) = calibrate_threshold(&scores, &truth).unwrap();
        assert_eq!(f1, 1.0);
        assert_eq!(binarize(&scores, t), truth.to_binary());
    }

    #[test]
    fn constant_scores_pick_the_smallest_candidate() {
        let truth = LabelMatrix::new(1, 2, vec![Label::Pos, Label::Neg]).unwrap();
        let scores = Matrix::filled(1, 2, 0.25);
        assert_eq!(calibrate_threshold(&scores, &truth).unwrap().0, 0.25);
    }

    #[test]
    fn empty_validation_is_an_error() {
        let truth = LabelMatrix::new(2, 0, vec![]).unwrap();
        assert!(calibrate_threshold(&Matrix::zeros(2, 0), &truth).is_err());
    }

    #[test]
    fn candidates_span_the_range() {
        let c = threshold_candidates(-1.0, 3.0);
        assert_eq!(c.len(), 101);
        assert_eq!(c[0], -1.0);
        assert_eq!(c[100], 3.0);
        assert!((c[50] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn one_epoch_is_deterministic() {
        let ds = synth_correlated(120, 5, 4, 7).unwrap();
        let cfg = TrainConfig {
            epochs: 1,
            ..small_config()
        };
        let (m1, h1) = train(&ds, &cfg).unwrap();
        let (m2, h2) = train(&ds, &cfg).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(h1, h2);
        assert_eq!(h1.epochs.len(), 1);
        assert!(m1.threshold().is_some());
    }

    #[test]
    fn degenerate_datasets_are_rejected() {
        let empty =
            MultiLabelDataset::new(Matrix::zeros(3, 0), LabelMatrix::new(2, 0, vec![]).unwrap())
                .unwrap();
        assert!(matches!(
            train(&empty, &small_config()),
            Err(Error::EmptyDataset(_))
        ));
        let no_labels = MultiLabelDataset::new(
            Matrix::zeros(3, 10),
            LabelMatrix::new(0, 10, vec![]).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            train(&no_labels, &small_config()),
            Err(Error::EmptyDataset(_))
        ));
    }

    #[test]
    fn alpha_sweep_reports_a_grid_value() {
        let ds = synth_correlated(120, 5, 4, 2).unwrap();
        let cfg = TrainConfig {
            sweep_alpha: true,
            alpha_grid: vec![0.1, 10.0],
            epochs: 2,
            ..small_config()
        };
        let (model, hist) = train(&ds, &cfg).unwrap();
        assert!(cfg.alpha_grid.contains(&hist.alpha));
        assert_eq!(model.alpha(), hist.alpha);
    }

    #[test]
    fn baselines_train() {
        let ds = synth_correlated(120, 5, 4, 3).unwrap();
        for mode in [LossMode::Bpmll, LossMode::Bce] {
            let cfg = TrainConfig {
                loss_mode: mode,
                ..small_config()
            };
            let (model, hist) = train(&ds, &cfg).unwrap();
            assert_eq!(model.mode(), mode);
            assert!(hist.epochs.iter().all(|e| e.phi == 0.0));
        }
    }
}
