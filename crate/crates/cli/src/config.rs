//! Training configuration file.
//!
//! A flat TOML table whose keys are the [`TrainConfig`] field names, plus the
//! input and output paths of a training run. Every key is optional; unknown
//! keys are an error.
//!
//! ```toml
//! data = "train.txt"
//! out = "model.txt"
//! loss_mode = "c2ae"
//! epochs = 50
//! latent_dim = 6
//! whitening = "mean"
//! optimizer = "sgd"
//! momentum = 0.9
//! ```

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use c2ae::losses::Whitening;
use c2ae::model::{LossMode, TrainConfig};
use c2ae::nn::Algorithm;
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerName {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub history: Option<PathBuf>,

    pub loss_mode: Option<LossMode>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub patience: Option<usize>,
    pub learning_rate: Option<f64>,
    pub optimizer: Option<OptimizerName>,
    /// SGD only.
    pub momentum: Option<f64>,
    pub seed: Option<u64>,
    pub val_fraction: Option<f64>,
    pub alpha: Option<f64>,
    pub lambda: Option<f64>,
    pub alpha_grid: Option<Vec<f64>>,
    pub sweep_alpha: Option<bool>,
    pub latent_dim: Option<usize>,
    pub hidden_dims: Option<Vec<usize>>,
    pub slope: Option<f64>,
    /// Missing-label mode.
    pub zero_mean_labels: Option<bool>,
    pub whitening: Option<Whitening>,
}

impl RunConfig {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    /// Values set in `self` win over `base`.
    pub fn over(self, base: RunConfig) -> RunConfig {
        macro_rules! pick {
            ($($f:ident),*) => { RunConfig { $($f: self.$f.or(base.$f)),* } };
        }
        pick!(
            data,
            out,
            history,
            loss_mode,
            batch_size,
            epochs,
            patience,
            learning_rate,
            optimizer,
            momentum,
            seed,
            val_fraction,
            alpha,
            lambda,
            alpha_grid,
            sweep_alpha,
            latent_dim,
            hidden_dims,
            slope,
            zero_mean_labels,
            whitening
        )
    }

    /// Fills unset fields from [`TrainConfig::default`].
    pub fn train_config(&self) -> anyhow::Result<TrainConfig> {
        let d = TrainConfig::default();
        let optimizer = match (self.optimizer, self.momentum) {
            (Some(OptimizerName::Sgd), m) => Algorithm::Sgd {
                momentum: m.unwrap_or(0.0),
            },
            (_, Some(_)) => bail!("`momentum` applies only to optimizer = \"sgd\""),
            _ => d.optimizer,
        };
        Ok(TrainConfig {
            loss_mode: self.loss_mode.unwrap_or(d.loss_mode),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            epochs: self.epochs.unwrap_or(d.epochs),
            patience: self.patience.unwrap_or(d.patience),
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            optimizer,
            seed: self.seed.unwrap_or(d.seed),
            val_fraction: self.val_fraction.unwrap_or(d.val_fraction),
            alpha: self.alpha.unwrap_or(d.alpha),
            lambda: self.lambda.unwrap_or(d.lambda),
            alpha_grid: self.alpha_grid.clone().unwrap_or(d.alpha_grid),
            sweep_alpha: self.sweep_alpha.unwrap_or(d.sweep_alpha),
            latent_dim: self.latent_dim.or(d.latent_dim),
            hidden_dims: self.hidden_dims.clone().unwrap_or(d.hidden_dims),
            slope: self.slope.unwrap_or(d.slope),
            zero_mean_labels: self.zero_mean_labels.unwrap_or(d.zero_mean_labels),
            whitening: self.whitening.unwrap_or(d.whitening),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::parse("").unwrap().train_config().unwrap();
        assert_eq!(cfg, TrainConfig::default());
    }

    #[test]
    fn keys_map_to_fields() {
        let text = r#"
            loss_mode = "bpmll"
            epochs = 7
            hidden_dims = [8, 4]
            whitening = "mean"
            optimizer = "sgd"
            momentum = 0.5
            zero_mean_labels = true
        "#;
        let cfg = RunConfig::parse(text).unwrap().train_config().unwrap();
        assert_eq!(cfg.loss_mode, LossMode::Bpmll);
        assert_eq!(cfg.epochs, 7);
        assert_eq!(cfg.hidden_dims, vec![8, 4]);
        assert_eq!(cfg.whitening, Whitening::Mean);
        assert_eq!(cfg.optimizer, Algorithm::Sgd { momentum: 0.5 });
        assert!(cfg.zero_mean_labels);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = RunConfig::parse("epoch = 3").unwrap_err();
        assert!(err.to_string().contains("epoch"), "{err}");
    }

    #[test]
    fn momentum_without_sgd_is_rejected() {
        let cfg = RunConfig::parse("momentum = 0.9").unwrap();
        assert!(cfg.train_config().is_err());
    }

    #[test]
    fn flags_override_file() {
        let file = RunConfig::parse("seed = 3\nepochs = 9").unwrap();
        let flags = RunConfig {
            seed: Some(5),
            ..RunConfig::default()
        };
        let cfg = flags.over(file).train_config().unwrap();
        assert_eq!((cfg.seed, cfg.epochs), (5, 9));
    }
}
