//! The canonical-correlated autoencoder and its two baselines.
//!
//! Three networks share an `l`-dimensional latent space:
//!
//! * `fx`: features → latent (the predictor's encoder),
//! * `fe`: labels → latent (label embedding, training only),
//! * `fd`: latent → label scores.
//!
//! Training minimizes `Φ(fx, fe) + α·Γ(fe, fd)`, where `Φ` aligns `fx(X)` with
//! `fe(Y)` under whitening penalties and `Γ` is the pairwise ranking loss on
//! `fd(fe(Y))`. Prediction uses the feature path `fd(fx(x))`.
//!
//! The `bpmll` and `bce` modes drop `fe` and train `fd(fx(x))` directly with
//! the ranking loss or sigmoid cross-entropy.

mod io;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use io::{load_model, save_model, FORMAT_VERSION};
pub use train::{
    calibrate_threshold, encoder_input, threshold_candidates, train, EpochRecord, ObjectiveRecord,
    TrainConfig, TrainHistory, CALIBRATION_STEPS,
};

use crate::error::{Error, Result};
use crate::losses::{self, LabelSets, LatentBatch, LatentPenalty, Whitening};
use crate::nn::{init_network, ActivationSpec, Matrix, Network, NetworkGrads};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossMode {
    /// Latent alignment plus ranking loss through the label autoencoder.
    #[default]
    C2ae,
    /// Ranking loss directly on `fd(fx(x))`.
    Bpmll,
    /// Sigmoid cross-entropy directly on `fd(fx(x))`.
    Bce,
}

impl LossMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            LossMode::C2ae => "c2ae",
            LossMode::Bpmll => "bpmll",
            LossMode::Bce => "bce",
        }
    }
}

impl fmt::Display for LossMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "c2ae" => Ok(LossMode::C2ae),
            "bpmll" => Ok(LossMode::Bpmll),
            "bce" => Ok(LossMode::Bce),
            other => Err(Error::invalid(format!(
                "unknown loss mode {other:?} (expected c2ae, bpmll or bce)"
            ))),
        }
    }
}

/// Architecture and loss settings needed to build a fresh model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub mode: LossMode,
    pub n_features: usize,
    pub n_labels: usize,
    pub latent_dim: usize,
    /// Hidden widths of `fx`; `fe` and `fd` are single affine maps.
    pub hidden_dims: Vec<usize>,
    pub slope: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub whitening: Whitening,
}

#[derive(Debug, Clone, PartialEq)]
pub struct C2AEModel {
    pub(crate) mode: LossMode,
    pub(crate) fx: Network,
    pub(crate) fe: Option<Network>,
    pub(crate) fd: Network,
    pub(crate) alpha: f64,
    pub(crate) lambda: f64,
    pub(crate) whitening: Whitening,
    pub(crate) slope: f64,
    pub(crate) threshold: Option<f64>,
}

/// The three parts of the objective on one batch.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ObjectiveValue {
    /// Latent alignment loss (0 outside c2ae mode).
    pub phi: f64,
    /// Output loss: ranking loss, or BCE in bce mode.
    pub gamma: f64,
    /// `phi + α·gamma` in c2ae mode, `gamma` otherwise.
    pub total: f64,
}

/// Gradient of the objective w.r.t. every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub fx: NetworkGrads,
    pub fe: Option<NetworkGrads>,
    pub fd: NetworkGrads,
}

impl ModelGrads {
    /// Slices in `fx, fe, fd` order, matching [`C2AEModel::param_slices_mut`].
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut v = self.fx.slices();
        if let Some(fe) = &self.fe {
            v.extend(fe.slices());
        }
        v.extend(self.fd.slices());
        v
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.slices().concat()
    }

    pub fn is_finite(&self) -> bool {
        self.slices()
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite()))
    }
}

impl C2AEModel {
    /// Randomly initialized model. `fx`, `fe` and `fd` draw from
    /// `seed`, `seed + 1` and `seed + 2`.
    pub fn init(spec: &ModelSpec, seed: u64) -> Result<Self> {
        if spec.n_labels == 0 {
            return Err(Error::invalid("model needs at least one label"));
        }
        if !(spec.alpha > 0.0 && spec.alpha.is_finite()) {
            return Err(Error::invalid(format!(
                "alpha must be positive, got {}",
                spec.alpha
            )));
        }
        if !(spec.lambda >= 0.0 && spec.lambda.is_finite()) {
            return Err(Error::invalid(format!(
                "lambda must be >= 0, got {}",
                spec.lambda
            )));
        }
        let acts = ActivationSpec::leaky_hidden(spec.slope)?;
        let mut fx_dims = vec![spec.n_features];
        fx_dims.extend(&spec.hidden_dims);
        fx_dims.push(spec.latent_dim);
        let fx = init_network(&fx_dims, acts, seed)?;
        let fe = match spec.mode {
            LossMode::C2ae => Some(init_network(
                &[spec.n_labels, spec.latent_dim],
                acts,
                seed.wrapping_add(1),
            )?),
            _ => None,
        };
        let fd = init_network(
            &[spec.latent_dim, spec.n_labels],
            acts,
            seed.wrapping_add(2),
        )?;
        Ok(C2AEModel {
            mode: spec.mode,
            fx,
            fe,
            fd,
            alpha: spec.alpha,
            lambda: spec.lambda,
            whitening: spec.whitening,
            slope: spec.slope,
            threshold: None,
        })
    }

    /// Assembles a model from explicit networks. `fe` must be present
    /// exactly in c2ae mode and the dimensions must chain.
    pub fn from_parts(
        mode: LossMode,
        fx: Network,
        fe: Option<Network>,
        fd: Network,
        alpha: f64,
        lambda: f64,
    ) -> Result<Self> {
        let l = fx.out_dim();
        if fd.in_dim() != l {
            return Err(Error::shape(
                "C2AEModel::from_parts",
                format!("fd input {l}"),
                fd.in_dim(),
            ));
        }
        match (&fe, mode) {
            (Some(fe), LossMode::C2ae) => {
                if fe.out_dim() != l || fe.in_dim() != fd.out_dim() {
                    return Err(Error::shape(
                        "C2AEModel::from_parts",
                        format!("fe {}→{}", fd.out_dim(), l),
                        format!("{}→{}", fe.in_dim(), fe.out_dim()),
                    ));
                }
            }
            (None, LossMode::C2ae) => return Err(Error::invalid("c2ae mode needs fe")),
            (Some(_), _) => return Err(Error::invalid(format!("{mode} mode takes no fe"))),
            (None, _) => {}
        }
        let slope = fx
            .layers()
            .iter()
            .find_map(|l| match l.activation() {
                crate::nn::Activation::LeakyRelu { slope } => Some(slope),
                _ => None,
            })
            .unwrap_or(crate::nn::DEFAULT_SLOPE);
        Ok(C2AEModel {
            mode,
            fx,
            fe,
            fd,
            alpha,
            lambda,
            whitening: Whitening::Sum,
            slope,
            threshold: None,
        })
    }

    pub fn mode(&self) -> LossMode {
        self.mode
    }

    pub fn fx(&self) -> &Network {
        &self.fx
    }

    pub fn fe(&self) -> Option<&Network> {
        self.fe.as_ref()
    }

    pub fn fd(&self) -> &Network {
        &self.fd
    }

    pub fn fx_mut(&mut self) -> &mut Network {
        &mut self.fx
    }

    pub fn fe_mut(&mut self) -> Option<&mut Network> {
        self.fe.as_mut()
    }

    pub fn fd_mut(&mut self) -> &mut Network {
        &mut self.fd
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn set_alpha(&mut self, alpha: f64) {
        self.alpha = alpha;
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn whitening(&self) -> Whitening {
        self.whitening
    }

    pub fn set_whitening(&mut self, w: Whitening) {
        self.whitening = w;
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }

    pub fn threshold(&self) -> Option<f64> {
        self.threshold
    }

    pub fn set_threshold(&mut self, t: Option<f64>) {
        self.threshold = t;
    }

    pub fn n_features(&self) -> usize {
        self.fx.in_dim()
    }

    pub fn n_labels(&self) -> usize {
        self.fd.out_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.fx.out_dim()
    }

    fn networks(&self) -> Vec<&Network> {
        let mut v = vec![&self.fx];
        v.extend(self.fe.as_ref());
        v.push(&self.fd);
        v
    }

    pub fn num_params(&self) -> usize {
        self.networks().iter().map(|n| n.num_params()).sum()
    }

    /// Parameter slices in `fx, fe, fd` order.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.fx.param_slices_mut();
        if let Some(fe) = self.fe.as_mut() {
            v.extend(fe.param_slices_mut());
        }
        v.extend(self.fd.param_slices_mut());
        v
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.networks()
            .iter()
            .flat_map(|n| n.flat_params())
            .collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::shape(
                "C2AEModel::set_flat_params",
                self.num_params(),
                flat.len(),
            ));
        }
        let mut rest = flat;
        for s in self.param_slices_mut() {
            let (head, tail) = rest.split_at(s.len());
            s.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    fn latent_penalty(&self) -> LatentPenalty {
        LatentPenalty {
            lambda: self.lambda,
            whitening: self.whitening,
        }
    }

    fn check_batch(&self, features: &Matrix, encoder_in: &Matrix, sets: &LabelSets) -> Result<()> {
        let n = features.cols();
        if features.rows() != self.n_features() {
            return Err(Error::shape(
                "objective",
                format!("{} feature rows", self.n_features()),
                features.rows(),
            ));
        }
        if sets.m() != self.n_labels() || sets.len() != n {
            return Err(Error::shape(
                "objective",
                format!("label sets for {} labels x {n} instances", self.n_labels()),
                format!("{} x {}", sets.m(), sets.len()),
            ));
        }
        if self.mode == LossMode::C2ae && encoder_in.shape() != (self.n_labels(), n) {
            return Err(Error::shape(
                "objective",
                format!("{}x{n} encoder input", self.n_labels()),
                format!("{}x{}", encoder_in.rows(), encoder_in.cols()),
            ));
        }
        Ok(())
    }

    /// Objective on one batch. `encoder_in` is what `fe` sees (ignored
    /// outside c2ae mode); `sets` defines the known label pairs.
    pub fn objective(
        &self,
        features: &Matrix,
        encoder_in: &Matrix,
        sets: &LabelSets,
    ) -> Result<ObjectiveValue> {
        self.check_batch(features, encoder_in, sets)?;
        match self.mode {
            LossMode::C2ae => {
                let fe = self.fe.as_ref().expect("c2ae has fe");
                let cx = self.fx.predict(features)?;
                let cy = fe.predict(encoder_in)?;
                let scores = self.fd.predict(&cy)?;
                let phi = self.latent_penalty().loss(&LatentBatch::new(&cx, &cy)?)?;
                let gamma = losses::output_loss(&scores, sets)?;
                Ok(ObjectiveValue {
                    phi,
                    gamma,
                    total: phi + self.alpha * gamma,
                })
            }
            LossMode::Bpmll => {
                let scores = self.predict_scores(features)?;
                let gamma = losses::output_loss(&scores, sets)?;
                Ok(ObjectiveValue {
                    phi: 0.0,
                    gamma,
                    total: gamma,
                })
            }
            LossMode::Bce => {
                let scores = self.predict_scores(features)?;
                let (gamma, _) = losses::bce_loss(&scores, sets)?;
                Ok(ObjectiveValue {
                    phi: 0.0,
                    gamma,
                    total: gamma,
                })
            }
        }
    }

    /// Objective plus its gradient w.r.t. every parameter, all evaluated at
    /// the current parameters.
    ///
    /// In c2ae mode `Φ` reaches `fx` and `fe`, `α·Γ` reaches `fd` and `fe`;
    /// the two contributions to `fe` are summed at its output.
    pub fn objective_and_grads(
        &self,
        features: &Matrix,
        encoder_in: &Matrix,
        sets: &LabelSets,
    ) -> Result<(ObjectiveValue, ModelGrads)> {
        self.check_batch(features, encoder_in, sets)?;
        match self.mode {
            LossMode::C2ae => {
                let fe = self.fe.as_ref().expect("c2ae has fe");
                let (cx, cache_x) = self.fx.forward(features)?;
                let (cy, cache_e) = fe.forward(encoder_in)?;
                let (scores, cache_d) = self.fd.forward(&cy)?;

                let (phi, d_cx, mut d_cy) = self
                    .latent_penalty()
                    .loss_and_grads(&LatentBatch::new(&cx, &cy)?)?;
                let gamma = losses::output_loss(&scores, sets)?;
                let d_scores = losses::output_grad(&scores, sets)?.scale(self.alpha);

                let (g_fd, d_cy_gamma) = self.fd.backward(&cache_d, &d_scores)?;
                d_cy.add_scaled(&d_cy_gamma, 1.0)?;
                let (g_fe, _) = fe.backward(&cache_e, &d_cy)?;
                let (g_fx, _) = self.fx.backward(&cache_x, &d_cx)?;
                Ok((
                    ObjectiveValue {
                        phi,
                        gamma,
                        total: phi + self.alpha * gamma,
                    },
                    ModelGrads {
                        fx: g_fx,
                        fe: Some(g_fe),
                        fd: g_fd,
                    },
                ))
            }
            LossMode::Bpmll | LossMode::Bce => {
                let (h, cache_x) = self.fx.forward(features)?;
                let (scores, cache_d) = self.fd.forward(&h)?;
                let (gamma, d_scores) = if self.mode == LossMode::Bpmll {
                    (
                        losses::output_loss(&scores, sets)?,
                        losses::output_grad(&scores, sets)?,
                    )
                } else {
                    losses::bce_loss(&scores, sets)?
                };
                let (g_fd, d_h) = self.fd.backward(&cache_d, &d_scores)?;
                let (g_fx, _) = self.fx.backward(&cache_x, &d_h)?;
                Ok((
                    ObjectiveValue {
                        phi: 0.0,
                        gamma,
                        total: gamma,
                    },
                    ModelGrads {
                        fx: g_fx,
                        fe: None,
                        fd: g_fd,
                    },
                ))
            }
        }
    }

    /// `fd(fx(x))`, `m × n`.
    pub fn predict_scores(&self, features: &Matrix) -> Result<Matrix> {
        if features.rows() != self.n_features() {
            return Err(Error::shape(
                "predict_scores",
                format!("{} feature rows", self.n_features()),
                features.rows(),
            ));
        }
        self.fd.predict(&self.fx.predict(features)?)
    }

    /// `1` where the score is strictly above the threshold. `threshold`
    /// overrides the calibrated one.
    pub fn predict_labels(&self, features: &Matrix, threshold: Option<f64>) -> Result<Matrix> {
        let t = threshold.or(self.threshold).ok_or(Error::Uncalibrated)?;
        Ok(binarize(&self.predict_scores(features)?, t))
    }

    /// Column `j` is `fe(e_j)`, the latent code of label `j` alone.
    pub fn embed_labels(&self) -> Result<Matrix> {
        let fe = self
            .fe
            .as_ref()
            .ok_or_else(|| Error::WrongMode(self.mode.to_string()))?;
        fe.predict(&Matrix::identity(self.n_labels()))
    }

    /// The `k` labels whose embeddings are closest (Euclidean) to label
    /// `label`'s, nearest first; ties go to the lower index.
    pub fn nearest_label_neighbors(&self, label: usize, k: usize) -> Result<Vec<(usize, f64)>> {
        let m = self.n_labels();
        if label >= m {
            return Err(Error::invalid(format!(
                "label {label} out of range (m = {m})"
            )));
        }
        if k >= m {
            return Err(Error::invalid(format!(
                "k = {k} exceeds the {} other labels",
                m - 1
            )));
        }
        let emb = self.embed_labels()?;
        let query = emb.column(label);
        let mut dists: Vec<(usize, f64)> = (0..m)
            .filter(|&j| j != label)
            .map(|j| {
                let d2: f64 = emb
                    .column(j)
                    .iter()
                    .zip(&query)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum();
                (j, d2.sqrt())
            })
            .collect();
        dists.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        dists.truncate(k);
        Ok(dists)
    }
}

/// `1.0` where `score > threshold`, else `0.0`.
pub fn binarize(scores: &Matrix, threshold: f64) -> Matrix {
    scores.map(|s| if s > threshold { 1.0 } else { 0.0 })
}
