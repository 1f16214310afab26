//! Multi-label classification with a canonical-correlated autoencoder.
//!
//! A feature network and a label network are trained to meet in a shared
//! latent space (aligned, with whitened codes), while a decoder recovers the
//! labels from that space under a pairwise ranking loss. At test time the
//! feature network and the decoder predict labels directly.
//!
//! ```
//! use c2ae::data::synth_correlated;
//! use c2ae::model::{train, TrainConfig};
//! use c2ae::metrics::{confusion, report};
//!
//! let ds = synth_correlated(120, 6, 4, 7)?;
//! let config = TrainConfig {
//!     batch_size: 40,
//!     epochs: 3,
//!     hidden_dims: vec![16],
//!     latent_dim: Some(3),
//!     ..TrainConfig::default()
//! };
//! let (model, history) = train(&ds, &config)?;
//! assert!(!history.epochs.is_empty());
//!
//! let pred = model.predict_labels(ds.features(), None)?;
//! let r = report(&confusion(&pred, &ds.labels().to_binary())?);
//! assert!((0.0..=1.0).contains(&r.o_f1));
//! # Ok::<(), c2ae::Error>(())
//! ```
//!
//! A longer guide lives in the `book/` directory of the repository; its code
//! snippets run as doc-tests of this crate.

pub mod data;
mod error;
pub mod gradcheck;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod nn;

pub use error::{Error, Result};

// Compiles the guide's code blocks as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/latent.md")]
    mod latent {}
    #[doc = include_str!("../../../book/src/ranking.md")]
    mod ranking {}
    #[doc = include_str!("../../../book/src/missing.md")]
    mod missing {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/formats.md")]
    mod formats {}
}
