//! Training losses and their analytic gradients.
//!
//! * [`latent`]: alignment of the feature and label codes in the latent space.
//! * [`ranking`]: pairwise exponential ranking loss on decoder scores, with
//!   missing-label masking.
//! * [`bce`]: per-label sigmoid cross-entropy, the binary-relevance baseline.

pub mod bce;
pub mod latent;
pub mod ranking;

pub use bce::bce_loss;
pub use latent::{
    latent_grads, latent_loss, LatentBatch, LatentPenalty, LatentPenaltyTerms, Whitening,
};
pub use ranking::{
    instrumentation, output_grad, output_grad_unmasked, output_loss, output_loss_unmasked,
    InstanceLabels, LabelSets, EXP_CLAMP,
};
