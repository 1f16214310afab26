//! Minimal dense-network engine: matrices, affine layers with leaky-ReLU,
//! explicit forward/backward passes, Adam/SGD, and a finite-difference oracle.

mod finite_diff;
mod matrix;
mod network;
mod optim;

pub use finite_diff::{finite_diff_grad, max_rel_error, rel_error};
pub use matrix::Matrix;
pub use network::{
    glorot_bound, init_network, leaky_relu, leaky_relu_grad, Activation, ActivationSpec,
    DenseLayer, ForwardCache, LayerGrad, Network, NetworkGrads, DEFAULT_SLOPE,
};
pub use optim::{Algorithm, OptimizerState};
