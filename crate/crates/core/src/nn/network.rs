//! Dense layers chained into a feed-forward network, with an explicit
//! forward cache and a hand-written reverse pass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::matrix::Matrix;
use crate::error::{Error, Result};

pub const DEFAULT_SLOPE: f64 = 0.01;

/// `x` for `x >= 0`, `slope * x` otherwise.
#[inline]
pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        slope * x
    }
}

/// Derivative of [`leaky_relu`]. The kink at 0 takes the negative branch.
#[inline]
pub fn leaky_relu_grad(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        slope
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    LeakyRelu { slope: f64 },
    Linear,
}

impl Activation {
    pub fn leaky(slope: f64) -> Result<Self> {
        let a = Activation::LeakyRelu { slope };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Activation::LeakyRelu { slope } if !(slope > 0.0 && slope < 1.0) => Err(
                Error::invalid(format!("leaky-ReLU slope must lie in (0, 1), got {slope}")),
            ),
            _ => Ok(()),
        }
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            Activation::LeakyRelu { slope } => leaky_relu(x, slope),
            Activation::Linear => x,
        }
    }

    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            Activation::LeakyRelu { slope } => leaky_relu_grad(x, slope),
            Activation::Linear => 1.0,
        }
    }

    pub fn apply_matrix(&self, m: &Matrix) -> Matrix {
        match self {
            Activation::Linear => m.clone(),
            _ => m.map(|x| self.apply(x)),
        }
    }
}

/// Activation used on hidden layers and on the final layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivationSpec {
    pub hidden: Activation,
    pub output: Activation,
}

impl ActivationSpec {
    /// Leaky-ReLU hidden layers, linear output.
    pub fn leaky_hidden(slope: f64) -> Result<Self> {
        Ok(ActivationSpec {
            hidden: Activation::leaky(slope)?,
            output: Activation::Linear,
        })
    }

    pub fn linear() -> Self {
        ActivationSpec {
            hidden: Activation::Linear,
            output: Activation::Linear,
        }
    }
}

/// Affine map followed by an elementwise activation: `act(W·x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    weight: Matrix,
    bias: Vec<f64>,
    activation: Activation,
}

impl DenseLayer {
    pub fn new(weight: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        activation.validate()?;
        if bias.len() != weight.rows() {
            return Err(Error::shape(
                "DenseLayer::new",
                format!("bias length {}", weight.rows()),
                bias.len(),
            ));
        }
        if weight.rows() == 0 || weight.cols() == 0 {
            return Err(Error::invalid("layer dimensions must be >= 1"));
        }
        Ok(DenseLayer {
            weight,
            bias,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn weight(&self) -> &Matrix {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// Mutable entries of the weight; the shape stays fixed.
    pub fn weight_mut(&mut self) -> &mut [f64] {
        self.weight.as_mut_slice()
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    fn affine(&self, input: &Matrix) -> Matrix {
        // Shapes are checked by Network::forward.
        let mut z = self.weight.matmul(input).expect("checked shape");
        let n = z.cols();
        let data = z.as_mut_slice();
        for (r, &b) in self.bias.iter().enumerate() {
            for v in &mut data[r * n..(r + 1) * n] {
                *v += b;
            }
        }
        z
    }
}

/// Gradient of one layer's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// Per-layer gradients, in the same order as [`Network::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGrads {
    pub layers: Vec<LayerGrad>,
}

impl NetworkGrads {
    pub fn zeros_like(net: &Network) -> Self {
        NetworkGrads {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weight: Matrix::zeros(l.out_dim(), l.in_dim()),
                    bias: vec![0.0; l.out_dim()],
                })
                .collect(),
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            for v in l.weight.as_mut_slice() {
                *v *= s;
            }
            for v in &mut l.bias {
                *v *= s;
            }
        }
    }

    /// Parameter-gradient slices: weight then bias, layer by layer.
    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
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

/// What [`Network::forward`] keeps around for the reverse pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer; `inputs[0]` is the batch itself.
    inputs: Vec<Matrix>,
    /// Pre-activation `W·x + b` of each layer.
    pre: Vec<Matrix>,
}

impl ForwardCache {
    pub fn pre_activations(&self) -> &[Matrix] {
        &self.pre
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<DenseLayer>,
}

impl Network {
    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("a network needs at least one layer"));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::shape(
                    "Network::from_layers",
                    format!("layer {} input dim {}", k + 1, pair[0].out_dim()),
                    pair[1].in_dim(),
                ));
            }
        }
        Ok(Network { layers })
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    /// Layer widths including the input, e.g. `[d, 512, 512, l]`.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.in_dim())
            .chain(self.layers.iter().map(|l| l.out_dim()))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.out_dim() * (l.in_dim() + 1))
            .sum()
    }

    /// Mutable parameter slices, in the order of [`NetworkGrads::slices`].
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.as_slice().iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::shape(
                "Network::set_flat_params",
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

    pub fn forward(&self, batch: &Matrix) -> Result<(Matrix, ForwardCache)> {
        self.check_input(batch)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut current = batch.clone();
        for layer in &self.layers {
            let z = layer.affine(&current);
            let a = layer.activation.apply_matrix(&z);
            inputs.push(current);
            pre.push(z);
            current = a;
        }
        Ok((current, ForwardCache { inputs, pre }))
    }

    /// Forward pass without a cache.
    pub fn predict(&self, batch: &Matrix) -> Result<Matrix> {
        self.check_input(batch)?;
        let mut current = batch.clone();
        for layer in &self.layers {
            current = layer.activation.apply_matrix(&layer.affine(&current));
        }
        Ok(current)
    }

    fn check_input(&self, batch: &Matrix) -> Result<()> {
        if batch.rows() != self.in_dim() {
            return Err(Error::shape(
                "Network::forward",
                format!("{} input rows", self.in_dim()),
                batch.rows(),
            ));
        }
        Ok(())
    }

    /// Reverse pass. `grad_output` is `∂L/∂output` for some scalar `L`; returns
    /// `∂L/∂params` and `∂L/∂input`.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_output: &Matrix,
    ) -> Result<(NetworkGrads, Matrix)> {
        if cache.pre.len() != self.layers.len() {
            return Err(Error::shape(
                "Network::backward",
                format!("cache for {} layers", self.layers.len()),
                cache.pre.len(),
            ));
        }
        let last = &cache.pre[self.layers.len() - 1];
        if grad_output.shape() != last.shape() {
            return Err(Error::shape(
                "Network::backward",
                format!("{}x{}", last.rows(), last.cols()),
                format!("{}x{}", grad_output.rows(), grad_output.cols()),
            ));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut upstream = grad_output.clone();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let dz = match layer.activation {
                Activation::Linear => upstream,
                act => cache.pre[k]
                    .zip_map(&upstream, "Network::backward", |z, g| g * act.derivative(z))?,
            };
            let dw = dz.matmul_t(&cache.inputs[k])?;
            let db = dz.row_sums();
            upstream = layer.weight.t_matmul(&dz)?;
            grads.push(LayerGrad {
                weight: dw,
                bias: db,
            });
        }
        grads.reverse();
        Ok((NetworkGrads { layers: grads }, upstream))
    }
}

/// Glorot-uniform weights in `±√(6/(fan_in+fan_out))`, zero biases.
///
/// `layer_dims = [in, h1, ..., out]`; hidden layers use `spec.hidden`, the
/// last layer `spec.output`. The same seed always gives the same network.
pub fn init_network(layer_dims: &[usize], spec: ActivationSpec, seed: u64) -> Result<Network> {
    if layer_dims.len() < 2 {
        return Err(Error::invalid(format!(
            "need at least input and output dims, got {layer_dims:?}"
        )));
    }
    if layer_dims.contains(&0) {
        return Err(Error::invalid(format!(
            "layer dims must all be >= 1, got {layer_dims:?}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_layers = layer_dims.len() - 1;
    let mut layers = Vec::with_capacity(n_layers);
    for (k, pair) in layer_dims.windows(2).enumerate() {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let bound = glorot_bound(fan_in, fan_out);
        let data = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        let activation = if k + 1 == n_layers {
            spec.output
        } else {
            spec.hidden
        };
        layers.push(DenseLayer::new(
            Matrix::from_vec(fan_out, fan_in, data)?,
            vec![0.0; fan_out],
            activation,
        )?);
    }
    Network::from_layers(layers)
}

pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leaky_relu_branches() {
        assert_eq!(leaky_relu(2.0, 0.01), 2.0);
        assert!((leaky_relu(-3.0, 0.01) + 0.03).abs() < 1e-15);
        assert_eq!(leaky_relu_grad(-1.0, 0.01), 0.01);
        assert_eq!(leaky_relu_grad(0.0, 0.01), 0.01);
        assert_eq!(leaky_relu_grad(0.5, 0.01), 1.0);
    }

    #[test]
    fn slope_outside_unit_interval_is_rejected() {
        assert!(Activation::leaky(0.0).is_err());
        assert!(Activation::leaky(1.0).is_err());
        assert!(Activation::leaky(0.2).is_ok());
    }

    #[test]
    fn init_shapes_and_determinism() {
        let spec = ActivationSpec::leaky_hidden(DEFAULT_SLOPE).unwrap();
        let net = init_network(&[4, 3], spec, 7).unwrap();
        assert_eq!(net.layers().len(), 1);
        assert_eq!(net.layers()[0].weight().shape(), (3, 4));
        assert_eq!(net.layers()[0].bias(), &[0.0; 3]);
        assert_eq!(net, init_network(&[4, 3], spec, 7).unwrap());
        assert_ne!(net, init_network(&[4, 3], spec, 8).unwrap());
    }

    #[test]
    fn init_rejects_degenerate_dims() {
        let spec = ActivationSpec::linear();
        assert!(init_network(&[4, 0, 2], spec, 0).is_err());
        assert!(init_network(&[4], spec, 0).is_err());
    }

    #[test]
    fn wide_layer_respects_glorot_bound() {
        // √(6/1024) = 0.0765465...
        let bound = (6.0f64 / 1024.0).sqrt();
        assert!((bound - 0.07655).abs() < 5e-6);
        let net = init_network(&[512, 512], ActivationSpec::linear(), 3).unwrap();
        assert!(net.layers()[0].weight().max_abs() <= bound);
    }

    #[test]
    fn zero_network_outputs_zero() {
        let spec = ActivationSpec::leaky_hidden(0.1).unwrap();
        let mut net = init_network(&[3, 5, 2], spec, 1).unwrap();
        let zeros = vec![0.0; net.num_params()];
        net.set_flat_params(&zeros).unwrap();
        let x = Matrix::from_fn(3, 4, |r, c| (r + c) as f64 - 2.5);
        assert_eq!(net.predict(&x).unwrap(), Matrix::zeros(2, 4));
    }

    #[test]
    fn identity_layer_is_identity_map() {
        let layer = DenseLayer::new(Matrix::identity(3), vec![0.0; 3], Activation::Linear).unwrap();
        let net = Network::from_layers(vec![layer]).unwrap();
        let x = Matrix::from_fn(3, 5, |r, c| (r as f64 - c as f64) * 0.7);
        assert_eq!(net.predict(&x).unwrap(), x);
    }

    #[test]
    fn forward_rejects_wrong_input_rows() {
        let net = init_network(&[3, 2], ActivationSpec::linear(), 0).unwrap();
        assert!(net.forward(&Matrix::zeros(4, 1)).is_err());
    }

    #[test]
    fn chain_mismatch_is_rejected() {
        let a = DenseLayer::new(Matrix::zeros(3, 2), vec![0.0; 3], Activation::Linear).unwrap();
        let b = DenseLayer::new(Matrix::zeros(1, 4), vec![0.0; 1], Activation::Linear).unwrap();
        assert!(Network::from_layers(vec![a, b]).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let spec = ActivationSpec::leaky_hidden(0.01).unwrap();
        let net = init_network(&[3, 4, 2], spec, 5).unwrap();
        let x = Matrix::from_fn(3, 6, |r, c| ((r * 6 + c) as f64).cos());
        let (_, cache) = net.forward(&x).unwrap();
        let (g, gin) = net.backward(&cache, &Matrix::zeros(2, 6)).unwrap();
        assert!(g.flatten().iter().all(|&v| v == 0.0));
        assert_eq!(gin, Matrix::zeros(3, 6));
    }

    #[test]
    fn sum_of_linear_outputs_has_outer_product_gradient() {
        // L = Σ_{r,i} (W x_i + b)_r  ⇒  ∂L/∂W[r][c] = Σ_i x_i[c],  ∂L/∂b[r] = n
        let net = init_network(&[3, 2], ActivationSpec::linear(), 11).unwrap();
        let x = Matrix::from_fn(3, 4, |r, c| (r as f64 + 1.0) * (c as f64 - 1.5));
        let (_, cache) = net.forward(&x).unwrap();
        let (g, gin) = net.backward(&cache, &Matrix::filled(2, 4, 1.0)).unwrap();
        let xsum = x.row_sums();
        for r in 0..2 {
            for (c, &sum) in xsum.iter().enumerate() {
                assert!((g.layers[0].weight.get(r, c) - sum).abs() < 1e-12);
            }
            assert_eq!(g.layers[0].bias[r], 4.0);
        }
        // ∂L/∂x_i[c] = Σ_r W[r][c]
        let w = net.layers()[0].weight();
        for c in 0..3 {
            let col: f64 = (0..2).map(|r| w.get(r, c)).sum();
            for i in 0..4 {
                assert!((gin.get(c, i) - col).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn backward_rejects_mismatched_grad() {
        let net = init_network(&[3, 2], ActivationSpec::linear(), 0).unwrap();
        let (_, cache) = net.forward(&Matrix::zeros(3, 4)).unwrap();
        assert!(net.backward(&cache, &Matrix::zeros(2, 5)).is_err());
    }
}
