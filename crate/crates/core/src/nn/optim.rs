use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Algorithm {
    Adam { beta1: f64, beta2: f64, eps: f64 },
    Sgd { momentum: f64 },
}

impl Default for Algorithm {
    fn default() -> Self {
        Algorithm::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Optimizer moments for a fixed list of parameter tensors.
///
/// Tensors are addressed positionally: the `k`-th slice passed to
/// [`OptimizerState::step`] always maps to the `k`-th accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    algorithm: Algorithm,
    learning_rate: f64,
    step_count: u64,
    first: Vec<Vec<f64>>,
    // unused (empty) for SGD
    second: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(algorithm: Algorithm, learning_rate: f64, sizes: &[usize]) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::invalid(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        let second = match algorithm {
            Algorithm::Adam { .. } => sizes.iter().map(|&n| vec![0.0; n]).collect(),
            Algorithm::Sgd { .. } => Vec::new(),
        };
        Ok(OptimizerState {
            algorithm,
            learning_rate,
            step_count: 0,
            first: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second,
        })
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one update to every tensor.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(Error::shape(
                "OptimizerState::step",
                format!("{} tensors", self.first.len()),
                format!("{} params / {} grads", params.len(), grads.len()),
            ));
        }
        for (k, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.first[k].len() || g.len() != self.first[k].len() {
                return Err(Error::shape(
                    "OptimizerState::step",
                    format!("tensor {k} of length {}", self.first[k].len()),
                    format!("param {} / grad {}", p.len(), g.len()),
                ));
            }
        }

        self.step_count += 1;
        let lr = self.learning_rate;
        match self.algorithm {
            Algorithm::Adam { beta1, beta2, eps } => {
                let t = self.step_count as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
                    let m = &mut self.first[k];
                    let v = &mut self.second[k];
                    for j in 0..p.len() {
                        m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                        v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                        let m_hat = m[j] / c1;
                        let v_hat = v[j] / c2;
                        p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
            Algorithm::Sgd { momentum } => {
                for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
                    let vel = &mut self.first[k];
                    for j in 0..p.len() {
                        vel[j] = momentum * vel[j] + g[j];
                        p[j] -= lr * vel[j];
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut st = OptimizerState::new(Algorithm::default(), 1e-3, &[3]).unwrap();
        let mut p = vec![1.0, -2.0, 0.5];
        let before = p.clone();
        st.step(&mut [&mut p], &[&[0.0; 3]]).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn first_adam_step_moves_by_learning_rate() {
        // m̂ = g, v̂ = g² ⇒ Δ = −lr·g/(|g|+ε)
        let lr = 1e-3;
        let mut st = OptimizerState::new(Algorithm::default(), lr, &[3]).unwrap();
        let g = [0.3, -2.0, 5e-4];
        let mut p = vec![0.0; 3];
        st.step(&mut [&mut p], &[&g]).unwrap();
        for (pj, gj) in p.iter().zip(g) {
            let expected = -lr * gj / (gj.abs() + 1e-8);
            assert!((pj - expected).abs() < 1e-15);
            assert!((pj + lr * gj.signum()).abs() < lr * 1e-4);
        }
    }

    #[test]
    fn sgd_momentum_accumulates() {
        let mut st = OptimizerState::new(Algorithm::Sgd { momentum: 0.5 }, 0.1, &[1]).unwrap();
        let mut p = vec![1.0];
        st.step(&mut [&mut p], &[&[1.0]]).unwrap();
        assert!((p[0] - 0.9).abs() < 1e-15);
        st.step(&mut [&mut p], &[&[1.0]]).unwrap();
        // velocity 1.5
        assert!((p[0] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn copied_state_is_deterministic() {
        let mut a = OptimizerState::new(Algorithm::default(), 1e-2, &[2, 1]).unwrap();
        let mut pa = (vec![0.1, 0.2], vec![0.3]);
        a.step(&mut [&mut pa.0, &mut pa.1], &[&[1.0, -1.0], &[0.5]])
            .unwrap();
        let mut b = a.clone();
        let mut pb = pa.clone();
        a.step(&mut [&mut pa.0, &mut pa.1], &[&[0.7, 0.1], &[-0.2]])
            .unwrap();
        b.step(&mut [&mut pb.0, &mut pb.1], &[&[0.7, 0.1], &[-0.2]])
            .unwrap();
        assert_eq!(pa, pb);
        assert_eq!(a, b);
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let mut st = OptimizerState::new(Algorithm::default(), 1e-3, &[2]).unwrap();
        let mut p = vec![0.0; 3];
        assert!(st.step(&mut [&mut p], &[&[0.0; 3]]).is_err());
        assert_eq!(st.step_count(), 0);
        assert!(OptimizerState::new(Algorithm::default(), 0.0, &[1]).is_err());
    }
}
