//! Latent alignment loss `Φ`: squared Frobenius distance between the two
//! latent views, with the whitening constraints `CxCxᵀ = CyCyᵀ = I` turned
//! into quadratic penalties weighted by `λ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Matrix;

/// Paired latent codes for one batch, both `l × n`.
#[derive(Debug, Clone, Copy)]
pub struct LatentBatch<'a> {
    cx: &'a Matrix,
    cy: &'a Matrix,
}

impl<'a> LatentBatch<'a> {
    /// `cx = Fx(X)` and `cy = Fe(Y)` on the same batch.
    pub fn new(cx: &'a Matrix, cy: &'a Matrix) -> Result<Self> {
        if cx.shape() != cy.shape() {
            return Err(Error::shape(
                "LatentBatch::new",
                format!("{}x{}", cx.rows(), cx.cols()),
                format!("{}x{}", cy.rows(), cy.cols()),
            ));
        }
        if cx.rows() == 0 || cx.cols() == 0 {
            return Err(Error::invalid("latent batch must be at least 1x1"));
        }
        Ok(LatentBatch { cx, cy })
    }

    pub fn cx(&self) -> &Matrix {
        self.cx
    }

    pub fn cy(&self) -> &Matrix {
        self.cy
    }
}

/// How the Gram matrices in the whitening penalty are scaled.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Whitening {
    /// `C·Cᵀ − I`, unnormalized.
    #[default]
    Sum,
    /// `C·Cᵀ/n − I`, which makes the penalty independent of batch size.
    Mean,
}

/// The residuals `C1 = cx − cy`, `C2 = cx·cxᵀ − I`, `C3 = cy·cyᵀ − I`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPenaltyTerms {
    pub c1: Matrix,
    pub c2: Matrix,
    pub c3: Matrix,
    pub lambda: f64,
}

impl LatentPenaltyTerms {
    pub fn compute(batch: &LatentBatch<'_>, lambda: f64, whitening: Whitening) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be >= 0, got {lambda}")));
        }
        let inv = gram_scale(batch, whitening);
        let l = batch.cx.rows();
        let eye = Matrix::identity(l);
        let c1 = batch.cx.sub(batch.cy)?;
        let c2 = batch.cx.matmul_t(batch.cx)?.scale(inv).sub(&eye)?;
        let c3 = batch.cy.matmul_t(batch.cy)?.scale(inv).sub(&eye)?;
        Ok(LatentPenaltyTerms { c1, c2, c3, lambda })
    }

    /// `Tr(C1ᵀC1) + λ·(Tr(C2ᵀC2) + Tr(C3ᵀC3))`.
    pub fn value(&self) -> f64 {
        self.c1.frobenius_sq() + self.lambda * (self.c2.frobenius_sq() + self.c3.frobenius_sq())
    }
}

fn gram_scale(batch: &LatentBatch<'_>, whitening: Whitening) -> f64 {
    match whitening {
        Whitening::Sum => 1.0,
        Whitening::Mean => 1.0 / batch.cx.cols() as f64,
    }
}

/// `Φ` with its penalty weight and Gram scaling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentPenalty {
    pub lambda: f64,
    pub whitening: Whitening,
}

impl LatentPenalty {
    pub fn new(lambda: f64) -> Self {
        LatentPenalty {
            lambda,
            whitening: Whitening::Sum,
        }
    }

    pub fn loss(&self, batch: &LatentBatch<'_>) -> Result<f64> {
        Ok(LatentPenaltyTerms::compute(batch, self.lambda, self.whitening)?.value())
    }

    /// `(∂Φ/∂cx, ∂Φ/∂cy)`:
    ///
    /// ```text
    /// ∂Φ/∂cx =  2·C1 + 4λ·s·C2·cx
    /// ∂Φ/∂cy = −2·C1 + 4λ·s·C3·cy
    /// ```
    ///
    /// with `s = 1` (or `1/n` under [`Whitening::Mean`]). `C2` and `C3` are
    /// symmetric, so left-multiplying the `l × n` codes is the only
    /// shape-consistent product.
    pub fn grads(&self, batch: &LatentBatch<'_>) -> Result<(Matrix, Matrix)> {
        let t = LatentPenaltyTerms::compute(batch, self.lambda, self.whitening)?;
        self.grads_from_terms(batch, &t)
    }

    /// Loss and gradients sharing one computation of the residuals.
    pub fn loss_and_grads(&self, batch: &LatentBatch<'_>) -> Result<(f64, Matrix, Matrix)> {
        let t = LatentPenaltyTerms::compute(batch, self.lambda, self.whitening)?;
        let (dx, dy) = self.grads_from_terms(batch, &t)?;
        Ok((t.value(), dx, dy))
    }

    fn grads_from_terms(
        &self,
        batch: &LatentBatch<'_>,
        t: &LatentPenaltyTerms,
    ) -> Result<(Matrix, Matrix)> {
        let k = 4.0 * self.lambda * gram_scale(batch, self.whitening);
        let mut dx = t.c1.scale(2.0);
        dx.add_scaled(&t.c2.matmul(batch.cx)?, k)?;
        let mut dy = t.c1.scale(-2.0);
        dy.add_scaled(&t.c3.matmul(batch.cy)?, k)?;
        Ok((dx, dy))
    }
}

pub fn latent_loss(batch: &LatentBatch<'_>, lambda: f64) -> Result<f64> {
    LatentPenalty::new(lambda).loss(batch)
}

pub fn latent_grads(batch: &LatentBatch<'_>, lambda: f64) -> Result<(Matrix, Matrix)> {
    LatentPenalty::new(lambda).grads(batch)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_codes_have_zero_loss_and_gradient() {
        let eye = Matrix::identity(3);
        let b = LatentBatch::new(&eye, &eye).unwrap();
        assert_eq!(latent_loss(&b, 0.5).unwrap(), 0.0);
        let (dx, dy) = latent_grads(&b, 0.5).unwrap();
        assert_eq!(dx.max_abs(), 0.0);
        assert_eq!(dy.max_abs(), 0.0);
    }

    #[test]
    fn identity_against_zero() {
        let eye = Matrix::identity(2);
        let zero = Matrix::zeros(2, 2);
        let b = LatentBatch::new(&eye, &zero).unwrap();
        assert_eq!(latent_loss(&b, 0.5).unwrap(), 3.0);
        let (dx, dy) = latent_grads(&b, 0.5).unwrap();
        assert_eq!(dx, Matrix::identity(2).scale(2.0));
        assert_eq!(dy, Matrix::identity(2).scale(-2.0));
    }

    #[test]
    fn shape_and_lambda_checks() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(3, 2);
        assert!(LatentBatch::new(&a, &b).is_err());
        let ok = LatentBatch::new(&a, &a).unwrap();
        assert!(latent_loss(&ok, -1.0).is_err());
        let empty = Matrix::zeros(0, 3);
        assert!(LatentBatch::new(&empty, &empty).is_err());
    }

    #[test]
    fn mean_whitening_accepts_scaled_orthonormal_codes() {
        // cx·cxᵀ = n·I ⇒ the Mean penalty vanishes.
        let n = 4.0f64;
        let cx = Matrix::identity(4).scale(n.sqrt());
        let b = LatentBatch::new(&cx, &cx).unwrap();
        let p = LatentPenalty {
            lambda: 0.5,
            whitening: Whitening::Mean,
        };
        assert!(p.loss(&b).unwrap().abs() < 1e-12);
        assert!(LatentPenalty::new(0.5).loss(&b).unwrap() > 1.0);
    }
}
