//! Adam with bias correction.

use crate::error::{Error, Result};
use crate::mlp::MlpParams;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
    step: u64,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &MlpParams<T>) -> Self {
        let zeros: Vec<Tensor<T>> = params.tensors().map(|t| Tensor::zeros(t.rows(), t.cols())).collect();
        AdamState {
            first: zeros.clone(),
            second: zeros,
            step: 0,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update in place.
    pub fn step(&mut self, params: &mut MlpParams<T>, grads: &[Tensor<T>], lr: T) -> Result<()> {
        if grads.len() != self.first.len() {
            return Err(Error::Shape(format!(
                "{} gradients for {} parameter tensors",
                grads.len(),
                self.first.len()
            )));
        }
        for (i, (p, g)) in params.tensors().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(Error::Shape(format!("gradient {i} does not match its parameter")));
            }
            if !g.is_finite() {
                return Err(Error::NonFinite(format!("gradient {i}")));
            }
        }

        self.step += 1;
        let t = i32::try_from(self.step).unwrap_or(i32::MAX);
        let bc1 = T::one() - self.beta1.powi(t);
        let bc2 = T::one() - self.beta2.powi(t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);

        for (((p, g), m), v) in params
            .tensors_mut()
            .zip(grads)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            for (((pv, &gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mv = b1 * *mv + (T::one() - b1) * gv;
                *vv = b2 * *vv + (T::one() - b2) * gv * gv;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *pv = *pv - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Functional form: returns updated parameters and state.
pub fn adam_step<T: Scalar>(
    params: &MlpParams<T>,
    grads: &[Tensor<T>],
    state: &AdamState<T>,
    lr: T,
) -> Result<(MlpParams<T>, AdamState<T>)> {
    let mut p = params.clone();
    let mut s = state.clone();
    s.step(&mut p, grads, lr)?;
    Ok((p, s))
}
