use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Adam first-order optimizer with bias-corrected moment estimates.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
    step: u64,
    first_moment: Vec<Tensor<T>>,
    second_moment: Vec<Tensor<T>>,
}

impl<T: Scalar> Adam<T> {
    /// Fresh state for parameters with the given shapes (β1=0.9, β2=0.999, ε=1e-8).
    pub fn new(learning_rate: T, shapes: &[Vec<usize>]) -> Self {
        Self {
            learning_rate,
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            epsilon: T::of(1e-8),
            step: 0,
            first_moment: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            second_moment: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update in place. `names` label parameters in diagnostics.
    ///
    /// Every gradient is checked before any parameter moves, so a rejected
    /// step leaves both parameters and state untouched.
    pub fn step(&mut self, params: &mut [Tensor<T>], grads: &[Tensor<T>], names: &[String]) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(Error::usage(format!(
                "optimizer tracks {} parameters, got {} values and {} gradients",
                self.first_moment.len(),
                params.len(),
                grads.len()
            )));
        }
        for (k, ((p, g), m)) in params.iter().zip(grads).zip(&self.first_moment).enumerate() {
            if p.shape() != m.shape() || g.shape() != m.shape() {
                return Err(Error::shape("optimizer-step", m.shape(), g.shape()));
            }
            if !g.is_finite() {
                let name = names.get(k).map(String::as_str).unwrap_or("?");
                return Err(Error::Numeric(format!(
                    "non-finite gradient for parameter `{name}` at step {}",
                    self.step + 1
                )));
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let c1 = T::one() - self.beta1.powi(t);
        let c2 = T::one() - self.beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first_moment.iter_mut().zip(self.second_moment.iter_mut()))
        {
            for (((pv, &gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mv = self.beta1 * *mv + (T::one() - self.beta1) * gv;
                *vv = self.beta2 * *vv + (T::one() - self.beta2) * gv * gv;
                let m_hat = *mv / c1;
                let v_hat = *vv / c2;
                *pv = *pv - self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}
