use crate::error::{Result, TensorError};
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !(self.lr > 0.0 && self.lr.is_finite()) || !unit(self.beta1) || !unit(self.beta2) || self.eps <= 0.0 {
            return Err(TensorError::Contract(format!("invalid Adam settings {self:?}")));
        }
        Ok(())
    }
}

/// Adam with bias correction and no weight decay.
///
/// Moment buffers are matched to parameters by position, so the caller must
/// pass parameters in the same order on every step.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T: Real> {
    pub config: AdamConfig,
    pub step_count: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig, sizes: &[usize]) -> Result<Self> {
        config.validate()?;
        Ok(Adam {
            config,
            step_count: 0,
            m: sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
        })
    }

    /// Applies one update to every parameter that holds a gradient.
    /// Parameters without a gradient keep their value and moments.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>]) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(TensorError::Contract(format!(
                "optimizer tracks {} parameters, got {}",
                self.m.len(),
                params.len()
            )));
        }
        for (i, p) in params.iter().enumerate() {
            if p.numel() != self.m[i].len() {
                return Err(TensorError::Contract(format!(
                    "parameter {i} has {} elements but its moment buffer has {}",
                    p.numel(),
                    self.m[i].len()
                )));
            }
        }
        self.step_count += 1;
        let t = i32::try_from(self.step_count).unwrap_or(i32::MAX);
        let c = &self.config;
        let (b1, b2, lr, eps) = (T::lit(c.beta1), T::lit(c.beta2), T::lit(c.lr), T::lit(c.eps));
        let bc1 = T::one() - b1.powi(t);
        let bc2 = T::one() - b2.powi(t);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let Some(g) = p.grad() else { continue };
            let mut next = p.to_vec();
            for (((theta, &g), m), v) in next.iter_mut().zip(&g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (T::one() - b1) * g;
                *v = b2 * *v + (T::one() - b2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *theta = *theta - lr * m_hat / (v_hat.sqrt() + eps);
            }
            **p = Tensor::parameter(next, p.shape())?;
        }
        Ok(())
    }
}
