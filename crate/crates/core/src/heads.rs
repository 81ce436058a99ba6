//! The instance projector `g_I` and the cluster projector `g_C`.

use serde::{Deserialize, Serialize};
use vtcc_tensor::{NormMode, Real, Tensor};

use crate::error::{Result, VtccError};
use crate::nn::{join, BatchNorm, Linear, Module, Slot};
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectorConfig {
    /// Width of both hidden layers; `0` means "same as the representation".
    pub hidden_dim: usize,
    pub instance_out_dim: usize,
    /// Number of clusters `K`.
    pub clusters: usize,
}

impl Default for ProjectorConfig {
    fn default() -> Self {
        ProjectorConfig {
            hidden_dim: 0,
            instance_out_dim: 128,
            clusters: 10,
        }
    }
}

impl ProjectorConfig {
    pub fn hidden(&self, input_dim: usize) -> usize {
        if self.hidden_dim == 0 {
            input_dim
        } else {
            self.hidden_dim
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.clusters < 2 {
            return Err(VtccError::Config(format!("need at least 2 clusters, got {}", self.clusters)));
        }
        if self.instance_out_dim == 0 {
            return Err(VtccError::Config("instance_out_dim must be positive".into()));
        }
        Ok(())
    }
}

/// Three-layer MLP: `linear -> BN -> ReLU -> linear -> BN -> ReLU -> linear`,
/// optionally followed by a softmax over the output features.
pub struct Projector<T: Real> {
    pub fc1: Linear<T>,
    pub bn1: BatchNorm<T>,
    pub fc2: Linear<T>,
    pub bn2: BatchNorm<T>,
    pub fc3: Linear<T>,
    pub softmax: bool,
}

impl<T: Real> Projector<T> {
    pub fn new(input: usize, hidden: usize, output: usize, softmax: bool, rng: &mut SeededRng) -> Result<Self> {
        Ok(Projector {
            fc1: Linear::new(input, hidden, false, rng)?,
            bn1: BatchNorm::new(hidden),
            fc2: Linear::new(hidden, hidden, false, rng)?,
            bn2: BatchNorm::new(hidden),
            fc3: Linear::new(hidden, output, true, rng)?,
            softmax,
        })
    }

    pub fn instance(cfg: &ProjectorConfig, input: usize, rng: &mut SeededRng) -> Result<Self> {
        Self::new(input, cfg.hidden(input), cfg.instance_out_dim, false, rng)
    }

    pub fn cluster(cfg: &ProjectorConfig, input: usize, rng: &mut SeededRng) -> Result<Self> {
        Self::new(input, cfg.hidden(input), cfg.clusters, true, rng)
    }

    /// Pre-softmax output (identical to `forward` for the instance head).
    pub fn logits(&mut self, h: &Tensor<T>, mode: NormMode) -> Result<Tensor<T>> {
        let x = self.bn1.forward(&self.fc1.forward(h)?, mode)?.relu();
        let x = self.bn2.forward(&self.fc2.forward(&x)?, mode)?.relu();
        self.fc3.forward(&x)
    }

    pub fn forward(&mut self, h: &Tensor<T>, mode: NormMode) -> Result<Tensor<T>> {
        let out = self.logits(h, mode)?;
        if self.softmax {
            Ok(out.softmax(1)?)
        } else {
            Ok(out)
        }
    }
}

impl<T: Real> Module<T> for Projector<T> {
    fn slots<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, Slot<'a, T>)>) {
        self.fc1.slots(&join(prefix, "fc1"), out);
        self.bn1.slots(&join(prefix, "bn1"), out);
        self.fc2.slots(&join(prefix, "fc2"), out);
        self.bn2.slots(&join(prefix, "bn2"), out);
        self.fc3.slots(&join(prefix, "fc3"), out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(n: usize, d: usize, seed: u64) -> Tensor<f64> {
        let mut rng = SeededRng::new(seed);
        Tensor::new((0..n * d).map(|_| rng.normal()).collect(), &[n, d]).unwrap()
    }

    #[test]
    fn output_widths() {
        let mut rng = SeededRng::new(1);
        let cfg = ProjectorConfig {
            clusters: 4,
            ..Default::default()
        };
        let mut gi = Projector::<f64>::instance(&cfg, 16, &mut rng).unwrap();
        let mut gc = Projector::<f64>::cluster(&cfg, 16, &mut rng).unwrap();
        let h = batch(5, 16, 2);
        assert_eq!(gi.forward(&h, NormMode::Train).unwrap().shape(), &[5, 128]);
        let y = gc.forward(&h, NormMode::Train).unwrap();
        assert_eq!(y.shape(), &[5, 4]);
        for row in y.data().chunks(4) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let mut rng = SeededRng::new(1);
        let mut gi = Projector::<f64>::new(8, 8, 4, false, &mut rng).unwrap();
        for lin in [&mut gi.fc1, &mut gi.fc2, &mut gi.fc3] {
            lin.weight = Tensor::zeros(lin.weight.shape());
        }
        let z = gi.forward(&batch(3, 8, 0), NormMode::Train).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_final_layer_gives_uniform_clusters() {
        let mut rng = SeededRng::new(3);
        let mut gc = Projector::<f64>::new(8, 8, 4, true, &mut rng).unwrap();
        gc.fc3.weight = Tensor::zeros(&[8, 4]);
        let y = gc.forward(&batch(6, 8, 1), NormMode::Train).unwrap();
        assert!(y.data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn cluster_head_is_mlp_then_softmax() {
        let mut rng = SeededRng::new(4);
        let mut gc = Projector::<f64>::new(64, 64, 4, true, &mut rng).unwrap();
        let h = batch(8, 64, 5);
        let logits = gc.logits(&h, NormMode::Eval).unwrap();
        let y = gc.forward(&h, NormMode::Eval).unwrap();
        assert_eq!(logits.softmax(1).unwrap().data(), y.data());
    }
}
