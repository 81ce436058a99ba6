//! The full twin-head clustering model.

use serde::{Deserialize, Serialize};
use vtcc_tensor::{NormMode, Real, Tensor};

use crate::backbone::{Backbone, EncoderConfig, StemConfig};
use crate::error::{Result, VtccError};
use crate::heads::{Projector, ProjectorConfig};
use crate::nn::{join, named_params, Module, Slot};
use crate::rng::SeededRng;

/// Tag for the parameter-initialization sub-stream.
const INIT_STREAM: u64 = 0x1A17;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub stem: StemConfig,
    pub encoder: EncoderConfig,
    pub projector: ProjectorConfig,
    pub in_channels: usize,
    pub image_side: usize,
}

impl ModelConfig {
    /// CPU-sized model for 32x32 inputs.
    pub fn desk() -> Self {
        ModelConfig {
            stem: StemConfig::convolutional(2),
            encoder: EncoderConfig::desk(),
            projector: ProjectorConfig {
                hidden_dim: 0,
                instance_out_dim: 32,
                clusters: 4,
            },
            in_channels: 3,
            image_side: 32,
        }
    }

    /// ViT-Small with a four-block convolutional stem on 224x224 inputs.
    pub fn paper() -> Self {
        ModelConfig {
            stem: StemConfig::convolutional(4),
            encoder: EncoderConfig::small(),
            projector: ProjectorConfig {
                hidden_dim: 0,
                instance_out_dim: 128,
                clusters: 10,
            },
            in_channels: 3,
            image_side: 224,
        }
    }

    pub fn clusters(&self) -> usize {
        self.projector.clusters
    }

    pub fn validate(&self) -> Result<()> {
        self.stem.validate()?;
        self.encoder.validate()?;
        self.projector.validate()?;
        if self.in_channels == 0 {
            return Err(VtccError::Config("in_channels must be positive".into()));
        }
        self.stem.grid_side(self.image_side).map_err(|e| VtccError::Config(e.to_string()))?;
        Ok(())
    }
}

/// Outputs of one view: representation `h`, instance embedding `z` and
/// cluster probabilities `y`.
pub struct ViewOutput<T: Real> {
    pub h: Tensor<T>,
    pub z: Tensor<T>,
    pub y: Tensor<T>,
}

/// Backbone `f` shared by both views, with projectors `g_I` and `g_C`.
pub struct Vtcc<T: Real> {
    pub config: ModelConfig,
    pub backbone: Backbone<T>,
    pub instance_head: Projector<T>,
    pub cluster_head: Projector<T>,
}

impl<T: Real> Vtcc<T> {
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = SeededRng::derive(seed, &[INIT_STREAM]);
        let d = config.encoder.embed_dim;
        let backbone = Backbone::new(&config.stem, &config.encoder, config.in_channels, config.image_side, &mut rng)?;
        let instance_head = Projector::instance(&config.projector, d, &mut rng)?;
        let cluster_head = Projector::cluster(&config.projector, d, &mut rng)?;
        Ok(Vtcc {
            config: config.clone(),
            backbone,
            instance_head,
            cluster_head,
        })
    }

    pub fn forward(&mut self, images: &Tensor<T>, mode: NormMode) -> Result<ViewOutput<T>> {
        let h = self.backbone.forward(images, mode)?;
        let z = self.instance_head.forward(&h, mode)?;
        let y = self.cluster_head.forward(&h, mode)?;
        Ok(ViewOutput { h, z, y })
    }

    /// Ids of every trainable tensor, in slot order.
    pub fn parameter_ids(&mut self) -> Vec<u64> {
        named_params(self).iter().map(|(_, p)| p.id()).collect()
    }

    pub fn parameter_sizes(&mut self) -> Vec<usize> {
        named_params(self).iter().map(|(_, p)| p.numel()).collect()
    }
}

impl<T: Real> Module<T> for Vtcc<T> {
    fn slots<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, Slot<'a, T>)>) {
        self.backbone.slots(&join(prefix, "backbone"), out);
        self.instance_head.slots(&join(prefix, "instance_head"), out);
        self.cluster_head.slots(&join(prefix, "cluster_head"), out);
    }
}
