//! Finite-difference verification of the whole model: the per-op suite from
//! the tensor crate plus the composite training objective on a micro model.

use std::cell::RefCell;

use vtcc_tensor::gradcheck::{check_gradients, op_suite, GradCheck, OP_TOLERANCE};
use vtcc_tensor::{NormMode, Tensor, TensorError};

use crate::backbone::{EncoderConfig, StemConfig};
use crate::error::{Result, VtccError};
use crate::heads::ProjectorConfig;
use crate::loss::{cluster_loss, instance_loss, total_loss, LossConfig};
use crate::model::{ModelConfig, Vtcc};
use crate::nn::named_params;
use crate::rng::SeededRng;

/// Tolerance for the end-to-end objective check.
pub const END_TO_END_TOLERANCE: f64 = 1e-4;

/// Batch size of the micro check.
pub const MICRO_BATCH: usize = 4;

/// Eight-wide, single-block model on 8x8 inputs.
pub fn micro_config() -> ModelConfig {
    ModelConfig {
        stem: StemConfig::convolutional(1),
        encoder: EncoderConfig {
            embed_dim: 8,
            depth: 1,
            heads: 2,
            ..EncoderConfig::desk()
        },
        projector: ProjectorConfig {
            hidden_dim: 0,
            instance_out_dim: 4,
            clusters: 3,
        },
        in_channels: 3,
        image_side: 8,
    }
}

/// Checks d(L_total)/d(theta) for every parameter of the micro model.
pub fn end_to_end(seed: u64) -> Result<GradCheck> {
    let cfg = micro_config();
    let model: Vtcc<f64> = Vtcc::new(&cfg, seed)?;
    let model = RefCell::new(model);
    let loss_cfg = LossConfig::default();

    let mut rng = SeededRng::derive(seed, &[0x6C4B]);
    let shape = [MICRO_BATCH, cfg.in_channels, cfg.image_side, cfg.image_side];
    let n: usize = shape.iter().product();
    let mut image = || Tensor::new((0..n).map(|_| rng.uniform_in(-1.0, 1.0)).collect(), &shape);
    let (xa, xb) = (image()?, image()?);

    let params: Vec<Tensor<f64>> = named_params(&mut *model.borrow_mut())
        .into_iter()
        .map(|(_, p)| p.clone())
        .collect();

    let report = check_gradients("end-to-end objective", &params, END_TO_END_TOLERANCE, |theta| {
        let mut m = model.borrow_mut();
        for ((_, slot), t) in named_params(&mut *m).into_iter().zip(theta) {
            *slot = t.clone();
        }
        let mut objective = || -> Result<Tensor<f64>> {
            let a = m.forward(&xa, NormMode::Train)?;
            let b = m.forward(&xb, NormMode::Train)?;
            let li = instance_loss(&a.z, &b.z, &loss_cfg)?;
            let lc = cluster_loss(&a.y, &b.y, &loss_cfg)?;
            total_loss(&li, &lc.total)
        };
        objective().map_err(|e| match e {
            VtccError::Tensor(t) => t,
            other => TensorError::Contract(other.to_string()),
        })
    })?;
    Ok(report)
}

/// Every op-level check followed by the end-to-end check.
pub fn full_suite(seed: u64) -> Result<Vec<GradCheck>> {
    let mut out = op_suite(seed)?;
    debug_assert!(out.iter().all(|c| c.tolerance == OP_TOLERANCE));
    out.push(end_to_end(seed)?);
    Ok(out)
}
