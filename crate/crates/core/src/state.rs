//! Mapping between live training state and checkpoint records.

use std::path::Path;

use serde::{Deserialize, Serialize};
use vtcc_tensor::{Adam, Tensor};

use crate::checkpoint::Checkpoint;
use crate::config::TrainConfig;
use crate::error::{Result, VtccError};
use crate::model::Vtcc;
use crate::nn::{named_slots, Slot};
use crate::rng::{RngState, RNG_ALGORITHM};

const META_SECTION: &str = "meta";
const ADAM_M: &str = "adam.m.";
const ADAM_V: &str = "adam.v.";

/// Training progress stored next to the tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    /// Completed epochs.
    pub epoch: usize,
    /// Completed optimizer steps.
    pub step: usize,
    pub adam_steps: u64,
    pub rng_algorithm: String,
    /// Stream that the next epoch's shuffle will draw from.
    pub rng: RngState,
}

impl TrainMeta {
    pub fn new(epoch: usize, step: usize, adam_steps: u64, rng: RngState) -> Self {
        TrainMeta {
            epoch,
            step,
            adam_steps,
            rng_algorithm: RNG_ALGORITHM.to_string(),
            rng,
        }
    }
}

/// Serializes every parameter and buffer, plus optimizer moments if given.
pub fn capture(cfg: &TrainConfig, model: &mut Vtcc<f32>, adam: Option<&Adam<f32>>, meta: &TrainMeta) -> Result<Checkpoint> {
    let mut ckpt = Checkpoint::new(cfg.to_portable_text());
    let mut param_names = Vec::new();
    for (name, slot) in named_slots(model) {
        match slot {
            Slot::Param(p) => {
                ckpt.push_tensor(name.clone(), p.shape(), p.to_vec());
                param_names.push((name, p.shape().to_vec()));
            }
            Slot::Buffer(b) => {
                let n = b.len();
                ckpt.push_tensor(name, &[n], b.clone());
            }
        }
    }
    if let Some(adam) = adam {
        if adam.m.len() != param_names.len() {
            return Err(VtccError::Contract("optimizer does not match the model".into()));
        }
        for (i, (name, shape)) in param_names.iter().enumerate() {
            ckpt.push_tensor(format!("{ADAM_M}{name}"), shape, adam.m[i].clone());
            ckpt.push_tensor(format!("{ADAM_V}{name}"), shape, adam.v[i].clone());
        }
    }
    let meta = serde_json::to_vec(meta).map_err(|e| VtccError::Checkpoint(e.to_string()))?;
    ckpt.push_raw(META_SECTION, meta);
    Ok(ckpt)
}

/// Overwrites the model's parameters and buffers from `ckpt`.
pub fn restore_model(ckpt: &Checkpoint, model: &mut Vtcc<f32>) -> Result<()> {
    for (name, slot) in named_slots(model) {
        let t = ckpt.tensor(&name)?;
        match slot {
            Slot::Param(p) => {
                if t.shape != p.shape() {
                    return Err(VtccError::Checkpoint(format!(
                        "`{name}` has shape {:?}, model expects {:?}",
                        t.shape,
                        p.shape()
                    )));
                }
                *p = Tensor::parameter(t.data.clone(), &t.shape)?;
            }
            Slot::Buffer(b) => {
                if t.data.len() != b.len() {
                    return Err(VtccError::Checkpoint(format!("buffer `{name}` has the wrong length")));
                }
                b.copy_from_slice(&t.data);
            }
        }
    }
    Ok(())
}

pub fn restore_adam(ckpt: &Checkpoint, model: &mut Vtcc<f32>, adam: &mut Adam<f32>, meta: &TrainMeta) -> Result<()> {
    let names: Vec<String> = named_slots(model)
        .into_iter()
        .filter_map(|(n, s)| matches!(s, Slot::Param(_)).then_some(n))
        .collect();
    for (i, name) in names.iter().enumerate() {
        let m = ckpt.tensor(&format!("{ADAM_M}{name}"))?;
        let v = ckpt.tensor(&format!("{ADAM_V}{name}"))?;
        if m.data.len() != adam.m[i].len() || v.data.len() != adam.v[i].len() {
            return Err(VtccError::Checkpoint(format!("optimizer moments for `{name}` have the wrong size")));
        }
        adam.m[i].copy_from_slice(&m.data);
        adam.v[i].copy_from_slice(&v.data);
    }
    adam.step_count = meta.adam_steps;
    Ok(())
}

pub fn read_meta(ckpt: &Checkpoint) -> Result<TrainMeta> {
    serde_json::from_slice(ckpt.raw(META_SECTION)?).map_err(|e| VtccError::Checkpoint(format!("bad meta section: {e}")))
}

/// Rebuilds the model stored in a checkpoint file.
pub fn load_model(path: &Path) -> Result<(TrainConfig, Vtcc<f32>, Checkpoint)> {
    let ckpt = Checkpoint::load(path)?;
    let cfg = TrainConfig::parse(&ckpt.config)?;
    let mut model = Vtcc::new(&cfg.model, cfg.seed)?;
    restore_model(&ckpt, &mut model)?;
    Ok((cfg, model, ckpt))
}
