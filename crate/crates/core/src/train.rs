//! The training loop: shuffled mini-batches of view pairs, both objectives,
//! Adam updates, periodic checkpoints and a JSON run report.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use vtcc_tensor::{Adam, NormMode, Tensor};

use crate::augment::view_pair;
use crate::checkpoint::Checkpoint;
use crate::config::TrainConfig;
use crate::data::Dataset;
use crate::error::{Result, VtccError};
use crate::eval::{embed_images, model_images, predict, write_assignments};
use crate::image::Image;
use crate::loss::{cluster_loss, instance_loss, total_loss};
use crate::metrics::MetricsReport;
use crate::model::Vtcc;
use crate::nn::named_params;
use crate::rng::SeededRng;
use crate::state::{capture, read_meta, restore_adam, restore_model, TrainMeta};

/// Tag for the per-epoch shuffle stream.
const SHUFFLE_STREAM: u64 = 0x5F1E;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: usize,
    pub instance: f64,
    /// Cluster objective including the entropy bonus.
    pub cluster: f64,
    pub cluster_contrastive: f64,
    pub entropy_a: f64,
    pub entropy_b: f64,
    pub total: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub instance: f64,
    pub cluster: f64,
    pub total: f64,
    pub entropy: f64,
    pub grad_norm: f64,
    pub seconds: f64,
    pub metrics: Option<MetricsReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: String,
    pub epochs: Vec<EpochRecord>,
    pub steps: Vec<StepRecord>,
    pub wall_clock_seconds: f64,
    pub final_metrics: Option<MetricsReport>,
    /// Soft-assignment mass entropy over the training set after the run.
    pub final_mass_entropy: Option<f64>,
    pub final_cluster_sizes: Vec<usize>,
    pub final_assignments: Option<PathBuf>,
}

impl RunReport {
    pub fn losses(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.total).collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| VtccError::Contract(e.to_string()))?;
        fs::write(path, json).map_err(|e| VtccError::io(path, e))
    }
}

#[derive(Debug, Clone, Default)]
pub struct FitOptions {
    /// Stop after this many optimizer steps in total.
    pub max_steps: Option<usize>,
    /// Write checkpoints, assignments and `report.json` under `cfg.out`.
    pub write_outputs: bool,
    /// Compute final metrics/assignments over the training set.
    pub final_eval: bool,
}

pub struct Trainer {
    pub cfg: TrainConfig,
    pub model: Vtcc<f32>,
    pub adam: Adam<f32>,
    /// Completed epochs.
    pub epoch: usize,
    /// Completed optimizer steps.
    pub step: usize,
}

fn shuffle_rng(seed: u64, epoch: usize) -> SeededRng {
    SeededRng::derive(seed, &[SHUFFLE_STREAM, epoch as u64])
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut model = Vtcc::new(&cfg.model, cfg.seed)?;
        let adam = Adam::new(cfg.optim, &model.parameter_sizes())?;
        Ok(Trainer {
            cfg,
            model,
            adam,
            epoch: 0,
            step: 0,
        })
    }

    /// Restores a checkpoint written at an epoch boundary. The stored config
    /// must match `cfg` except for file locations and the epoch budget.
    pub fn resume(cfg: TrainConfig, ckpt: &Checkpoint) -> Result<Self> {
        let stored = TrainConfig::parse(&ckpt.config)?;
        let mut a = stored.clone();
        let mut b = cfg.clone();
        a.epochs = 0;
        b.epochs = 0;
        if a.to_portable_text() != b.to_portable_text() {
            return Err(VtccError::Config("checkpoint was written with a different configuration".into()));
        }
        let mut trainer = Trainer::new(cfg)?;
        let meta = read_meta(ckpt)?;
        restore_model(ckpt, &mut trainer.model)?;
        restore_adam(ckpt, &mut trainer.model, &mut trainer.adam, &meta)?;
        trainer.epoch = meta.epoch;
        trainer.step = meta.step;
        Ok(trainer)
    }

    pub fn checkpoint(&mut self) -> Result<Checkpoint> {
        let meta = TrainMeta::new(self.epoch, self.step, self.adam.step_count, shuffle_rng(self.cfg.seed, self.epoch).state());
        capture(&self.cfg, &mut self.model, Some(&self.adam), &meta)
    }

    pub fn batches_per_epoch(&self, n: usize) -> usize {
        n / self.cfg.batch_size
    }

    /// Sample order for `epoch`; the trailing partial batch is dropped.
    pub fn epoch_order(&self, n: usize, epoch: usize) -> Vec<usize> {
        let mut order = shuffle_rng(self.cfg.seed, epoch).permutation(n);
        order.truncate(self.batches_per_epoch(n) * self.cfg.batch_size);
        order
    }

    /// Builds the two `[B, C, side, side]` view tensors for one batch.
    pub fn view_batch(&self, images: &[Image], indices: &[usize], epoch: usize) -> Result<(Tensor<f32>, Tensor<f32>)> {
        let m = &self.cfg.model;
        let shape = [indices.len(), m.in_channels, m.image_side, m.image_side];
        let (aug, seed) = (&self.cfg.aug, self.cfg.seed);
        let views: Vec<(Vec<f32>, Vec<f32>)> = indices
            .par_iter()
            .map(|&i| view_pair(&images[i], aug, seed, epoch as u64, i as u64))
            .collect();
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for (va, vb) in views {
            a.extend(va);
            b.extend(vb);
        }
        Ok((Tensor::new(a, &shape)?, Tensor::new(b, &shape)?))
    }

    /// One optimizer step on a pair of view batches.
    pub fn step_on(&mut self, xa: &Tensor<f32>, xb: &Tensor<f32>) -> Result<StepRecord> {
        let objective = self.cfg.objective;
        let out_a = self.model.forward(xa, NormMode::Train)?;
        let out_b = self.model.forward(xb, NormMode::Train)?;
        let zero = Tensor::scalar(0.0f32);
        let li = if objective.uses_instance() {
            instance_loss(&out_a.z, &out_b.z, &self.cfg.loss)?
        } else {
            zero.clone()
        };
        let (lc, parts) = if objective.uses_cluster() {
            let parts = cluster_loss(&out_a.y, &out_b.y, &self.cfg.loss)?;
            let values = [&parts.contrastive, &parts.entropy_a, &parts.entropy_b].map(|t| t.item() as f64);
            (parts.total, values)
        } else {
            (zero, [0.0; 3])
        };
        let total = total_loss(&li, &lc)?;
        total.backward()?;
        let mut params: Vec<&mut Tensor<f32>> = named_params(&mut self.model).into_iter().map(|(_, p)| p).collect();
        let grad_sq: f64 = params
            .iter()
            .filter_map(|p| p.grad())
            .flat_map(|g| g.into_iter().map(|v| (v as f64) * (v as f64)))
            .sum();
        let grad_norm = grad_sq.sqrt();
        if !grad_norm.is_finite() {
            return Err(VtccError::NumericGuard(format!("gradient norm is {grad_norm}")));
        }
        self.adam.step(&mut params)?;
        self.step += 1;
        Ok(StepRecord {
            epoch: self.epoch,
            step: self.step,
            instance: li.item() as f64,
            cluster: lc.item() as f64,
            cluster_contrastive: parts[0],
            entropy_a: parts[1],
            entropy_b: parts[2],
            total: total.item() as f64,
            grad_norm,
        })
    }

    /// Trains until `cfg.epochs` epochs are complete (or `max_steps`).
    pub fn fit(&mut self, data: &Dataset, opts: &FitOptions, mut on_epoch: impl FnMut(&EpochRecord)) -> Result<RunReport> {
        let started = Instant::now();
        let images = model_images(data, self.cfg.model.in_channels)?;
        if images.len() < self.cfg.batch_size {
            return Err(VtccError::Config(format!(
                "dataset has {} samples, fewer than the batch size {}",
                images.len(),
                self.cfg.batch_size
            )));
        }
        if opts.write_outputs {
            fs::create_dir_all(&self.cfg.out).map_err(|e| VtccError::io(&self.cfg.out, e))?;
        }
        let mut report = RunReport {
            config: self.cfg.to_text(),
            epochs: Vec::new(),
            steps: Vec::new(),
            wall_clock_seconds: 0.0,
            final_metrics: None,
            final_mass_entropy: None,
            final_cluster_sizes: Vec::new(),
            final_assignments: None,
        };
        let bs = self.cfg.batch_size;
        'epochs: while self.epoch < self.cfg.epochs {
            let epoch_start = Instant::now();
            let order = self.epoch_order(images.len(), self.epoch);
            let mut records = Vec::new();
            for batch in order.chunks(bs) {
                if opts.max_steps.is_some_and(|m| self.step >= m) {
                    report.steps.extend(records);
                    break 'epochs;
                }
                let (xa, xb) = self.view_batch(&images, batch, self.epoch)?;
                let record = match self.step_on(&xa, &xb) {
                    Ok(r) => r,
                    Err(e @ (VtccError::NonFiniteLoss { .. } | VtccError::NumericGuard(_))) => {
                        return Err(self.abort(opts, &report, e));
                    }
                    Err(e) => return Err(e),
                };
                records.push(record);
            }
            let complete = records.len() == order.len() / bs;
            report.steps.extend(records.iter().cloned());
            if !complete {
                break;
            }
            self.epoch += 1;
            let mean = |f: fn(&StepRecord) -> f64| records.iter().map(f).sum::<f64>() / records.len() as f64;
            let mut rec = EpochRecord {
                epoch: self.epoch,
                instance: mean(|r| r.instance),
                cluster: mean(|r| r.cluster),
                total: mean(|r| r.total),
                entropy: mean(|r| 0.5 * (r.entropy_a + r.entropy_b)),
                grad_norm: mean(|r| r.grad_norm),
                seconds: epoch_start.elapsed().as_secs_f64(),
                metrics: None,
            };
            if self.cfg.eval_every > 0 && self.epoch.is_multiple_of(self.cfg.eval_every) && data.has_labels() {
                let emb = embed_images(&mut self.model, &images, &self.cfg.aug)?;
                let pred = predict(&emb, self.cfg.objective, self.cfg.seed)?;
                rec.metrics = Some(MetricsReport::compute(&pred, &data.label_vec()?, emb.clusters)?);
            }
            on_epoch(&rec);
            report.epochs.push(rec);
            if opts.write_outputs && self.cfg.checkpoint_every > 0 && self.epoch.is_multiple_of(self.cfg.checkpoint_every) {
                self.checkpoint()?.save(&self.cfg.out.join(format!("epoch_{:04}.ckpt", self.epoch)))?;
            }
        }
        if opts.final_eval || opts.write_outputs {
            let emb = embed_images(&mut self.model, &images, &self.cfg.aug)?;
            let pred = predict(&emb, self.cfg.objective, self.cfg.seed)?;
            report.final_mass_entropy = Some(emb.mass_entropy().1);
            let mut sizes = vec![0; emb.clusters];
            pred.iter().for_each(|&p| sizes[p] += 1);
            report.final_cluster_sizes = sizes;
            if data.has_labels() {
                report.final_metrics = Some(MetricsReport::compute(&pred, &data.label_vec()?, emb.clusters)?);
            }
            if opts.write_outputs {
                let path = self.cfg.out.join("assignments.tsv");
                write_assignments(&pred, Some(data.labels()), &path)?;
                report.final_assignments = Some(path);
            }
        }
        report.wall_clock_seconds = started.elapsed().as_secs_f64();
        if opts.write_outputs {
            self.checkpoint()?.save(&self.cfg.out.join("final.ckpt"))?;
            report.write(&self.cfg.out.join("report.json"))?;
        }
        Ok(report)
    }

    /// Saves the pre-step state and diagnostics, then reports divergence.
    fn abort(&mut self, opts: &FitOptions, report: &RunReport, cause: VtccError) -> VtccError {
        let detail = cause.to_string();
        if opts.write_outputs {
            let last = report.steps.last();
            let diagnostics = serde_json::json!({
                "cause": detail,
                "epoch": self.epoch,
                "step": self.step,
                "last_finite_step": last,
            });
            let _ = fs::write(self.cfg.out.join("diagnostics.json"), diagnostics.to_string());
            // parameters are untouched by the failed step, so this is the last good state
            if let Ok(ckpt) = self.checkpoint() {
                let _ = ckpt.save(&self.cfg.out.join("last_good.ckpt"));
            }
        }
        VtccError::Diverged {
            epoch: self.epoch,
            step: self.step,
            detail,
        }
    }
}
