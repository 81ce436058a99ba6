//! Run configuration and its `key=value` text form.
//!
//! ```text
//! # comments start with '#'
//! model.embed_dim = 64
//! loss.tau_instance = 0.5
//! aug.blur_prob = 1.0, 0.1
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use vtcc_tensor::AdamConfig;

use crate::augment::AugmentationSpec;
use crate::backbone::{EncoderConfig, PosEncodingKind, Pool, StemKind};
use crate::data::DatasetKind;
use crate::error::{Result, VtccError};
use crate::loss::{LossConfig, Objective};
use crate::model::ModelConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub objective: Objective,
    pub optim: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Save `epoch_XXXX.ckpt` every this many epochs; `0` disables.
    pub checkpoint_every: usize,
    /// Evaluate on labeled data every this many epochs; `0` disables.
    pub eval_every: usize,
    pub aug: AugmentationSpec,
    pub data_path: Option<PathBuf>,
    pub data_kind: DatasetKind,
    pub out: PathBuf,
}

impl TrainConfig {
    /// CPU-scale profile for 32x32 inputs.
    pub fn desk() -> Self {
        let model = ModelConfig::desk();
        TrainConfig {
            aug: AugmentationSpec {
                output_side: model.image_side,
                ..Default::default()
            },
            model,
            loss: LossConfig::default(),
            objective: Objective::Both,
            optim: AdamConfig::default(),
            batch_size: 64,
            epochs: 200,
            seed: 0,
            checkpoint_every: 0,
            eval_every: 0,
            data_path: None,
            data_kind: DatasetKind::BinaryRecords,
            out: PathBuf::from("runs/desk"),
        }
    }

    /// ViT-Small, 224x224 inputs, batch 128, 1000 epochs.
    pub fn paper() -> Self {
        let model = ModelConfig::paper();
        TrainConfig {
            aug: AugmentationSpec {
                output_side: model.image_side,
                ..Default::default()
            },
            model,
            batch_size: 128,
            epochs: 1000,
            out: PathBuf::from("runs/paper"),
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.loss.validate()?;
        self.optim.validate()?;
        self.aug.validate()?;
        if self.aug.output_side != self.model.image_side {
            return Err(VtccError::Config("augmentation side must equal model.image_side".into()));
        }
        if self.batch_size < 2 {
            return Err(VtccError::Config("train.batch_size must be at least 2".into()));
        }
        if self.epochs == 0 {
            return Err(VtccError::Config("train.epochs must be at least 1".into()));
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::desk();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| VtccError::Config(format!("line {}: expected key=value", lineno + 1)))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| VtccError::Config(format!("line {}: {}", lineno + 1, strip_prefix(&e))))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| VtccError::io(path, e))?;
        Self::parse(&text)
    }

    /// Applies one `key=value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let m = &mut self.model;
        match key {
            "model.stem" => {
                m.stem.kind = match value {
                    "patchify" => StemKind::Patchify,
                    "convolutional" | "conv" => StemKind::Convolutional,
                    _ => return Err(bad(key, value)),
                }
            }
            "model.patch_size" => m.stem.patch_size = num(key, value)?,
            "model.conv_blocks" => m.stem.conv_blocks = num(key, value)?,
            "model.stem_channels" => m.stem.channels = list(key, value)?,
            "model.embed_dim" => m.encoder.embed_dim = num(key, value)?,
            "model.depth" => m.encoder.depth = num(key, value)?,
            "model.heads" => m.encoder.heads = num(key, value)?,
            "model.mlp_ratio" => m.encoder.mlp_ratio = num(key, value)?,
            "model.pos_encoding" => {
                m.encoder.pos_encoding = match value {
                    "learnable" | "learnable_once" => PosEncodingKind::Learnable,
                    "sinusoidal" | "sinusoidal_once" => PosEncodingKind::Sinusoidal,
                    "none" => PosEncodingKind::Disabled,
                    _ => return Err(bad(key, value)),
                }
            }
            "model.pool" => {
                m.encoder.pool = match value {
                    "mean" => Pool::Mean,
                    "cls_token" | "cls" => Pool::ClsToken,
                    _ => return Err(bad(key, value)),
                }
            }
            "model.preset" => {
                let (stem, side) = (m.stem.clone(), m.image_side);
                m.encoder = match value {
                    "tiny" => EncoderConfig::tiny(),
                    "small" => EncoderConfig::small(),
                    "base" => EncoderConfig::base(),
                    "desk" => EncoderConfig::desk(),
                    _ => return Err(bad(key, value)),
                };
                m.stem = stem;
                m.image_side = side;
            }
            "model.projector_hidden" => m.projector.hidden_dim = num(key, value)?,
            "model.instance_out" => m.projector.instance_out_dim = num(key, value)?,
            "model.clusters" => m.projector.clusters = num(key, value)?,
            "model.in_channels" => m.in_channels = num(key, value)?,
            "model.image_side" => {
                m.image_side = num(key, value)?;
                self.aug.output_side = m.image_side;
            }
            "loss.tau_instance" => self.loss.tau_instance = num(key, value)?,
            "loss.tau_cluster" => self.loss.tau_cluster = num(key, value)?,
            "loss.entropy_weight" => self.loss.entropy_weight = num(key, value)?,
            "loss.objective" => self.objective = value.parse()?,
            "optim.lr" => self.optim.lr = num(key, value)?,
            "optim.beta1" => self.optim.beta1 = num(key, value)?,
            "optim.beta2" => self.optim.beta2 = num(key, value)?,
            "optim.eps" => self.optim.eps = num(key, value)?,
            "train.batch_size" => self.batch_size = num(key, value)?,
            "train.epochs" => self.epochs = num(key, value)?,
            "train.seed" => self.seed = num(key, value)?,
            "train.checkpoint_every" => self.checkpoint_every = num(key, value)?,
            "train.eval_every" => self.eval_every = num(key, value)?,
            "aug.crop_scale" => self.aug.crop_scale = pair(key, value)?,
            "aug.crop_ratio" => self.aug.crop_ratio = pair(key, value)?,
            "aug.flip_prob" => self.aug.flip_prob = num(key, value)?,
            "aug.jitter" => self.aug.jitter = array(key, value)?,
            "aug.jitter_prob" => self.aug.jitter_prob = num(key, value)?,
            "aug.grayscale_prob" => self.aug.grayscale_prob = num(key, value)?,
            "aug.blur_prob" => self.aug.blur_prob = array(key, value)?,
            "aug.blur_sigma" => self.aug.blur_sigma = pair(key, value)?,
            "aug.solarize_prob" => self.aug.solarize_prob = array(key, value)?,
            "aug.norm_mean" => self.aug.norm_mean = list(key, value)?,
            "aug.norm_std" => self.aug.norm_std = list(key, value)?,
            "data.path" => self.data_path = (!value.is_empty()).then(|| PathBuf::from(value)),
            "data.kind" => self.data_kind = value.parse()?,
            "out" => self.out = PathBuf::from(value),
            _ => return Err(VtccError::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Everything that affects training, excluding file locations.
    pub fn to_portable_text(&self) -> String {
        let m = &self.model;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv(
            "model.stem",
            match m.stem.kind {
                StemKind::Patchify => "patchify",
                StemKind::Convolutional => "convolutional",
            }
            .into(),
        );
        kv("model.patch_size", m.stem.patch_size.to_string());
        kv("model.conv_blocks", m.stem.conv_blocks.to_string());
        kv("model.stem_channels", join(&m.stem.channels));
        kv("model.embed_dim", m.encoder.embed_dim.to_string());
        kv("model.depth", m.encoder.depth.to_string());
        kv("model.heads", m.encoder.heads.to_string());
        kv("model.mlp_ratio", m.encoder.mlp_ratio.to_string());
        kv(
            "model.pos_encoding",
            match m.encoder.pos_encoding {
                PosEncodingKind::Learnable => "learnable",
                PosEncodingKind::Sinusoidal => "sinusoidal",
                PosEncodingKind::Disabled => "none",
            }
            .into(),
        );
        kv(
            "model.pool",
            match m.encoder.pool {
                Pool::Mean => "mean",
                Pool::ClsToken => "cls_token",
            }
            .into(),
        );
        kv("model.projector_hidden", m.projector.hidden_dim.to_string());
        kv("model.instance_out", m.projector.instance_out_dim.to_string());
        kv("model.clusters", m.projector.clusters.to_string());
        kv("model.in_channels", m.in_channels.to_string());
        kv("model.image_side", m.image_side.to_string());
        kv("loss.tau_instance", self.loss.tau_instance.to_string());
        kv("loss.tau_cluster", self.loss.tau_cluster.to_string());
        kv("loss.entropy_weight", self.loss.entropy_weight.to_string());
        kv("loss.objective", self.objective.as_str().into());
        kv("optim.lr", self.optim.lr.to_string());
        kv("optim.beta1", self.optim.beta1.to_string());
        kv("optim.beta2", self.optim.beta2.to_string());
        kv("optim.eps", self.optim.eps.to_string());
        kv("train.batch_size", self.batch_size.to_string());
        kv("train.epochs", self.epochs.to_string());
        kv("train.seed", self.seed.to_string());
        kv("train.checkpoint_every", self.checkpoint_every.to_string());
        kv("train.eval_every", self.eval_every.to_string());
        let a = &self.aug;
        kv("aug.crop_scale", format!("{}, {}", a.crop_scale.0, a.crop_scale.1));
        kv("aug.crop_ratio", format!("{}, {}", a.crop_ratio.0, a.crop_ratio.1));
        kv("aug.flip_prob", a.flip_prob.to_string());
        kv("aug.jitter", join(&a.jitter));
        kv("aug.jitter_prob", a.jitter_prob.to_string());
        kv("aug.grayscale_prob", a.grayscale_prob.to_string());
        kv("aug.blur_prob", join(&a.blur_prob));
        kv("aug.blur_sigma", format!("{}, {}", a.blur_sigma.0, a.blur_sigma.1));
        kv("aug.solarize_prob", join(&a.solarize_prob));
        kv("aug.norm_mean", join(&a.norm_mean));
        kv("aug.norm_std", join(&a.norm_std));
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = self.to_portable_text();
        let path = self.data_path.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let kind = match self.data_kind {
            DatasetKind::ImageDir => "image_dir",
            DatasetKind::BinaryRecords => "binary_records",
            DatasetKind::Synthetic => "synthetic",
        };
        let _ = writeln!(s, "data.path = {path}\ndata.kind = {kind}\nout = {}", self.out.display());
        s
    }
}

fn strip_prefix(e: &VtccError) -> String {
    match e {
        VtccError::Config(msg) => msg.clone(),
        other => other.to_string(),
    }
}

fn bad(key: &str, value: &str) -> VtccError {
    VtccError::Config(format!("invalid value `{value}` for `{key}`"))
}

fn num<V: FromStr>(key: &str, value: &str) -> Result<V> {
    value.parse().map_err(|_| bad(key, value))
}

fn list<V: FromStr>(key: &str, value: &str) -> Result<Vec<V>> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| num(key, v.trim())).collect()
}

fn array<const N: usize>(key: &str, value: &str) -> Result<[f64; N]> {
    list::<f64>(key, value)?.try_into().map_err(|_| bad(key, value))
}

fn pair(key: &str, value: &str) -> Result<(f64, f64)> {
    let [a, b] = array::<2>(key, value)?;
    Ok((a, b))
}

fn join<V: ToString>(values: &[V]) -> String {
    values.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        for cfg in [TrainConfig::desk(), TrainConfig::paper()] {
            assert_eq!(TrainConfig::parse(&cfg.to_text()).unwrap(), cfg);
        }
        let mut cfg = TrainConfig::desk();
        cfg.set("model.stem_channels", "8, 24").unwrap();
        cfg.set("aug.blur_prob", "0.5,0.25").unwrap();
        cfg.set("data.path", "some/where.bin").unwrap();
        assert_eq!(TrainConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn comments_and_errors() {
        let cfg = TrainConfig::parse("# header\n\nmodel.clusters = 6  # inline\n").unwrap();
        assert_eq!(cfg.model.clusters(), 6);
        let err = TrainConfig::parse("model.clusters = 6\nmodel.nope = 1\n").unwrap_err();
        assert_eq!(err.to_string(), "config error: line 2: unknown key `model.nope`");
        assert!(TrainConfig::parse("train.epochs = many").is_err());
        assert!(TrainConfig::parse("just words").is_err());
    }

    #[test]
    fn portable_text_ignores_locations() {
        let mut a = TrainConfig::desk();
        let mut b = TrainConfig::desk();
        a.set("data.path", "a.bin").unwrap();
        b.set("out", "elsewhere").unwrap();
        assert_eq!(a.to_portable_text(), b.to_portable_text());
        assert_ne!(a.to_text(), b.to_text());
    }

    #[test]
    fn validation() {
        TrainConfig::desk().validate().unwrap();
        TrainConfig::paper().validate().unwrap();
        let mut cfg = TrainConfig::desk();
        cfg.batch_size = 1;
        assert!(cfg.validate().is_err());
        let mut cfg = TrainConfig::desk();
        cfg.set("model.heads", "5").unwrap();
        assert!(cfg.validate().is_err());
        let mut cfg = TrainConfig::desk();
        cfg.set("model.image_side", "30").unwrap();
        assert!(cfg.validate().is_err());
    }
}
