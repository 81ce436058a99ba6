//! Image encoder: stem, positional encoding, pre-norm Transformer blocks and
//! token pooling.

use serde::{Deserialize, Serialize};
use vtcc_tensor::{NormMode, Real, Tensor};

use crate::error::{Result, VtccError};
use crate::nn::{join, trunc_normal, BatchNorm, Conv2d, LayerNorm, Linear, Module, Slot};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StemKind {
    /// One `p x p` convolution with stride `p`.
    Patchify,
    /// Stride-2 `3 x 3` conv + batch norm + ReLU blocks, then a `1 x 1` conv.
    Convolutional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StemConfig {
    pub kind: StemKind,
    pub patch_size: usize,
    pub conv_blocks: usize,
    /// Output channels of each conv block; empty selects the default ramp.
    pub channels: Vec<usize>,
}

impl StemConfig {
    pub fn patchify(patch_size: usize) -> Self {
        StemConfig {
            kind: StemKind::Patchify,
            patch_size,
            conv_blocks: 0,
            channels: Vec::new(),
        }
    }

    pub fn convolutional(conv_blocks: usize) -> Self {
        StemConfig {
            kind: StemKind::Convolutional,
            patch_size: 1 << conv_blocks,
            conv_blocks,
            channels: Vec::new(),
        }
    }

    /// Channel widths of the conv blocks: the configured list, or a
    /// doubling ramp that ends at `embed_dim` (`[d/8, d/4, d/2, d]` for four
    /// blocks), floored at 8.
    pub fn channel_schedule(&self, embed_dim: usize) -> Vec<usize> {
        if !self.channels.is_empty() {
            return self.channels.clone();
        }
        let s = self.conv_blocks;
        (0..s).map(|i| (embed_dim >> (s - 1 - i).min(63)).max(8)).collect()
    }

    /// Side of the token grid for a square image of side `side`.
    pub fn grid_side(&self, side: usize) -> Result<usize> {
        let factor = match self.kind {
            StemKind::Patchify => self.patch_size,
            StemKind::Convolutional => 1usize.checked_shl(self.conv_blocks as u32).unwrap_or(0),
        };
        if factor == 0 || side == 0 || !side.is_multiple_of(factor) {
            return Err(VtccError::Tensor(vtcc_tensor::TensorError::Invalid {
                op: "stem",
                msg: format!("image side {side} is not divisible by the stem reduction {factor}"),
            }));
        }
        Ok(side / factor)
    }

    pub fn token_count(&self, side: usize) -> Result<usize> {
        let g = self.grid_side(side)?;
        Ok(g * g)
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            StemKind::Patchify if self.patch_size == 0 => Err(VtccError::Config("patch_size must be positive".into())),
            StemKind::Convolutional if self.conv_blocks == 0 => {
                Err(VtccError::Config("conv_blocks must be positive".into()))
            }
            StemKind::Convolutional if !self.channels.is_empty() && self.channels.len() != self.conv_blocks => {
                Err(VtccError::Config(format!(
                    "channel schedule {:?} needs {} entries",
                    self.channels, self.conv_blocks
                )))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PosEncodingKind {
    /// Trained table added once after the stem.
    Learnable,
    /// Fixed sine/cosine table added once after the stem.
    Sinusoidal,
    Disabled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pool {
    Mean,
    ClsToken,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub embed_dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub mlp_ratio: f64,
    pub pos_encoding: PosEncodingKind,
    pub pool: Pool,
}

impl EncoderConfig {
    fn preset(embed_dim: usize, depth: usize, heads: usize) -> Self {
        EncoderConfig {
            embed_dim,
            depth,
            heads,
            mlp_ratio: 4.0,
            pos_encoding: PosEncodingKind::Learnable,
            pool: Pool::Mean,
        }
    }

    pub fn tiny() -> Self {
        Self::preset(192, 4, 12)
    }

    pub fn small() -> Self {
        Self::preset(384, 8, 12)
    }

    pub fn base() -> Self {
        Self::preset(768, 12, 12)
    }

    pub fn desk() -> Self {
        Self::preset(64, 2, 4)
    }

    pub fn mlp_hidden(&self) -> usize {
        ((self.embed_dim as f64) * self.mlp_ratio).round().max(1.0) as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim < 2 || self.heads == 0 || !self.embed_dim.is_multiple_of(self.heads) {
            return Err(VtccError::Config(format!(
                "embed_dim {} must be at least 2 and divisible by heads {}",
                self.embed_dim, self.heads
            )));
        }
        if self.depth == 0 || !(self.mlp_ratio > 0.0) {
            return Err(VtccError::Config("depth and mlp_ratio must be positive".into()));
        }
        Ok(())
    }
}

/// Patch-embedding layer producing `[N, L, d]` tokens.
pub enum Stem<T: Real> {
    Patchify(Conv2d<T>),
    Convolutional {
        blocks: Vec<(Conv2d<T>, BatchNorm<T>)>,
        proj: Conv2d<T>,
    },
}

impl<T: Real> Stem<T> {
    pub fn new(cfg: &StemConfig, in_channels: usize, embed_dim: usize, rng: &mut SeededRng) -> Result<Self> {
        cfg.validate()?;
        Ok(match cfg.kind {
            StemKind::Patchify => {
                let p = cfg.patch_size;
                Stem::Patchify(Conv2d::new(in_channels, embed_dim, p, p, 0, true, rng)?)
            }
            StemKind::Convolutional => {
                let mut blocks = Vec::new();
                let mut c = in_channels;
                for width in cfg.channel_schedule(embed_dim) {
                    // batch norm follows, so the conv carries no bias
                    blocks.push((Conv2d::new(c, width, 3, 2, 1, false, rng)?, BatchNorm::new(width)));
                    c = width;
                }
                let proj = Conv2d::new(c, embed_dim, 1, 1, 0, true, rng)?;
                Stem::Convolutional { blocks, proj }
            }
        })
    }

    /// `[N, C, side, side]` images to `[N, L, d]` tokens in row-major grid order.
    pub fn forward(&mut self, images: &Tensor<T>, mode: NormMode) -> Result<Tensor<T>> {
        let fmap = match self {
            Stem::Patchify(conv) => conv.forward(images)?,
            Stem::Convolutional { blocks, proj } => {
                let mut x = images.clone();
                for (conv, bn) in blocks.iter_mut() {
                    x = bn.forward(&conv.forward(&x)?, mode)?.relu();
                }
                proj.forward(&x)?
            }
        };
        let s = fmap.shape();
        let (n, d, l) = (s[0], s[1], s[2] * s[3]);
        Ok(fmap.reshape(&[n, d, l])?.permute(&[0, 2, 1])?)
    }
}

impl<T: Real> Module<T> for Stem<T> {
    fn slots<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, Slot<'a, T>)>) {
        match self {
            Stem::Patchify(conv) => conv.slots(&join(prefix, "proj"), out),
            Stem::Convolutional { blocks, proj } => {
                for (i, (conv, bn)) in blocks.iter_mut().enumerate() {
                    conv.slots(&join(prefix, &format!("block{i}.conv")), out);
                    bn.slots(&join(prefix, &format!("block{i}.bn")), out);
                }
                proj.slots(&join(prefix, "proj"), out);
            }
        }
    }
}

/// Fixed table with `sin` at even and `cos` at odd feature indices.
pub fn sinusoidal_table(len: usize, dim: usize) -> Vec<f64> {
    let mut table = Vec::with_capacity(len * dim);
    for pos in 0..len {
        for i in 0..dim {
            let rate = 10000f64.powf((2 * (i / 2)) as f64 / dim as f64);
            let angle = pos as f64 / rate;
            table.push(if i % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    table
}

pub enum PositionalEncoding<T: Real> {
    Learnable(Tensor<T>),
    Sinusoidal(Tensor<T>),
    Disabled,
}

impl<T: Real> PositionalEncoding<T> {
    pub fn new(kind: PosEncodingKind, len: usize, dim: usize, rng: &mut SeededRng) -> Result<Self> {
        Ok(match kind {
            PosEncodingKind::Learnable => PositionalEncoding::Learnable(trunc_normal(&[len, dim], rng)?),
            PosEncodingKind::Sinusoidal => {
                let table = sinusoidal_table(len, dim).into_iter().map(T::lit).collect();
                PositionalEncoding::Sinusoidal(Tensor::new(table, &[len, dim])?)
            }
            PosEncodingKind::Disabled => PositionalEncoding::Disabled,
        })
    }

    pub fn table(&self) -> Option<&Tensor<T>> {
        match self {
            PositionalEncoding::Learnable(t) | PositionalEncoding::Sinusoidal(t) => Some(t),
            PositionalEncoding::Disabled => None,
        }
    }

    /// Adds the first `L` table rows to an `[N, L, d]` sequence.
    pub fn apply(&self, seq: &Tensor<T>) -> Result<Tensor<T>> {
        let Some(table) = self.table() else {
            return Ok(seq.clone());
        };
        let (l, len) = (seq.shape()[1], table.shape()[0]);
        if l > len || seq.shape()[2] != table.shape()[1] {
            return Err(VtccError::Tensor(vtcc_tensor::TensorError::Shape {
                op: "positional_encoding",
                lhs: seq.shape().to_vec(),
                rhs: table.shape().to_vec(),
            }));
        }
        let rows = if l == len { table.clone() } else { table.slice(0, 0, l)? };
        Ok(seq.add(&rows)?)
    }
}

impl<T: Real> Module<T> for PositionalEncoding<T> {
    fn slots<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, Slot<'a, T>)>) {
        if let PositionalEncoding::Learnable(t) = self {
            out.push((join(prefix, "table"), Slot::Param(t)));
        }
    }
}

pub struct Attention<T: Real> {
    pub qkv: Linear<T>,
    pub proj: Linear<T>,
    pub heads: usize,
}

impl<T: Real> Attention<T> {
    pub fn new(dim: usize, heads: usize, rng: &mut SeededRng) -> Result<Self> {
        if heads == 0 || !dim.is_multiple_of(heads) {
            return Err(VtccError::Config(format!("embed_dim {dim} is not divisible by {heads} heads")));
        }
        Ok(Attention {
            qkv: Linear::new(dim, 3 * dim, false, rng)?,
            proj: Linear::new(dim, dim, true, rng)?,
            heads,
        })
    }

    /// Per-head attention probabilities, `[N * H, L, L]`.
    pub fn weights(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.qkv_heads(x)?.3)
    }

    fn qkv_heads(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>, Tensor<T>)> {
        let (n, l, d) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let (h, dh) = (self.heads, d / self.heads);
        let qkv = self
            .qkv
            .forward(x)?
            .reshape(&[n, l, 3, h, dh])?
            .permute(&[2, 0, 3, 1, 4])?
            .reshape(&[3, n * h, l, dh])?;
        let pick = |i: usize| -> Result<Tensor<T>> { Ok(qkv.slice(0, i, i + 1)?.reshape(&[n * h, l, dh])?) };
        let (q, k, v) = (pick(0)?, pick(1)?, pick(2)?);
        let scale = T::lit(1.0 / (dh as f64).sqrt());
        let attn = q.bmm(&k, false, true)?.mul_scalar(scale).softmax(2)?;
        Ok((q, k, v, attn))
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, l, d) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let h = self.heads;
        let (_, _, v, attn) = self.qkv_heads(x)?;
        let mixed = attn
            .bmm(&v, false, false)?
            .reshape(&[n, h, l, d / h])?
            .permute(&[0, 2, 1, 3])?
            .reshape(&[n, l, d])?;
        self.proj.forward(&mixed)
    }
}

impl<T: Real> Module<T> for Attention<T> {
    fn slots<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, Slot<'a, T>)>) {
        self.qkv.slots(&join(prefix, "qkv"), out);
        self.proj.slots(&join(prefix, "proj"), out);
    }
}

pub struct Mlp<T: Real> {
    pub fc1: Linear<T>,
    pub fc2: Linear<T>,
}

impl<T: Real> Mlp<T> {
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.fc2.forward(&self.fc1.forward(x)?.gelu())
    }
}

impl<T: Real> Module<T> for Mlp<T> {
    fn slots<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, Slot<'a, T>)>) {
        self.fc1.slots(&join(prefix, "fc1"), out);
        self.fc2.slots(&join(prefix, "fc2"), out);
    }
}

/// `x + MHSA(LN(x))`, then `x + MLP(LN(x))`.
pub struct EncoderBlock<T: Real> {
    pub norm1: LayerNorm<T>,
    pub attn: Attention<T>,
    pub norm2: LayerNorm<T>,
    pub mlp: Mlp<T>,
}

impl<T: Real> EncoderBlock<T> {
    pub fn new(cfg: &EncoderConfig, rng: &mut SeededRng) -> Result<Self> {
        let d = cfg.embed_dim;
        Ok(EncoderBlock {
            norm1: LayerNorm::new(d),
            attn: Attention::new(d, cfg.heads, rng)?,
            norm2: LayerNorm::new(d),
            mlp: Mlp {
                fc1: Linear::new(d, cfg.mlp_hidden(), true, rng)?,
                fc2: Linear::new(cfg.mlp_hidden(), d, true, rng)?,
            },
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let x = x.add(&self.attn.forward(&self.norm1.forward(x)?)?)?;
        Ok(x.add(&self.mlp.forward(&self.norm2.forward(&x)?)?)?)
    }
}

impl<T: Real> Module<T> for EncoderBlock<T> {
    fn slots<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, Slot<'a, T>)>) {
        self.norm1.slots(&join(prefix, "norm1"), out);
        self.attn.slots(&join(prefix, "attn"), out);
        self.norm2.slots(&join(prefix, "norm2"), out);
        self.mlp.slots(&join(prefix, "mlp"), out);
    }
}

/// The feature extractor `f`: images to representations `h`, `[N, d]`.
pub struct Backbone<T: Real> {
    pub stem: Stem<T>,
    pub cls_token: Option<Tensor<T>>,
    pub pos: PositionalEncoding<T>,
    pub blocks: Vec<EncoderBlock<T>>,
    pub norm: LayerNorm<T>,
    pub pool: Pool,
    pub image_side: usize,
}

impl<T: Real> Backbone<T> {
    pub fn new(
        stem_cfg: &StemConfig,
        enc: &EncoderConfig,
        in_channels: usize,
        image_side: usize,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        enc.validate()?;
        let d = enc.embed_dim;
        let tokens = stem_cfg.token_count(image_side)?;
        let stem = Stem::new(stem_cfg, in_channels, d, rng)?;
        let cls_token = match enc.pool {
            Pool::ClsToken => Some(trunc_normal(&[1, 1, d], rng)?),
            Pool::Mean => None,
        };
        let len = tokens + usize::from(cls_token.is_some());
        let pos = PositionalEncoding::new(enc.pos_encoding, len, d, rng)?;
        let blocks = (0..enc.depth)
            .map(|_| EncoderBlock::new(enc, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Backbone {
            stem,
            cls_token,
            pos,
            blocks,
            norm: LayerNorm::new(d),
            pool: enc.pool,
            image_side,
        })
    }

    /// Stem output plus optional class token plus positional encoding.
    pub fn embed(&mut self, images: &Tensor<T>, mode: NormMode) -> Result<Tensor<T>> {
        let s = images.shape();
        if s.len() != 4 || s[2] != self.image_side || s[3] != self.image_side {
            return Err(VtccError::Tensor(vtcc_tensor::TensorError::Shape {
                op: "backbone",
                lhs: s.to_vec(),
                rhs: vec![s.first().copied().unwrap_or(0), 0, self.image_side, self.image_side],
            }));
        }
        let mut tokens = self.stem.forward(images, mode)?;
        if let Some(cls) = &self.cls_token {
            let n = tokens.shape()[0];
            let expanded = Tensor::concat(&vec![cls.clone(); n], 0)?;
            tokens = Tensor::concat(&[expanded, tokens], 1)?;
        }
        self.pos.apply(&tokens)
    }

    /// Encoder blocks and final norm on an embedded sequence.
    pub fn encode(&self, tokens: &Tensor<T>) -> Result<Tensor<T>> {
        let mut x = tokens.clone();
        for block in &self.blocks {
            x = block.forward(&x)?;
        }
        self.norm.forward(&x)
    }

    pub fn pool_tokens(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(match self.pool {
            Pool::Mean => x.mean_axis(1, false)?,
            Pool::ClsToken => {
                let (n, d) = (x.shape()[0], x.shape()[2]);
                x.slice(1, 0, 1)?.reshape(&[n, d])?
            }
        })
    }

    pub fn forward(&mut self, images: &Tensor<T>, mode: NormMode) -> Result<Tensor<T>> {
        let tokens = self.embed(images, mode)?;
        let x = self.encode(&tokens)?;
        self.pool_tokens(&x)
    }
}

impl<T: Real> Module<T> for Backbone<T> {
    fn slots<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, Slot<'a, T>)>) {
        self.stem.slots(&join(prefix, "stem"), out);
        if let Some(cls) = &mut self.cls_token {
            out.push((join(prefix, "cls_token"), Slot::Param(cls)));
        }
        self.pos.slots(&join(prefix, "pos"), out);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.slots(&join(prefix, &format!("blocks.{i}")), out);
        }
        self.norm.slots(&join(prefix, "norm"), out);
    }
}
