//! Stochastic two-view augmentation pipeline.
//!
//! Per view: random resized crop, horizontal flip, color jitter, random
//! grayscale, Gaussian blur, solarization, then normalization. Blur and
//! solarize probabilities differ between the two views.

use serde::{Deserialize, Serialize};

use crate::error::{Result, VtccError};
use crate::image::Image;
use crate::rng::SeededRng;

/// Tag for augmentation sub-streams.
const AUGMENT_STREAM: u64 = 0xA06;

pub const LUMA: [f32; 3] = [0.299, 0.587, 0.114];
pub const SOLARIZE_THRESHOLD: f32 = 0.5;
pub const CROP_ATTEMPTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationSpec {
    pub crop_scale: (f64, f64),
    pub crop_ratio: (f64, f64),
    pub flip_prob: f64,
    /// Brightness, contrast, saturation, hue.
    pub jitter: [f64; 4],
    pub jitter_prob: f64,
    pub grayscale_prob: f64,
    /// Per view `[a, b]`.
    pub blur_prob: [f64; 2],
    pub blur_sigma: (f64, f64),
    /// Per view `[a, b]`.
    pub solarize_prob: [f64; 2],
    pub output_side: usize,
    /// Per-channel normalization; a single entry applies to every channel.
    pub norm_mean: Vec<f32>,
    pub norm_std: Vec<f32>,
}

impl Default for AugmentationSpec {
    fn default() -> Self {
        AugmentationSpec {
            crop_scale: (0.08, 1.0),
            crop_ratio: (3.0 / 4.0, 4.0 / 3.0),
            flip_prob: 0.5,
            jitter: [0.4, 0.4, 0.2, 0.1],
            jitter_prob: 0.8,
            grayscale_prob: 0.2,
            blur_prob: [1.0, 0.1],
            blur_sigma: (0.1, 2.0),
            solarize_prob: [0.0, 0.2],
            output_side: 32,
            norm_mean: vec![0.5],
            norm_std: vec![0.5],
        }
    }
}

impl AugmentationSpec {
    /// Full-area crop and no stochastic operations.
    pub fn identity(output_side: usize) -> Self {
        AugmentationSpec {
            crop_scale: (1.0, 1.0),
            crop_ratio: (1.0, 1.0),
            flip_prob: 0.0,
            jitter: [0.0; 4],
            jitter_prob: 0.0,
            grayscale_prob: 0.0,
            blur_prob: [0.0, 0.0],
            solarize_prob: [0.0, 0.0],
            output_side,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [
            self.flip_prob,
            self.jitter_prob,
            self.grayscale_prob,
            self.blur_prob[0],
            self.blur_prob[1],
            self.solarize_prob[0],
            self.solarize_prob[1],
        ];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(VtccError::Config("augmentation probabilities must lie in [0, 1]".into()));
        }
        let (lo, hi) = self.crop_scale;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(VtccError::Config(format!("invalid crop scale range ({lo}, {hi})")));
        }
        let (rlo, rhi) = self.crop_ratio;
        if !(rlo > 0.0 && rlo <= rhi) {
            return Err(VtccError::Config(format!("invalid crop ratio range ({rlo}, {rhi})")));
        }
        if self.output_side == 0 {
            return Err(VtccError::Config("output_side must be positive".into()));
        }
        if self.jitter.iter().any(|s| !(*s >= 0.0)) || self.jitter[3] > 0.5 {
            return Err(VtccError::Config("jitter strengths must be non-negative (hue at most 0.5)".into()));
        }
        let (slo, shi) = self.blur_sigma;
        if !(slo > 0.0 && slo <= shi) {
            return Err(VtccError::Config(format!("invalid blur sigma range ({slo}, {shi})")));
        }
        if self.norm_mean.is_empty() || self.norm_std.is_empty() || self.norm_std.iter().any(|s| !(*s > 0.0)) {
            return Err(VtccError::Config("normalization needs a mean and positive std".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropRect {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

/// Samples a crop rectangle with the given area-fraction and aspect-ratio
/// ranges; falls back to a centered crop after [`CROP_ATTEMPTS`] misses.
pub fn sample_crop(height: usize, width: usize, scale: (f64, f64), ratio: (f64, f64), rng: &mut SeededRng) -> CropRect {
    let area = (height * width) as f64;
    let (log_lo, log_hi) = (ratio.0.ln(), ratio.1.ln());
    for _ in 0..CROP_ATTEMPTS {
        let target = area * rng.uniform_in(scale.0, scale.1);
        let aspect = rng.uniform_in(log_lo, log_hi).exp();
        let w = (target * aspect).sqrt().round() as usize;
        let h = (target / aspect).sqrt().round() as usize;
        if w > 0 && h > 0 && w <= width && h <= height {
            let top = rng.below(height - h + 1);
            let left = rng.below(width - w + 1);
            return CropRect {
                top,
                left,
                height: h,
                width: w,
            };
        }
    }
    let in_ratio = width as f64 / height as f64;
    let (h, w) = if in_ratio < ratio.0 {
        (((width as f64 / ratio.0).round() as usize).clamp(1, height), width)
    } else if in_ratio > ratio.1 {
        (height, ((height as f64 * ratio.1).round() as usize).clamp(1, width))
    } else {
        (height, width)
    };
    CropRect {
        top: (height - h) / 2,
        left: (width - w) / 2,
        height: h,
        width: w,
    }
}

/// Bilinear resampling of `rect` to `out_h x out_w` with half-pixel centers.
pub fn resize_region(img: &Image, rect: CropRect, out_h: usize, out_w: usize) -> Image {
    let axis = |out: usize, len: usize, offset: usize| -> Vec<(usize, usize, f32)> {
        let scale = len as f64 / out as f64;
        (0..out)
            .map(|i| {
                let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
                let lo = src.floor() as usize;
                let hi = (lo + 1).min(len - 1);
                (offset + lo, offset + hi, (src - lo as f64) as f32)
            })
            .collect()
    };
    let ys = axis(out_h, rect.height, rect.top);
    let xs = axis(out_w, rect.width, rect.left);
    let mut out = Image::filled(img.channels, out_h, out_w, 0.0);
    for c in 0..img.channels {
        for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
                let top = img.at(c, y0, x0) * (1.0 - fx) + img.at(c, y0, x1) * fx;
                let bottom = img.at(c, y1, x0) * (1.0 - fx) + img.at(c, y1, x1) * fx;
                *out.at_mut(c, oy, ox) = top * (1.0 - fy) + bottom * fy;
            }
        }
    }
    out
}

pub fn resize(img: &Image, side: usize) -> Image {
    let full = CropRect {
        top: 0,
        left: 0,
        height: img.height,
        width: img.width,
    };
    if img.height == side && img.width == side {
        return img.clone();
    }
    resize_region(img, full, side, side)
}

pub fn random_resized_crop(img: &Image, spec: &AugmentationSpec, rng: &mut SeededRng) -> Image {
    let rect = sample_crop(img.height, img.width, spec.crop_scale, spec.crop_ratio, rng);
    resize_region(img, rect, spec.output_side, spec.output_side)
}

pub fn hflip(img: &Image) -> Image {
    let mut out = img.clone();
    for c in 0..img.channels {
        for y in 0..img.height {
            for x in 0..img.width {
                *out.at_mut(c, y, x) = img.at(c, y, img.width - 1 - x);
            }
        }
    }
    out
}

fn luminance(img: &Image) -> Vec<f32> {
    if img.channels != 3 {
        return img.plane(0).to_vec();
    }
    let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
    (0..r.len()).map(|i| LUMA[0] * r[i] + LUMA[1] * g[i] + LUMA[2] * b[i]).collect()
}

fn clamp01(img: &mut Image) {
    for v in &mut img.data {
        *v = v.clamp(0.0, 1.0);
    }
}

pub fn grayscale(img: &Image) -> Image {
    let gray = luminance(img);
    Image {
        data: gray.repeat(img.channels),
        ..img.clone()
    }
}

pub fn adjust_brightness(img: &Image, factor: f32) -> Image {
    let mut out = img.clone();
    out.data.iter_mut().for_each(|v| *v *= factor);
    clamp01(&mut out);
    out
}

pub fn adjust_contrast(img: &Image, factor: f32) -> Image {
    let gray = luminance(img);
    let mean = gray.iter().sum::<f32>() / gray.len() as f32;
    let mut out = img.clone();
    out.data.iter_mut().for_each(|v| *v = (*v - mean) * factor + mean);
    clamp01(&mut out);
    out
}

pub fn adjust_saturation(img: &Image, factor: f32) -> Image {
    if img.channels != 3 {
        return img.clone();
    }
    let gray = luminance(img);
    let n = gray.len();
    let mut out = img.clone();
    for (i, v) in out.data.iter_mut().enumerate() {
        let g = gray[i % n];
        *v = g + factor * (*v - g);
    }
    clamp01(&mut out);
    out
}

fn rgb_to_hsv(r: f32, g: f32, b: f32) -> (f32, f32, f32) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / delta).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / delta + 2.0) / 6.0
    } else {
        ((r - g) / delta + 4.0) / 6.0
    };
    let s = if max == 0.0 { 0.0 } else { delta / max };
    (h, s, max)
}

fn hsv_to_rgb(h: f32, s: f32, v: f32) -> (f32, f32, f32) {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let sector = (h6.floor() as i32).rem_euclid(6);
    let f = h6 - h6.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}

/// Rotates hue by `shift` turns.
pub fn adjust_hue(img: &Image, shift: f32) -> Image {
    if img.channels != 3 || shift == 0.0 {
        return img.clone();
    }
    let n = img.height * img.width;
    let mut out = img.clone();
    for i in 0..n {
        let (h, s, v) = rgb_to_hsv(img.data[i], img.data[n + i], img.data[2 * n + i]);
        let (r, g, b) = hsv_to_rgb(h + shift, s, v);
        out.data[i] = r;
        out.data[n + i] = g;
        out.data[2 * n + i] = b;
    }
    clamp01(&mut out);
    out
}

/// Brightness, contrast, saturation and hue adjustments in random order.
pub fn color_jitter(img: &Image, strengths: [f64; 4], rng: &mut SeededRng) -> Image {
    let mut out = img.clone();
    for op in rng.permutation(4) {
        let s = strengths[op];
        if s == 0.0 {
            continue;
        }
        out = match op {
            0 => adjust_brightness(&out, rng.uniform_in((1.0 - s).max(0.0), 1.0 + s) as f32),
            1 => adjust_contrast(&out, rng.uniform_in((1.0 - s).max(0.0), 1.0 + s) as f32),
            2 => adjust_saturation(&out, rng.uniform_in((1.0 - s).max(0.0), 1.0 + s) as f32),
            _ => adjust_hue(&out, rng.uniform_in(-s, s) as f32),
        };
    }
    out
}

pub fn solarize(img: &Image) -> Image {
    let mut out = img.clone();
    out.data.iter_mut().for_each(|v| {
        if *v >= SOLARIZE_THRESHOLD {
            *v = 1.0 - *v;
        }
    });
    out
}

/// Odd kernel size of roughly a tenth of the image side.
pub fn blur_kernel_size(side: usize) -> usize {
    let k = side.div_ceil(10).max(1);
    if k.is_multiple_of(2) {
        k + 1
    } else {
        k
    }
}

pub fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let r = (size / 2) as f64;
    let raw: Vec<f64> = (0..size)
        .map(|i| {
            let x = i as f64 - r;
            (-x * x / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Mirror index with the edge sample repeated (`-1 -> 0`, `n -> n - 1`).
fn reflect(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

/// Separable Gaussian blur with mirrored borders.
pub fn gaussian_blur(img: &Image, size: usize, sigma: f64) -> Image {
    let kernel = gaussian_kernel(size, sigma);
    let r = (size / 2) as isize;
    let (h, w) = (img.height, img.width);
    let mut tmp = vec![0f64; h * w];
    let mut out = img.clone();
    for c in 0..img.channels {
        let plane = img.plane(c);
        for y in 0..h {
            for x in 0..w {
                tmp[y * w + x] = kernel
                    .iter()
                    .enumerate()
                    .map(|(k, wt)| wt * plane[y * w + reflect(x as isize + k as isize - r, w)] as f64)
                    .sum();
            }
        }
        for y in 0..h {
            for x in 0..w {
                let v: f64 = kernel
                    .iter()
                    .enumerate()
                    .map(|(k, wt)| wt * tmp[reflect(y as isize + k as isize - r, h) * w + x])
                    .sum();
                *out.at_mut(c, y, x) = v as f32;
            }
        }
    }
    out
}

/// Which stochastic operations fired for one view.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Applied {
    pub flipped: bool,
    pub jittered: bool,
    pub grayscaled: bool,
    pub blurred: bool,
    pub solarized: bool,
}

/// One augmented view in `[0, 1]`, before normalization.
pub fn augment_view(img: &Image, spec: &AugmentationSpec, view: usize, rng: &mut SeededRng) -> (Image, Applied) {
    let mut applied = Applied::default();
    let mut x = random_resized_crop(img, spec, rng);
    if rng.bernoulli(spec.flip_prob) {
        x = hflip(&x);
        applied.flipped = true;
    }
    if rng.bernoulli(spec.jitter_prob) {
        x = color_jitter(&x, spec.jitter, rng);
        applied.jittered = true;
    }
    if rng.bernoulli(spec.grayscale_prob) {
        x = grayscale(&x);
        applied.grayscaled = true;
    }
    if rng.bernoulli(spec.blur_prob[view]) {
        let sigma = rng.uniform_in(spec.blur_sigma.0, spec.blur_sigma.1);
        x = gaussian_blur(&x, blur_kernel_size(spec.output_side), sigma);
        applied.blurred = true;
    }
    if rng.bernoulli(spec.solarize_prob[view]) {
        x = solarize(&x);
        applied.solarized = true;
    }
    (x, applied)
}

pub fn normalize(img: &Image, spec: &AugmentationSpec) -> Vec<f32> {
    let n = img.height * img.width;
    img.data
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let c = i / n;
            let mean = spec.norm_mean[c.min(spec.norm_mean.len() - 1)];
            let std = spec.norm_std[c.min(spec.norm_std.len() - 1)];
            (v - mean) / std
        })
        .collect()
}

/// Sub-stream for one view of one sample in one epoch.
pub fn view_rng(seed: u64, epoch: u64, sample: u64, view: usize) -> SeededRng {
    SeededRng::derive(seed, &[AUGMENT_STREAM, epoch, sample, view as u64])
}

/// Both normalized views of one image.
pub fn view_pair(img: &Image, spec: &AugmentationSpec, seed: u64, epoch: u64, sample: u64) -> (Vec<f32>, Vec<f32>) {
    let mut views = [0, 1].map(|v| {
        let mut rng = view_rng(seed, epoch, sample, v);
        normalize(&augment_view(img, spec, v, &mut rng).0, spec)
    });
    (std::mem::take(&mut views[0]), std::mem::take(&mut views[1]))
}

/// Deterministic evaluation transform: resize and normalize.
pub fn eval_view(img: &Image, spec: &AugmentationSpec) -> Vec<f32> {
    normalize(&resize(img, spec.output_side), spec)
}
