//! Planar float images in `[0, 1]`, channel-major.

use crate::error::{Result, VtccError};

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// `channels * height * width` values, row-major within each channel.
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 || data.len() != channels * height * width {
            return Err(VtccError::Contract(format!(
                "image buffer of {} values does not match {channels}x{height}x{width}",
                data.len()
            )));
        }
        Ok(Image {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f32) -> Self {
        Image {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn from_bytes(channels: usize, side: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(channels, side, side, bytes.iter().map(|&b| b as f32 / 255.0).collect())
    }

    /// Quantizes to `0..=255` with rounding.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.data.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect()
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn at_mut(&mut self, c: usize, y: usize, x: usize) -> &mut f32 {
        &mut self.data[(c * self.height + y) * self.width + x]
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    /// Repeats a single-channel image, or checks the channel count matches.
    pub fn with_channels(&self, channels: usize) -> Result<Image> {
        if self.channels == channels {
            return Ok(self.clone());
        }
        if self.channels != 1 {
            return Err(VtccError::Contract(format!(
                "cannot convert a {}-channel image to {channels} channels",
                self.channels
            )));
        }
        Ok(Image {
            channels,
            height: self.height,
            width: self.width,
            data: self.data.repeat(channels),
        })
    }
}
