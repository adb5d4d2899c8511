//! Multi-channel intensity images.

use ndarray::Array2;

use crate::error::{Error, Result};

/// A single-channel 2D grid, indexed `[[y, x]]`.
pub type Grid = Array2<f64>;

/// Nonnegative intensity image with 1 or 3 channels of identical size.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    channels: Vec<Grid>,
}

impl Image {
    /// Builds an image, rejecting empty, mismatched, non-finite or negative data.
    pub fn new(channels: Vec<Grid>) -> Result<Self> {
        check_shape(&channels)?;
        for (c, ch) in channels.iter().enumerate() {
            if let Some(v) = ch.iter().find(|v| !v.is_finite() || **v < 0.0) {
                return Err(Error::input(format!(
                    "channel {c} contains {v}; intensities must be finite and nonnegative"
                )));
            }
        }
        Ok(Self { channels })
    }

    /// Builds an image from values known to be valid (clamping tiny negative round-off).
    pub(crate) fn from_parts(mut channels: Vec<Grid>) -> Self {
        debug_assert!(check_shape(&channels).is_ok());
        for ch in &mut channels {
            ch.mapv_inplace(|v| v.max(0.0));
        }
        Self { channels }
    }

    pub fn gray(grid: Grid) -> Result<Self> {
        Self::new(vec![grid])
    }

    pub fn filled(channels: usize, width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(vec![Grid::from_elem((height, width), value); channels])
    }

    pub fn width(&self) -> usize {
        self.channels[0].ncols()
    }

    pub fn height(&self) -> usize {
        self.channels[0].nrows()
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn channel(&self, c: usize) -> &Grid {
        &self.channels[c]
    }

    pub fn channels(&self) -> &[Grid] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Grid> {
        self.channels
    }

    pub fn pixel_count(&self) -> usize {
        self.width() * self.height()
    }

    /// Same width, height and channel count.
    pub fn same_layout(&self, other: &Image) -> bool {
        self.channel_count() == other.channel_count()
            && self.width() == other.width()
            && self.height() == other.height()
    }

    pub(crate) fn ensure_same_layout(&self, other: &Image) -> Result<()> {
        if self.same_layout(other) {
            Ok(())
        } else {
            Err(Error::input(format!(
                "image layouts differ: {}x{}x{} vs {}x{}x{}",
                self.width(),
                self.height(),
                self.channel_count(),
                other.width(),
                other.height(),
                other.channel_count()
            )))
        }
    }

    /// Per-channel arithmetic mean.
    pub fn channel_means(&self) -> Vec<f64> {
        self.channels.iter().map(mean).collect()
    }

    /// Elementwise clamp to `[lo, hi]`.
    pub fn clamped(&self, lo: f64, hi: f64) -> Image {
        Image::from_parts(self.channels.iter().map(|c| c.mapv(|v| v.clamp(lo, hi))).collect())
    }
}

fn check_shape(channels: &[Grid]) -> Result<()> {
    let first = channels
        .first()
        .ok_or_else(|| Error::input("image has no channels"))?;
    if channels.len() != 1 && channels.len() != 3 {
        return Err(Error::input(format!(
            "images have 1 or 3 channels, got {}",
            channels.len()
        )));
    }
    if first.is_empty() {
        return Err(Error::input("image is empty"));
    }
    if channels.iter().any(|c| c.dim() != first.dim()) {
        return Err(Error::input("image channels differ in size"));
    }
    Ok(())
}

/// Sequential mean in row-major order (fixed association for determinism).
pub fn mean(grid: &Grid) -> f64 {
    grid.iter().sum::<f64>() / grid.len() as f64
}
