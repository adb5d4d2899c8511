//! Pixel-space image quality measures.

use ndarray::Array2;

use crate::corpus::Rect;
use crate::error::{Error, Result};
use crate::perception::{eccentricity, GazeContext};
use crate::raster::Image;

/// Full-resolution mask of pixels whose pooling region is at most the foveal threshold.
pub fn foveal_mask(width: usize, height: usize, ctx: &GazeContext) -> Array2<bool> {
    Array2::from_shape_fn((height, width), |(y, x)| {
        ctx.foveal_weight(eccentricity(x as f64, y as f64, ctx, width, height)) >= 1.0
    })
}

/// Mean squared error over pixels selected by `mask`, averaged across channels.
/// `None` when the mask selects nothing.
pub fn masked_mse(a: &Image, b: &Image, mask: &Array2<bool>) -> Result<Option<f64>> {
    a.ensure_same_layout(b)?;
    if mask.dim() != (a.height(), a.width()) {
        return Err(Error::input("mask does not match the image size"));
    }
    let count = mask.iter().filter(|m| **m).count();
    if count == 0 {
        return Ok(None);
    }
    let mut sum = 0.0;
    for (ca, cb) in a.channels().iter().zip(b.channels()) {
        ndarray::Zip::from(ca).and(cb).and(mask).for_each(|x, y, m| {
            if *m {
                sum += (x - y) * (x - y);
            }
        });
    }
    Ok(Some(sum / (count * a.channel_count()) as f64))
}

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    let all = Array2::from_elem((a.height(), a.width()), true);
    Ok(masked_mse(a, b, &all)?.unwrap_or(0.0))
}

/// PSNR in dB for signals with peak value `peak`; infinite for identical images.
pub fn psnr(a: &Image, b: &Image, peak: f64) -> Result<f64> {
    let e = mse(a, b)?;
    Ok(if e == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / e).log10()
    })
}

pub fn rect_mask(width: usize, height: usize, rect: Rect) -> Result<Array2<bool>> {
    if rect.width == 0 || rect.height == 0 || rect.x + rect.width > width || rect.y + rect.height > height {
        return Err(Error::input(format!("rectangle {rect:?} does not fit a {width}x{height} image")));
    }
    Ok(Array2::from_shape_fn((height, width), |(y, x)| rect.contains(x, y)))
}

/// Errors split by the gaze-dependent foveal mask.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionErrors {
    pub full: f64,
    /// Absent when the fovea covers no pixel.
    pub foveal: Option<f64>,
    /// Absent when the fovea covers every pixel.
    pub peripheral: Option<f64>,
}

pub fn region_errors(a: &Image, b: &Image, ctx: &GazeContext) -> Result<RegionErrors> {
    let fovea = foveal_mask(a.width(), a.height(), ctx);
    let periphery = fovea.mapv(|f| !f);
    Ok(RegionErrors {
        full: mse(a, b)?,
        foveal: masked_mse(a, b, &fovea)?,
        peripheral: masked_mse(a, b, &periphery)?,
    })
}
