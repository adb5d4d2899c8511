//! Gaze geometry: eccentricity, pooling sizes and MIP level-of-detail maps.

use serde::{Deserialize, Serialize};

use super::mipmap::mip_dims;
use crate::error::{Error, Result};
use crate::raster::Grid;

/// Pixels per degree of the prototype display: 1920 px across 17.5 degrees.
pub const DEFAULT_PIXELS_PER_DEGREE: f64 = 109.7;
/// Pooling-diameter growth, degrees of pooling per squared degree of eccentricity.
pub const DEFAULT_ALPHA: f64 = 0.05;

/// Fixation and viewing geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GazeContext {
    /// Fixation point in normalized image coordinates, `[0, 1]^2`.
    pub gaze: [f64; 2],
    pub pixels_per_degree: f64,
    pub alpha: f64,
    /// Pixels whose pooling diameter is at most this many pixels count as foveal.
    pub fovea_threshold_px: f64,
    /// Width in degrees of a linear fovea-to-periphery blend; 0 gives a hard edge.
    pub foveal_blend_deg: f64,
}

impl Default for GazeContext {
    fn default() -> Self {
        Self {
            gaze: [0.5, 0.5],
            pixels_per_degree: DEFAULT_PIXELS_PER_DEGREE,
            alpha: DEFAULT_ALPHA,
            fovea_threshold_px: 1.0,
            foveal_blend_deg: 0.0,
        }
    }
}

impl GazeContext {
    pub fn centered(pixels_per_degree: f64, alpha: f64) -> Self {
        Self {
            pixels_per_degree,
            alpha,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.gaze.iter().all(|g| (0.0..=1.0).contains(g)) {
            return Err(Error::config(format!("gaze {:?} lies outside [0,1]^2", self.gaze)));
        }
        if !(self.pixels_per_degree > 0.0 && self.pixels_per_degree.is_finite()) {
            return Err(Error::config("pixels_per_degree must be positive"));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::config("alpha must be nonnegative"));
        }
        if !(self.fovea_threshold_px >= 0.0 && self.fovea_threshold_px.is_finite()) {
            return Err(Error::config("fovea_threshold_px must be nonnegative"));
        }
        if !(self.foveal_blend_deg >= 0.0 && self.foveal_blend_deg.is_finite()) {
            return Err(Error::config("foveal_blend_deg must be nonnegative"));
        }
        Ok(())
    }

    /// Fixation in pixel coordinates of a `width x height` image.
    pub fn gaze_px(&self, width: usize, height: usize) -> (f64, f64) {
        (self.gaze[0] * width as f64, self.gaze[1] * height as f64)
    }

    /// Pooling diameter in pixels at eccentricity `e` degrees.
    pub fn pooling_diameter(&self, e: f64) -> f64 {
        (self.alpha * e * e * self.pixels_per_degree).max(1.0)
    }

    fn raw_pooling(&self, e: f64) -> f64 {
        self.alpha * e * e * self.pixels_per_degree
    }

    /// Eccentricity at which the pooling diameter reaches the foveal threshold.
    fn foveal_radius_deg(&self) -> f64 {
        if self.alpha == 0.0 {
            f64::INFINITY
        } else {
            (self.fovea_threshold_px / (self.alpha * self.pixels_per_degree)).sqrt()
        }
    }

    /// Weight of the direct pixel term at eccentricity `e`: 1 inside the fovea,
    /// 0 in the periphery, linear across the optional blend band.
    pub fn foveal_weight(&self, e: f64) -> f64 {
        if self.raw_pooling(e) <= self.fovea_threshold_px {
            return 1.0;
        }
        if self.foveal_blend_deg > 0.0 {
            let over = e - self.foveal_radius_deg();
            (1.0 - over / self.foveal_blend_deg).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }
}

/// Eccentricity in degrees of pixel `(x, y)` under a flat-screen small-angle model.
pub fn eccentricity(x: f64, y: f64, ctx: &GazeContext, width: usize, height: usize) -> f64 {
    let (gx, gy) = ctx.gaze_px(width, height);
    (x - gx).hypot(y - gy) / ctx.pixels_per_degree
}

/// Fractional MIP level to read at each pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct LodMap {
    pub data: Grid,
}

impl LodMap {
    pub fn width(&self) -> usize {
        self.data.ncols()
    }

    pub fn height(&self) -> usize {
        self.data.nrows()
    }
}

/// LoD map for a full-resolution image: `log2` of the pooling diameter, clamped
/// to the levels a MIP chain over `width x height` has.
pub fn make_lod_map(width: usize, height: usize, ctx: &GazeContext) -> LodMap {
    lod_map_for_scale(width, height, 0, ctx)
}

/// LoD map for a band stored at dyadic `scale` of a `width x height` image.
/// A band pixel `(x, y)` sits at full-resolution position `(x 2^s, y 2^s)` and
/// its LoD is reduced by `s`.
pub(crate) fn lod_map_for_scale(width: usize, height: usize, scale: usize, ctx: &GazeContext) -> LodMap {
    let (bh, bw) = band_dims(width, height, scale);
    let max_lod = (mip_dims(bh, bw).len() - 1) as f64;
    let factor = (1usize << scale) as f64;
    let data = Grid::from_shape_fn((bh, bw), |(y, x)| {
        let e = eccentricity(x as f64 * factor, y as f64 * factor, ctx, width, height);
        (ctx.pooling_diameter(e).log2() - scale as f64).clamp(0.0, max_lod)
    });
    LodMap { data }
}

/// Foveal weights at dyadic `scale` of a `width x height` image.
pub(crate) fn foveal_weights_for_scale(width: usize, height: usize, scale: usize, ctx: &GazeContext) -> Grid {
    let (bh, bw) = band_dims(width, height, scale);
    let factor = (1usize << scale) as f64;
    Grid::from_shape_fn((bh, bw), |(y, x)| {
        ctx.foveal_weight(eccentricity(x as f64 * factor, y as f64 * factor, ctx, width, height))
    })
}

pub(crate) fn band_dims(width: usize, height: usize, scale: usize) -> (usize, usize) {
    let mut dims = (height, width);
    for _ in 0..scale {
        dims = (dims.0.div_ceil(2), dims.1.div_ceil(2));
    }
    dims
}
