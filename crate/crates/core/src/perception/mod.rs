//! Foveated perceptual model: steerable-pyramid bands summarised by local means
//! and standard deviations pooled over regions that grow with eccentricity.

pub mod colour;
pub(crate) mod conv;
pub mod lod;
pub mod metamer;
pub mod mipmap;
pub mod pool;
pub mod pyramid;

use ndarray::Array2;

pub use colour::rgb_to_ycbcr;
pub use lod::{eccentricity, make_lod_map, GazeContext, LodMap};
pub use metamer::{synthesize_metamer, MetamerOptions};
pub use mipmap::{make_mipmap, Mipmap};
pub use pool::{pool, PoolPlan};
pub use pyramid::{build_steerable_pyramid, default_level_count, reconstruct_from_pyramid, BandKind, Pyramid};

use crate::error::{Error, Result};
use crate::par;
use crate::raster::{Grid, Image};

/// Regulariser inside the standard-deviation square root.
pub const STD_EPSILON: f64 = 1e-8;

/// `sqrt(max(v, 0) + eps) - sqrt(eps)`: zero at zero variance with a finite slope.
pub fn smooth_std(variance: f64) -> f64 {
    (variance.max(0.0) + STD_EPSILON).sqrt() - STD_EPSILON.sqrt()
}

fn smooth_std_slope(variance: f64) -> f64 {
    if variance > 0.0 {
        0.5 / (variance + STD_EPSILON).sqrt()
    } else {
        0.0
    }
}

/// Pooled statistics of one band of one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureEntry {
    pub channel: usize,
    pub band: BandKind,
    pub mean: Grid,
    pub std: Grid,
}

/// An image mapped into the perceptual space.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    /// Channel-major, then bands in [`BandKind::all`] order.
    pub entries: Vec<FeatureEntry>,
    /// Full-resolution pixels whose pooling region is at most the foveal threshold.
    pub foveal_mask: Array2<bool>,
    /// Raw image values under the mask, per channel in row-major order.
    pub foveal_pixels: Vec<Vec<f64>>,
}

/// Per-band intermediate values kept for the adjoint pass.
#[derive(Debug, Clone)]
pub(crate) struct BandTape {
    band: Grid,
    mean: Grid,
    variance: Grid,
}

#[derive(Debug, Clone)]
pub(crate) struct PerceptTape {
    bands: Vec<Vec<BandTape>>,
}

/// Everything about the perceptual mapping that depends only on image layout
/// and gaze: LoD sampling plans and foveal weights for each pyramid scale.
#[derive(Debug, Clone)]
pub struct PerceptModel {
    width: usize,
    height: usize,
    channels: usize,
    level_count: usize,
    ctx: GazeContext,
    plans: Vec<PoolPlan>,
    foveal: Vec<Grid>,
}

impl PerceptModel {
    pub fn new(width: usize, height: usize, channels: usize, ctx: &GazeContext, level_count: usize) -> Result<Self> {
        ctx.validate()?;
        if channels != 1 && channels != 3 {
            return Err(Error::input(format!("images have 1 or 3 channels, got {channels}")));
        }
        pyramid::check_level_count(width, height, level_count)?;
        let plans = (0..=level_count)
            .map(|s| PoolPlan::new(&lod::lod_map_for_scale(width, height, s, ctx)))
            .collect();
        let foveal = (0..=level_count)
            .map(|s| lod::foveal_weights_for_scale(width, height, s, ctx))
            .collect();
        Ok(Self {
            width,
            height,
            channels,
            level_count,
            ctx: *ctx,
            plans,
            foveal,
        })
    }

    /// Model with the default pyramid depth for the image size.
    pub fn for_image(img: &Image, ctx: &GazeContext) -> Result<Self> {
        Self::new(
            img.width(),
            img.height(),
            img.channel_count(),
            ctx,
            default_level_count(img.width(), img.height()),
        )
    }

    pub fn level_count(&self) -> usize {
        self.level_count
    }

    pub fn channel_count(&self) -> usize {
        self.channels
    }

    pub fn context(&self) -> &GazeContext {
        &self.ctx
    }

    pub fn band_kinds(&self) -> Vec<BandKind> {
        BandKind::all(self.level_count)
    }

    /// Pooling plan for bands stored at dyadic `scale`.
    pub fn plan(&self, scale: usize) -> &PoolPlan {
        &self.plans[scale]
    }

    /// Foveal weights (1 = foveal) at dyadic `scale`.
    pub fn foveal_weights(&self, scale: usize) -> &Grid {
        &self.foveal[scale]
    }

    pub fn foveal_mask(&self) -> Array2<bool> {
        self.foveal[0].mapv(|w| w >= 1.0)
    }

    pub(crate) fn check_image(&self, img: &Image) -> Result<()> {
        if img.width() != self.width || img.height() != self.height || img.channel_count() != self.channels {
            return Err(Error::input(format!(
                "image is {}x{}x{}, perceptual model expects {}x{}x{}",
                img.width(),
                img.height(),
                img.channel_count(),
                self.width,
                self.height,
                self.channels
            )));
        }
        Ok(())
    }

    pub fn features(&self, img: &Image) -> Result<FeatureSet> {
        Ok(self.forward(img)?.0)
    }

    pub(crate) fn forward(&self, img: &Image) -> Result<(FeatureSet, PerceptTape)> {
        self.check_image(img)?;
        let working = colour::to_ycbcr(img.channels());
        let per_channel: Vec<Result<Vec<BandTape>>> = par::map_slice(&working, |ch| self.channel_forward(ch));
        let mut bands = Vec::with_capacity(per_channel.len());
        for r in per_channel {
            bands.push(r?);
        }
        let kinds = self.band_kinds();
        let mut entries = Vec::new();
        for (c, tapes) in bands.iter().enumerate() {
            for (kind, tape) in kinds.iter().zip(tapes) {
                entries.push(FeatureEntry {
                    channel: c,
                    band: *kind,
                    mean: tape.mean.clone(),
                    std: tape.variance.mapv(smooth_std),
                });
            }
        }
        let foveal_mask = self.foveal_mask();
        let foveal_pixels = img
            .channels()
            .iter()
            .map(|ch| {
                ch.iter()
                    .zip(foveal_mask.iter())
                    .filter(|(_, m)| **m)
                    .map(|(v, _)| *v)
                    .collect()
            })
            .collect();
        Ok((
            FeatureSet {
                entries,
                foveal_mask,
                foveal_pixels,
            },
            PerceptTape { bands },
        ))
    }

    fn channel_forward(&self, channel: &Grid) -> Result<Vec<BandTape>> {
        let pyr = build_steerable_pyramid(channel, self.level_count)?;
        Ok(self
            .band_kinds()
            .into_iter()
            .map(|kind| {
                let band = pyr.band(kind).clone();
                let plan = &self.plans[kind.scale(self.level_count)];
                let mean = plan.pool(&band);
                let second = plan.pool(&band.mapv(|v| v * v));
                let variance = &second - &mean.mapv(|m| m * m);
                BandTape { band, mean, variance }
            })
            .collect())
    }

    /// Pulls gradients on every feature map back to the input image channels.
    /// `grad_mean[i]` / `grad_std[i]` align with `FeatureSet::entries[i]`.
    pub(crate) fn backward(&self, tape: &PerceptTape, grad_mean: &[Grid], grad_std: &[Grid]) -> Result<Vec<Grid>> {
        let kinds = self.band_kinds();
        let per_channel = kinds.len();
        let working: Vec<Result<Grid>> = par::map_range(tape.bands.len(), |c| {
            let mut grads = build_steerable_pyramid(&Grid::zeros((self.height, self.width)), self.level_count)?;
            for (b, kind) in kinds.iter().enumerate() {
                let t = &tape.bands[c][b];
                let i = c * per_channel + b;
                let plan = &self.plans[kind.scale(self.level_count)];
                let grad_var = Array2::from_shape_fn(t.variance.dim(), |ix| {
                    grad_std[i][ix] * smooth_std_slope(t.variance[ix])
                });
                let grad_m = &grad_mean[i] - &(&t.mean * &grad_var * 2.0);
                let through_mean = plan.pool_adjoint(&grad_m);
                let through_second = plan.pool_adjoint(&grad_var);
                *grads.band_mut(*kind) = through_mean + &(&t.band * &through_second * 2.0);
            }
            pyramid::pyramid_adjoint(&grads)
        });
        let mut out = Vec::with_capacity(working.len());
        for g in working {
            out.push(g?);
        }
        Ok(colour::to_ycbcr_adjoint(&out))
    }
}

/// Maps an image and gaze into the perceptual feature space.
pub fn percept(img: &Image, ctx: &GazeContext, level_count: usize) -> Result<FeatureSet> {
    PerceptModel::new(img.width(), img.height(), img.channel_count(), ctx, level_count)?.features(img)
}
