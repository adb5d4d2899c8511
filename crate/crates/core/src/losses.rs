//! Scalar objectives comparing a reconstruction with a target, each with an
//! analytic gradient with respect to the reconstruction.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perception::{
    lod, metamer, pool::PoolPlan, FeatureSet, GazeContext, PerceptModel, PerceptTape,
};
use crate::raster::{Grid, Image};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureNorm {
    L1,
    L2,
}

/// Weighting of the metameric loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub feature_norm: FeatureNorm,
    /// Weights for Y, Cb, Cr features (only the first is used for gray images).
    pub channel_weights: [f64; 3],
    /// Weight of the direct pixel term inside the fovea.
    pub foveal_weight: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            feature_norm: FeatureNorm::L2,
            channel_weights: [1.0, 0.25, 0.25],
            foveal_weight: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self
            .channel_weights
            .iter()
            .chain(std::iter::once(&self.foveal_weight))
            .any(|w| !(w.is_finite() && *w >= 0.0))
        {
            return Err(Error::config("loss weights must be finite and nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Metameric,
    Mse,
    BlurMatch,
    BlurLowpass,
    MetamerTarget,
}

impl LossKind {
    pub const ALL: [LossKind; 5] = [
        LossKind::Mse,
        LossKind::BlurMatch,
        LossKind::BlurLowpass,
        LossKind::MetamerTarget,
        LossKind::Metameric,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Metameric => "metameric",
            LossKind::Mse => "mse",
            LossKind::BlurMatch => "blur_match",
            LossKind::BlurLowpass => "blur_lowpass",
            LossKind::MetamerTarget => "metamer_target",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config(format!("unknown loss '{s}'")))
    }
}

/// A differentiable scalar function of a candidate image against a fixed target.
pub trait Objective: Send + Sync {
    fn value(&self, img: &Image) -> Result<f64>;

    /// Loss and its gradient with respect to each channel of `img`.
    fn value_and_grad(&self, img: &Image) -> Result<(f64, Vec<Grid>)>;
}

fn sq_diff_sum(a: &Grid, b: &Grid) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn mse_loss(a: &Image, b: &Image) -> Result<f64> {
    a.ensure_same_layout(b)?;
    let total: f64 = a.channels().iter().zip(b.channels()).map(|(x, y)| sq_diff_sum(x, y)).sum();
    Ok(total / (a.pixel_count() * a.channel_count()) as f64)
}

fn mse_grad(a: &Image, b: &Image) -> Vec<Grid> {
    let scale = 2.0 / (a.pixel_count() * a.channel_count()) as f64;
    a.channels().iter().zip(b.channels()).map(|(x, y)| (x - y) * scale).collect()
}

/// Pixel MSE against a fixed reference image.
#[derive(Debug, Clone)]
pub struct MseObjective {
    reference: Image,
}

impl MseObjective {
    pub fn new(reference: Image) -> Self {
        Self { reference }
    }

    pub fn reference(&self) -> &Image {
        &self.reference
    }
}

impl Objective for MseObjective {
    fn value(&self, img: &Image) -> Result<f64> {
        mse_loss(img, &self.reference)
    }

    fn value_and_grad(&self, img: &Image) -> Result<(f64, Vec<Grid>)> {
        let v = mse_loss(img, &self.reference)?;
        Ok((v, mse_grad(img, &self.reference)))
    }
}

/// Spatially varying blur whose footprint is the perceptual pooling size.
#[derive(Debug, Clone)]
pub struct AcuityBlur {
    plan: PoolPlan,
    width: usize,
    height: usize,
}

impl AcuityBlur {
    pub fn new(width: usize, height: usize, ctx: &GazeContext) -> Result<Self> {
        ctx.validate()?;
        Ok(Self {
            plan: PoolPlan::new(&lod::make_lod_map(width, height, ctx)),
            width,
            height,
        })
    }

    fn check(&self, img: &Image) -> Result<()> {
        if img.width() != self.width || img.height() != self.height {
            return Err(Error::input("image size does not match the blur plan"));
        }
        Ok(())
    }

    pub fn apply(&self, img: &Image) -> Result<Image> {
        self.check(img)?;
        Ok(Image::from_parts(img.channels().iter().map(|c| self.plan.pool(c)).collect()))
    }

    fn adjoint(&self, grads: &[Grid]) -> Vec<Grid> {
        grads.iter().map(|g| self.plan.pool_adjoint(g)).collect()
    }
}

pub fn acuity_blur(img: &Image, ctx: &GazeContext) -> Result<Image> {
    AcuityBlur::new(img.width(), img.height(), ctx)?.apply(img)
}

pub fn blur_match_loss(img: &Image, target: &Image, ctx: &GazeContext) -> Result<f64> {
    img.ensure_same_layout(target)?;
    mse_loss(img, &acuity_blur(target, ctx)?)
}

pub fn blur_lowpass_loss(img: &Image, target: &Image, ctx: &GazeContext) -> Result<f64> {
    img.ensure_same_layout(target)?;
    let blur = AcuityBlur::new(img.width(), img.height(), ctx)?;
    mse_loss(&blur.apply(img)?, &blur.apply(target)?)
}

pub fn metamer_target_loss(img: &Image, target: &Image, ctx: &GazeContext, seed: u64) -> Result<f64> {
    img.ensure_same_layout(target)?;
    mse_loss(img, &metamer::synthesize_metamer(target, ctx, seed)?)
}

/// `mse(B(I), B(T))` with the target blur precomputed.
#[derive(Debug, Clone)]
pub struct BlurLowpassObjective {
    blur: AcuityBlur,
    blurred_target: Image,
}

impl BlurLowpassObjective {
    pub fn new(target: &Image, ctx: &GazeContext) -> Result<Self> {
        let blur = AcuityBlur::new(target.width(), target.height(), ctx)?;
        let blurred_target = blur.apply(target)?;
        Ok(Self { blur, blurred_target })
    }
}

impl Objective for BlurLowpassObjective {
    fn value(&self, img: &Image) -> Result<f64> {
        mse_loss(&self.blur.apply(img)?, &self.blurred_target)
    }

    fn value_and_grad(&self, img: &Image) -> Result<(f64, Vec<Grid>)> {
        let blurred = self.blur.apply(img)?;
        let v = mse_loss(&blurred, &self.blurred_target)?;
        Ok((v, self.blur.adjoint(&mse_grad(&blurred, &self.blurred_target))))
    }
}

/// Metameric loss against a fixed target: pooled band statistics outside the
/// fovea plus a direct pixel term inside it.
#[derive(Debug, Clone)]
pub struct MetamericObjective {
    model: PerceptModel,
    cfg: LossConfig,
    target: Image,
    target_features: FeatureSet,
    foveal_total: f64,
}

impl MetamericObjective {
    pub fn new(target: &Image, ctx: &GazeContext, cfg: &LossConfig) -> Result<Self> {
        Self::with_model(target, PerceptModel::for_image(target, ctx)?, cfg)
    }

    pub fn with_model(target: &Image, model: PerceptModel, cfg: &LossConfig) -> Result<Self> {
        cfg.validate()?;
        let target_features = model.features(target)?;
        let foveal_total = model.foveal_weights(0).sum();
        Ok(Self {
            model,
            cfg: *cfg,
            target: target.clone(),
            target_features,
            foveal_total,
        })
    }

    pub fn model(&self) -> &PerceptModel {
        &self.model
    }

    fn channel_weight(&self, c: usize) -> f64 {
        self.cfg.channel_weights[c.min(2)]
    }

    fn evaluate(&self, img: &Image, features: &FeatureSet, want_grad: bool) -> (f64, Vec<Grid>, Vec<Grid>) {
        let levels = self.model.level_count();
        let mut total = 0.0;
        let mut grad_mean = Vec::new();
        let mut grad_std = Vec::new();
        for (have, want) in features.entries.iter().zip(&self.target_features.entries) {
            let fov = self.model.foveal_weights(have.band.scale(levels));
            let scale = self.channel_weight(have.channel) / have.mean.len() as f64;
            for (h, w, grads) in [
                (&have.mean, &want.mean, &mut grad_mean),
                (&have.std, &want.std, &mut grad_std),
            ] {
                let mut g = if want_grad { Grid::zeros(h.dim()) } else { Grid::zeros((0, 0)) };
                let mut sum = 0.0;
                for (ix, hv) in h.indexed_iter() {
                    let weight = scale * (1.0 - fov[ix]);
                    if weight == 0.0 {
                        continue;
                    }
                    let d = hv - w[ix];
                    match self.cfg.feature_norm {
                        FeatureNorm::L2 => {
                            sum += weight * d * d;
                            if want_grad {
                                g[ix] = 2.0 * weight * d;
                            }
                        }
                        FeatureNorm::L1 => {
                            sum += weight * d.abs();
                            if want_grad {
                                g[ix] = weight * d.signum() * f64::from(d != 0.0);
                            }
                        }
                    }
                }
                total += sum;
                if want_grad {
                    grads.push(g);
                }
            }
        }

        let mut pixel_grads = Vec::new();
        if self.foveal_total > 0.0 && self.cfg.foveal_weight > 0.0 {
            let fov = self.model.foveal_weights(0);
            let norm = self.cfg.foveal_weight / (self.foveal_total * img.channel_count() as f64);
            for (a, b) in img.channels().iter().zip(self.target.channels()) {
                let mut g = Grid::zeros(a.dim());
                for (ix, av) in a.indexed_iter() {
                    let w = fov[ix];
                    if w == 0.0 {
                        continue;
                    }
                    let d = av - b[ix];
                    total += norm * w * d * d;
                    g[ix] = 2.0 * norm * w * d;
                }
                pixel_grads.push(g);
            }
        }
        // Feature gradients are packed means first, then stds.
        grad_mean.extend(grad_std);
        (total, grad_mean, pixel_grads)
    }
}

impl Objective for MetamericObjective {
    fn value(&self, img: &Image) -> Result<f64> {
        let features = self.model.features(img)?;
        Ok(self.evaluate(img, &features, false).0)
    }

    fn value_and_grad(&self, img: &Image) -> Result<(f64, Vec<Grid>)> {
        let (features, tape): (FeatureSet, PerceptTape) = self.model.forward(img)?;
        let (value, mut feature_grads, pixel_grads) = self.evaluate(img, &features, true);
        let grad_std = feature_grads.split_off(features.entries.len());
        let mut grads = self.model.backward(&tape, &feature_grads, &grad_std)?;
        for (g, p) in grads.iter_mut().zip(&pixel_grads) {
            *g += p;
        }
        Ok((value, grads))
    }
}

pub fn metameric_loss(a: &Image, b: &Image, ctx: &GazeContext, cfg: &LossConfig) -> Result<f64> {
    a.ensure_same_layout(b)?;
    MetamericObjective::new(b, ctx, cfg)?.value(a)
}

/// Builds the objective for `kind` against `target`. The metamer used by
/// [`LossKind::MetamerTarget`] is synthesized once here from `seed`.
pub fn build_objective(
    kind: LossKind,
    target: &Image,
    ctx: &GazeContext,
    cfg: &LossConfig,
    seed: u64,
) -> Result<Box<dyn Objective>> {
    Ok(match kind {
        LossKind::Mse => Box::new(MseObjective::new(target.clone())),
        LossKind::BlurMatch => Box::new(MseObjective::new(acuity_blur(target, ctx)?)),
        LossKind::BlurLowpass => Box::new(BlurLowpassObjective::new(target, ctx)?),
        LossKind::MetamerTarget => Box::new(MseObjective::new(metamer::synthesize_metamer(target, ctx, seed)?)),
        LossKind::Metameric => Box::new(MetamericObjective::new(target, ctx, cfg)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::lod::make_lod_map;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(channels: usize, w: usize, h: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::new(
            (0..channels)
                .map(|_| Grid::from_shape_fn((h, w), |_| rng.gen_range(0.05..0.95)))
                .collect(),
        )
        .unwrap()
    }

    fn no_pooling() -> GazeContext {
        GazeContext {
            alpha: 0.0,
            ..GazeContext::default()
        }
    }

    /// Fraction of sampled elements whose analytic and central-difference
    /// derivatives agree to `tol`, and the worst relative error.
    fn check_gradient(obj: &dyn Objective, img: &Image, samples: usize) -> (f64, f64) {
        let h = 1e-4;
        let (_, grad) = obj.value_and_grad(img).unwrap();
        let rms = (grad.iter().flat_map(|g| g.iter()).map(|v| v * v).sum::<f64>()
            / (img.pixel_count() * img.channel_count()) as f64)
            .sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut good = 0;
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let c = rng.gen_range(0..img.channel_count());
            let y = rng.gen_range(0..img.height());
            let x = rng.gen_range(0..img.width());
            let bump = |d: f64| {
                let mut chans = img.channels().to_vec();
                chans[c][[y, x]] += d;
                obj.value(&Image::from_parts(chans)).unwrap()
            };
            let fd = (bump(h) - bump(-h)) / (2.0 * h);
            let an = grad[c][[y, x]];
            let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-3 * rms);
            worst = worst.max(rel);
            if rel <= 1e-3 {
                good += 1;
            }
        }
        (good as f64 / samples as f64, worst)
    }

    #[test]
    fn mse_examples() {
        let zero = Image::filled(1, 4, 4, 0.0).unwrap();
        assert_eq!(mse_loss(&zero, &Image::filled(1, 4, 4, 1.0).unwrap()).unwrap(), 1.0);
        assert_eq!(mse_loss(&zero, &Image::filled(1, 4, 4, 0.5).unwrap()).unwrap(), 0.25);
        assert_eq!(mse_loss(&zero, &zero).unwrap(), 0.0);
    }

    #[test]
    fn layout_mismatch_is_rejected() {
        let a = Image::filled(1, 4, 4, 0.0).unwrap();
        let b = Image::filled(3, 4, 4, 0.0).unwrap();
        assert!(mse_loss(&a, &b).is_err());
        assert!(metameric_loss(&a, &Image::filled(1, 8, 8, 0.0).unwrap(), &GazeContext::default(), &LossConfig::default()).is_err());
    }

    #[test]
    fn every_loss_vanishes_on_its_own_target() {
        let t = noise(3, 64, 64, 1);
        let ctx = GazeContext::default();
        for kind in LossKind::ALL {
            let obj = build_objective(kind, &t, &ctx, &LossConfig::default(), 4).unwrap();
            let at = match kind {
                LossKind::BlurMatch => acuity_blur(&t, &ctx).unwrap(),
                LossKind::MetamerTarget => metamer::synthesize_metamer(&t, &ctx, 4).unwrap(),
                _ => t.clone(),
            };
            assert_eq!(obj.value(&at).unwrap(), 0.0, "{kind}");
        }
    }

    #[test]
    fn metameric_loss_is_symmetric() {
        let a = noise(3, 64, 64, 2);
        let b = noise(3, 64, 64, 3);
        let ctx = GazeContext::default();
        for norm in [FeatureNorm::L2, FeatureNorm::L1] {
            let cfg = LossConfig {
                feature_norm: norm,
                ..LossConfig::default()
            };
            let ab = metameric_loss(&a, &b, &ctx, &cfg).unwrap();
            let ba = metameric_loss(&b, &a, &ctx, &cfg).unwrap();
            assert!(ab > 0.0);
            assert!((ab - ba).abs() <= 1e-12 * ab);
        }
    }

    #[test]
    fn acuity_blur_keeps_constants_and_fovea() {
        let ctx = GazeContext::default();
        let flat = Image::filled(1, 128, 128, 0.4).unwrap();
        let out = acuity_blur(&flat, &ctx).unwrap();
        assert!(out.channel(0).iter().all(|v| (v - 0.4).abs() < 1e-12));

        let img = noise(1, 128, 128, 5);
        let id = acuity_blur(&img, &no_pooling()).unwrap();
        assert!(id.channel(0).iter().zip(img.channel(0)).all(|(a, b)| (a - b).abs() < 1e-6));

        let blurred = acuity_blur(&img, &ctx).unwrap();
        let lod = make_lod_map(128, 128, &ctx);
        let fovea = crate::metrics::foveal_mask(128, 128, &ctx);
        for ((ix, v), f) in blurred.channel(0).indexed_iter().zip(&fovea) {
            if *f {
                assert!((v - img.channel(0)[ix]).abs() < 1e-6);
            }
        }
        // Windowed variance in the far periphery.
        let window_var = |g: &Grid| {
            let w = g.slice(ndarray::s![0..8, 0..8]);
            let m = w.mean().unwrap();
            w.mapv(|v| (v - m) * (v - m)).mean().unwrap()
        };
        assert!(lod.data[[0, 0]] > 1.0);
        assert!(window_var(blurred.channel(0)) < window_var(img.channel(0)));
    }

    #[test]
    fn blur_losses_reduce_to_mse_without_pooling() {
        let a = noise(1, 64, 64, 6);
        let b = noise(1, 64, 64, 7);
        let ctx = no_pooling();
        let m = mse_loss(&a, &b).unwrap();
        assert!((blur_match_loss(&a, &b, &ctx).unwrap() - m).abs() < 1e-9);
        assert!((blur_lowpass_loss(&a, &b, &ctx).unwrap() - m).abs() < 1e-9);
        assert!((metamer_target_loss(&a, &b, &ctx, 3).unwrap() - m).abs() < 1e-9);
    }

    #[test]
    fn sharp_image_differs_from_its_own_blur() {
        let t = crate::corpus::scene_image(crate::corpus::Scene::Shapes, 128, 128, 1, 0).unwrap().image;
        let v = blur_match_loss(&t, &t, &GazeContext::default()).unwrap();
        assert!(v > 0.0);
        // Regression value for this scene.
        assert!((v - BLUR_MATCH_SELF_LOSS).abs() < 1e-3 * BLUR_MATCH_SELF_LOSS, "{v}");
    }

    const BLUR_MATCH_SELF_LOSS: f64 = 1.303_015e-4;

    #[test]
    fn blur_lowpass_ignores_peripheral_checkerboard() {
        let ctx = GazeContext::default();
        let t = noise(1, 128, 128, 8);
        let lod = make_lod_map(128, 128, &ctx);
        let mut chans = t.channels().to_vec();
        for ((y, x), l) in lod.data.indexed_iter() {
            // A checkerboard averages to zero from the first mip level on,
            // but 2x2 cells must lie wholly inside the region.
            let cell_ok = (0..2).all(|dy| (0..2).all(|dx| lod.data[[y / 2 * 2 + dy, x / 2 * 2 + dx]] >= 1.0));
            if *l >= 1.0 && cell_ok {
                let s = if (x + y) % 2 == 0 { 0.04 } else { -0.04 };
                chans[0][[y, x]] += s;
            }
        }
        let i = Image::new(chans).unwrap();
        let lp = blur_lowpass_loss(&i, &t, &ctx).unwrap();
        let m = mse_loss(&i, &t).unwrap();
        assert!(m > 0.0);
        assert!(lp < 1e-3 * m, "{lp} vs {m}");
    }

    #[test]
    fn metamer_target_is_deterministic() {
        let t = noise(1, 64, 64, 10);
        let i = noise(1, 64, 64, 11);
        let ctx = GazeContext::default();
        assert_eq!(
            metamer_target_loss(&i, &t, &ctx, 5).unwrap(),
            metamer_target_loss(&i, &t, &ctx, 5).unwrap()
        );
    }

    #[test]
    fn loss_names_round_trip() {
        for k in LossKind::ALL {
            assert_eq!(k.name().parse::<LossKind>().unwrap(), k);
        }
        assert!("sharp".parse::<LossKind>().is_err());
    }

    #[test]
    fn image_gradients_match_finite_differences() {
        let ctx = GazeContext::default();
        for channels in [1, 3] {
            let t = noise(channels, 32, 32, 20);
            let img = noise(channels, 32, 32, 21);
            for kind in LossKind::ALL {
                let obj = build_objective(kind, &t, &ctx, &LossConfig::default(), 1).unwrap();
                let (frac, worst) = check_gradient(obj.as_ref(), &img, 200);
                assert!(frac >= 0.95 && worst <= 1e-2, "{kind} c={channels}: {frac} {worst}");
            }
        }
    }

    #[test]
    fn l1_gradient_matches_away_from_kinks() {
        let ctx = GazeContext::default();
        let cfg = LossConfig {
            feature_norm: FeatureNorm::L1,
            ..LossConfig::default()
        };
        let t = noise(1, 32, 32, 22);
        let obj = MetamericObjective::new(&t, &ctx, &cfg).unwrap();
        let (frac, _) = check_gradient(&obj, &noise(1, 32, 32, 23), 200);
        assert!(frac >= 0.95, "{frac}");
    }
}
