//! Deterministic procedural test images with natural-image statistics.
//!
//! Every image has a roughly 1/f amplitude spectrum, hard edges and textured
//! regions, and values in `[0, 1]`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::raster::{Grid, Image};

/// Axis-aligned pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Rect {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.x + self.width && y >= self.y && y < self.y + self.height
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scene {
    /// Fractal 1/f noise.
    Clouds,
    /// Occluding discs and boxes over a textured ground.
    Shapes,
    /// Patches of oriented gratings.
    Weave,
    /// Smooth sky over a rough horizon; the sky is a designated flat region.
    Horizon,
    /// Blurred tiles with fine grain.
    Tiles,
}

impl Scene {
    pub const ALL: [Scene; 5] = [Scene::Clouds, Scene::Shapes, Scene::Weave, Scene::Horizon, Scene::Tiles];

    pub fn name(self) -> &'static str {
        match self {
            Scene::Clouds => "clouds",
            Scene::Shapes => "shapes",
            Scene::Weave => "weave",
            Scene::Horizon => "horizon",
            Scene::Tiles => "tiles",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusImage {
    pub name: &'static str,
    pub image: Image,
    /// Region of near-constant intensity, when the scene has one.
    pub flat_region: Option<Rect>,
}

/// Zero-mean, unit-variance noise with amplitude spectrum `1/f^exponent`.
pub fn fractal_noise(width: usize, height: usize, exponent: f64, seed: u64) -> Grid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spec = ndarray::Array2::<Complex64>::zeros((height, width));
    for y in 0..height {
        let fy = signed_freq(y, height) / height as f64;
        for x in 0..width {
            let fx = signed_freq(x, width) / width as f64;
            let f = (fx * fx + fy * fy).sqrt();
            let amp = if f == 0.0 { 0.0 } else { f.powf(-exponent) };
            let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let g: f64 = rng.gen::<f64>();
            spec[[y, x]] = Complex64::from_polar(amp * (0.5 + g), a);
        }
    }
    Fft2::new(width, height).inverse(&mut spec);
    let mut out = spec.mapv(|c| c.re);
    let m = out.mean().unwrap_or(0.0);
    out -= m;
    let sd = out.mapv(|v| v * v).mean().unwrap_or(0.0).sqrt();
    if sd > 0.0 {
        out /= sd;
    }
    out
}

fn signed_freq(i: usize, n: usize) -> f64 {
    if i <= (n - 1) / 2 {
        i as f64
    } else {
        i as f64 - n as f64
    }
}

fn squash(g: &Grid, lo: f64, hi: f64) -> Grid {
    let min = g.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (max - min).max(1e-12);
    g.mapv(|v| lo + (hi - lo) * (v - min) / span)
}

fn smoothstep(edge: f64, softness: f64, v: f64) -> f64 {
    let t = ((v - edge) / softness + 0.5).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

fn luminance(scene: Scene, w: usize, h: usize, seed: u64) -> (Grid, Option<Rect>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let (wf, hf) = (w as f64, h as f64);
    match scene {
        Scene::Clouds => (squash(&fractal_noise(w, h, 1.0, seed), 0.05, 0.95), None),
        Scene::Shapes => {
            let ground = fractal_noise(w, h, 1.2, seed);
            let mut img = Grid::from_shape_fn((h, w), |(y, x)| {
                0.35 + 0.2 * (x as f64 / wf) + 0.05 * ground[[y, x]].clamp(-3.0, 3.0)
            });
            for _ in 0..9 {
                let cx = rng.gen_range(0.0..wf);
                let cy = rng.gen_range(0.0..hf);
                let r = rng.gen_range(0.05..0.2) * wf.min(hf);
                let level = rng.gen_range(0.05..0.95);
                let disc = rng.gen_bool(0.5);
                for y in 0..h {
                    for x in 0..w {
                        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                        let inside = if disc {
                            (dx * dx + dy * dy).sqrt() < r
                        } else {
                            dx.abs() < r && dy.abs() < 0.6 * r
                        };
                        if inside {
                            img[[y, x]] = level;
                        }
                    }
                }
            }
            (img.mapv(|v| v.clamp(0.0, 1.0)), None)
        }
        Scene::Weave => {
            let cells = 4;
            let params: Vec<(f64, f64, f64)> = (0..cells * cells)
                .map(|_| {
                    (
                        rng.gen_range(0.0..std::f64::consts::PI),
                        rng.gen_range(0.04..0.3),
                        rng.gen_range(0.15..0.45),
                    )
                })
                .collect();
            let grain = fractal_noise(w, h, 1.0, seed);
            let img = Grid::from_shape_fn((h, w), |(y, x)| {
                let cell = (y * cells / h) * cells + x * cells / w;
                let (theta, freq, contrast) = params[cell];
                let u = x as f64 * theta.cos() + y as f64 * theta.sin();
                let v = 0.5 + contrast * (std::f64::consts::TAU * freq * u).sin() + 0.04 * grain[[y, x]];
                v.clamp(0.0, 1.0)
            });
            (img, None)
        }
        Scene::Horizon => {
            let ridge = fractal_noise(w, 1, 1.5, seed);
            let ground = fractal_noise(w, h, 1.0, seed.wrapping_add(1));
            let img = Grid::from_shape_fn((h, w), |(y, x)| {
                let line = hf * (0.55 + 0.08 * ridge[[0, x]].clamp(-2.5, 2.5));
                let sky = 0.7 - 0.1 * (y as f64 / hf);
                let land = 0.3 + 0.12 * ground[[y, x]].clamp(-2.5, 2.5);
                let t = smoothstep(line, 1.5, y as f64);
                (sky * (1.0 - t) + land * t).clamp(0.0, 1.0)
            });
            let flat = Rect {
                x: w / 8,
                y: h / 16,
                width: w * 3 / 4,
                height: h / 4,
            };
            (img, Some(flat))
        }
        Scene::Tiles => {
            let n = 8;
            let levels: Vec<f64> = (0..n * n).map(|_| rng.gen_range(0.1..0.9)).collect();
            let grain = fractal_noise(w, h, 0.6, seed);
            let img = Grid::from_shape_fn((h, w), |(y, x)| {
                let v = levels[(y * n / h) * n + x * n / w];
                (v + 0.05 * grain[[y, x]]).clamp(0.0, 1.0)
            });
            (img, None)
        }
    }
}

/// Renders one scene; colour scenes tint the luminance with smooth chroma fields.
pub fn scene_image(scene: Scene, width: usize, height: usize, channels: usize, seed: u64) -> Result<CorpusImage> {
    if width < 8 || height < 8 {
        return Err(Error::input("corpus images must be at least 8x8"));
    }
    if channels != 1 && channels != 3 {
        return Err(Error::input("corpus images have 1 or 3 channels"));
    }
    let (lum, flat_region) = luminance(scene, width, height, seed);
    let data = if channels == 1 {
        vec![lum]
    } else {
        let tints: Vec<Grid> = (0..3)
            .map(|c| fractal_noise(width, height, 2.0, seed.wrapping_add(100 + c)))
            .collect();
        (0..3)
            .map(|c| {
                let mut ch = lum.clone();
                ndarray::Zip::from(&mut ch)
                    .and(&tints[c])
                    .for_each(|v, t| *v = (*v * (1.0 + 0.15 * t.clamp(-2.0, 2.0))).clamp(0.0, 1.0));
                ch
            })
            .collect()
    };
    Ok(CorpusImage {
        name: scene.name(),
        image: Image::new(data)?,
        flat_region,
    })
}

/// All five scenes at one size.
pub fn corpus(width: usize, height: usize, channels: usize, seed: u64) -> Result<Vec<CorpusImage>> {
    Scene::ALL
        .iter()
        .enumerate()
        .map(|(i, s)| scene_image(*s, width, height, channels, seed.wrapping_add(i as u64 * 7919)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn images_are_in_range_and_deterministic() {
        let a = corpus(64, 48, 3, 1).unwrap();
        let b = corpus(64, 48, 3, 1).unwrap();
        assert_eq!(a, b);
        for img in &a {
            assert_eq!((img.image.width(), img.image.height()), (64, 48));
            for c in img.image.channels() {
                assert!(c.iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }

    #[test]
    fn images_are_not_flat() {
        for img in corpus(64, 64, 1, 3).unwrap() {
            let c = img.image.channel(0);
            let m = c.mean().unwrap();
            let var = c.mapv(|v| (v - m) * (v - m)).mean().unwrap();
            assert!(var > 1e-3, "{} variance {var}", img.name);
        }
    }

    #[test]
    fn horizon_sky_is_flat() {
        let img = scene_image(Scene::Horizon, 128, 128, 1, 5).unwrap();
        let r = img.flat_region.unwrap();
        let c = img.image.channel(0);
        let vals: Vec<f64> = (r.y..r.y + r.height)
            .flat_map(|y| (r.x..r.x + r.width).map(move |x| (x, y)))
            .map(|(x, y)| c[[y, x]])
            .collect();
        let max = vals.iter().cloned().fold(f64::MIN, f64::max);
        let min = vals.iter().cloned().fold(f64::MAX, f64::min);
        assert!(max - min < 0.05);
    }

    #[test]
    fn noise_has_falling_spectrum() {
        let n = fractal_noise(64, 64, 1.0, 9);
        let mut spec = n.mapv(|v| Complex64::new(v, 0.0));
        Fft2::new(64, 64).forward(&mut spec);
        let low: f64 = (1..4).map(|k| spec[[0, k]].norm_sqr()).sum();
        let high: f64 = (20..23).map(|k| spec[[0, k]].norm_sqr()).sum();
        assert!(low > 10.0 * high);
    }
}
