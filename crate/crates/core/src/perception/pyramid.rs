//! Two-orientation steerable pyramid built from 5x5 kernels.
//!
//! Analysis of a channel `x`:
//!
//! ```text
//! highpass = x - B*x,   l_0 = B*x
//! level i:  d_i = l_i - up(down(B*l_i))
//!           horizontal_i = (d_i - Q*d_i) / 2,  vertical_i = (d_i + Q*d_i) / 2
//!           l_{i+1} = down(B*l_i)
//! lowpass = l_L
//! ```
//!
//! `B` is the 5x5 binomial lowpass and `Q` an orientation kernel whose response
//! approximates `cos(2 theta)` over the bandpass, so the two oriented bands act
//! as `cos^2` / `sin^2` angular windows. Bands at each level sum to the
//! bandpass, so synthesis is exact up to floating-point round-off.

use super::conv;
pub use super::conv::Kernel5;
use crate::error::{Error, Result};
use crate::raster::Grid;

const fn binomial() -> Kernel5 {
    let t = [1.0, 4.0, 6.0, 4.0, 1.0];
    let mut k = [[0.0; 5]; 5];
    let mut y = 0;
    while y < 5 {
        let mut x = 0;
        while x < 5 {
            k[y][x] = t[y] * t[x] / 256.0;
            x += 1;
        }
        y += 1;
    }
    k
}

/// 5x5 binomial lowpass `B`, applied as a correlation.
pub const LOWPASS: Kernel5 = binomial();

const QA: f64 = -0.297;
const QB: f64 = -0.074;
const QC: f64 = 0.052;

/// Orientation kernel: positive response for horizontal frequencies, negative for vertical.
pub const ORIENTATION: Kernel5 = [
    [0.0, QC, -QB, QC, 0.0],
    [-QC, 0.0, -QA, 0.0, -QC],
    [QB, QA, 0.0, QA, QB],
    [-QC, 0.0, -QA, 0.0, -QC],
    [0.0, QC, -QB, QC, 0.0],
];

/// Smallest side allowed for the lowpass residual.
const MIN_RESIDUAL: usize = 8;

/// Oriented bands of one pyramid level.
#[derive(Debug, Clone, PartialEq)]
pub struct PyramidLevel {
    /// Responds to horizontally oriented structure (intensity varying along y).
    pub horizontal: Grid,
    /// Responds to vertically oriented structure (intensity varying along x).
    pub vertical: Grid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pyramid {
    pub highpass: Grid,
    pub levels: Vec<PyramidLevel>,
    pub lowpass: Grid,
}

/// Identifies one band of a pyramid in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BandKind {
    Highpass,
    Horizontal(usize),
    Vertical(usize),
    Lowpass,
}

impl BandKind {
    /// Dyadic level whose resolution the band is stored at.
    pub fn scale(&self, level_count: usize) -> usize {
        match *self {
            BandKind::Highpass => 0,
            BandKind::Horizontal(i) | BandKind::Vertical(i) => i,
            BandKind::Lowpass => level_count,
        }
    }

    /// Canonical band order: highpass, (horizontal, vertical) per level, lowpass.
    pub fn all(level_count: usize) -> Vec<BandKind> {
        let mut kinds = vec![BandKind::Highpass];
        for i in 0..level_count {
            kinds.push(BandKind::Horizontal(i));
            kinds.push(BandKind::Vertical(i));
        }
        kinds.push(BandKind::Lowpass);
        kinds
    }
}

impl std::fmt::Display for BandKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BandKind::Highpass => write!(f, "highpass"),
            BandKind::Horizontal(i) => write!(f, "horizontal{i}"),
            BandKind::Vertical(i) => write!(f, "vertical{i}"),
            BandKind::Lowpass => write!(f, "lowpass"),
        }
    }
}

impl Pyramid {
    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn band(&self, kind: BandKind) -> &Grid {
        match kind {
            BandKind::Highpass => &self.highpass,
            BandKind::Horizontal(i) => &self.levels[i].horizontal,
            BandKind::Vertical(i) => &self.levels[i].vertical,
            BandKind::Lowpass => &self.lowpass,
        }
    }

    pub fn band_mut(&mut self, kind: BandKind) -> &mut Grid {
        match kind {
            BandKind::Highpass => &mut self.highpass,
            BandKind::Horizontal(i) => &mut self.levels[i].horizontal,
            BandKind::Vertical(i) => &mut self.levels[i].vertical,
            BandKind::Lowpass => &mut self.lowpass,
        }
    }

    /// Bands in canonical order.
    pub fn bands(&self) -> Vec<(BandKind, &Grid)> {
        BandKind::all(self.level_count())
            .into_iter()
            .map(|k| (k, self.band(k)))
            .collect()
    }
}

/// Default depth: levels while the band's short side stays at least 16 px, capped at 5.
pub fn default_level_count(width: usize, height: usize) -> usize {
    let mut side = width.min(height);
    let mut levels = 0;
    while side >= 16 && levels < 5 {
        levels += 1;
        side /= 2;
    }
    levels
}

pub(crate) fn check_level_count(width: usize, height: usize, level_count: usize) -> Result<()> {
    let need = (1usize << level_count.min(30)) * MIN_RESIDUAL;
    if level_count > 30 || width.min(height) < need {
        return Err(Error::config(format!(
            "{level_count} pyramid levels need at least {need} px per side, image is {width}x{height}"
        )));
    }
    Ok(())
}

fn split_orientations(d: &Grid) -> PyramidLevel {
    let q = conv::correlate(d, &ORIENTATION);
    let horizontal = (d - &q) * 0.5;
    let vertical = d - &horizontal;
    PyramidLevel {
        horizontal,
        vertical,
    }
}

pub fn build_steerable_pyramid(channel: &Grid, level_count: usize) -> Result<Pyramid> {
    let (h, w) = channel.dim();
    check_level_count(w, h, level_count)?;
    let mut low = conv::correlate(channel, &LOWPASS);
    let highpass = channel - &low;
    let mut levels = Vec::with_capacity(level_count);
    for _ in 0..level_count {
        let (lh, lw) = low.dim();
        let next = conv::decimate(&conv::correlate(&low, &LOWPASS));
        let bandpass = &low - &conv::interpolate(&next, lh, lw);
        levels.push(split_orientations(&bandpass));
        low = next;
    }
    Ok(Pyramid {
        highpass,
        levels,
        lowpass: low,
    })
}

fn check_complete(p: &Pyramid) -> Result<()> {
    let (h, w) = p.highpass.dim();
    if h == 0 || w == 0 {
        return Err(Error::input("pyramid highpass band is empty"));
    }
    let mut dims = (h, w);
    for (i, level) in p.levels.iter().enumerate() {
        if level.horizontal.dim() != dims || level.vertical.dim() != dims {
            return Err(Error::input(format!("pyramid level {i} bands are missing or misshapen")));
        }
        dims = (dims.0.div_ceil(2), dims.1.div_ceil(2));
    }
    if p.lowpass.dim() != dims {
        return Err(Error::input("pyramid lowpass residual is missing or misshapen"));
    }
    Ok(())
}

pub fn reconstruct_from_pyramid(p: &Pyramid) -> Result<Grid> {
    check_complete(p)?;
    let mut low = p.lowpass.clone();
    for level in p.levels.iter().rev() {
        let (h, w) = level.horizontal.dim();
        low = &level.horizontal + &level.vertical + conv::interpolate(&low, h, w);
    }
    Ok(&p.highpass + &low)
}

/// Adjoint of the analysis operator: maps per-band gradients to a gradient on the input.
pub fn pyramid_adjoint(grads: &Pyramid) -> Result<Grid> {
    check_complete(grads)?;
    let mut grad_low = grads.lowpass.clone();
    for level in grads.levels.iter().rev() {
        let (h, w) = level.horizontal.dim();
        let diff = &level.vertical - &level.horizontal;
        let grad_band = (&level.horizontal + &level.vertical) * 0.5
            + conv::correlate_adjoint(&diff, &ORIENTATION) * 0.5;
        let (ch, cw) = grad_low.dim();
        let through_next = &grad_low - &conv::interpolate_adjoint(&grad_band, ch, cw);
        grad_low = grad_band + conv::correlate_adjoint(&conv::decimate_adjoint(&through_next, h, w), &LOWPASS);
    }
    let diff = &grad_low - &grads.highpass;
    Ok(&grads.highpass + &conv::correlate_adjoint(&diff, &LOWPASS))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn psnr(a: &Grid, b: &Grid) -> f64 {
        let peak = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mse = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64;
        10.0 * (peak * peak / mse).log10()
    }

    fn energy(g: &Grid) -> f64 {
        g.iter().map(|v| v * v).sum()
    }

    #[test]
    fn level_dimensions_are_dyadic() {
        let img = Grid::from_elem((67, 130), 0.3);
        let p = build_steerable_pyramid(&img, 3).unwrap();
        assert_eq!(p.levels[0].horizontal.dim(), (67, 130));
        assert_eq!(p.levels[1].vertical.dim(), (34, 65));
        assert_eq!(p.levels[2].vertical.dim(), (17, 33));
        assert_eq!(p.lowpass.dim(), (9, 17));
    }

    #[test]
    fn constant_image_has_only_lowpass_content() {
        let img = Grid::from_elem((64, 64), 0.42);
        let p = build_steerable_pyramid(&img, 3).unwrap();
        assert!(p.highpass.iter().all(|v| v.abs() < 1e-12));
        for level in &p.levels {
            assert!(level.horizontal.iter().chain(level.vertical.iter()).all(|v| v.abs() < 1e-12));
        }
        assert!(p.lowpass.iter().all(|v| (v - 0.42).abs() < 1e-12));
        let back = reconstruct_from_pyramid(&p).unwrap();
        assert!(back.iter().all(|v| (v - 0.42).abs() < 1e-6));
    }

    #[test]
    fn zeros_reconstruct_to_zeros() {
        let p = build_steerable_pyramid(&Grid::zeros((32, 32)), 2).unwrap();
        assert!(reconstruct_from_pyramid(&p).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn step_edge_energy_lands_in_one_orientation() {
        // Horizontal edge: intensity changes along y only.
        let img = Grid::from_shape_fn((64, 64), |(y, _)| if y < 32 { 0.0 } else { 1.0 });
        let p = build_steerable_pyramid(&img, 3).unwrap();
        let horizontal: f64 = p.levels.iter().map(|l| energy(&l.horizontal)).sum();
        let vertical: f64 = p.levels.iter().map(|l| energy(&l.vertical)).sum();
        let ratio = vertical / horizontal;
        assert!(ratio < 0.1, "orthogonal/dominant energy ratio {ratio}");
        // Frozen regression value for the embedded filter set.
        assert!((ratio - 0.067_87).abs() < 5e-4, "ratio drifted: {ratio}");

        let transposed = img.t().to_owned();
        let p = build_steerable_pyramid(&transposed, 3).unwrap();
        let horizontal: f64 = p.levels.iter().map(|l| energy(&l.horizontal)).sum();
        let vertical: f64 = p.levels.iter().map(|l| energy(&l.vertical)).sum();
        assert!((horizontal / vertical - ratio).abs() < 1e-9);
    }

    #[test]
    fn random_image_round_trip_exceeds_40_db() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let img = Grid::from_shape_fn((256, 256), |_| rng.gen_range(0.0..1.0));
        let p = build_steerable_pyramid(&img, 4).unwrap();
        let back = reconstruct_from_pyramid(&p).unwrap();
        assert!(psnr(&img, &back) >= 40.0);
    }

    #[test]
    fn too_many_levels_is_a_config_error() {
        let img = Grid::zeros((64, 64));
        assert!(build_steerable_pyramid(&img, 3).is_ok());
        assert!(matches!(build_steerable_pyramid(&img, 4), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn missing_bands_are_rejected() {
        let mut p = build_steerable_pyramid(&Grid::zeros((32, 32)), 2).unwrap();
        p.levels[1].vertical = Grid::zeros((0, 0));
        assert!(matches!(reconstruct_from_pyramid(&p), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn default_depth() {
        assert_eq!(default_level_count(32, 32), 2);
        assert_eq!(default_level_count(64, 64), 3);
        assert_eq!(default_level_count(128, 128), 4);
        assert_eq!(default_level_count(512, 512), 5);
        assert_eq!(default_level_count(1920, 1080), 5);
        for n in [32, 64, 128, 256, 512] {
            assert!(check_level_count(n, n, default_level_count(n, n)).is_ok());
        }
    }

    #[test]
    fn adjoint_satisfies_dot_product_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = Grid::from_shape_fn((37, 45), |_| rng.gen_range(-1.0..1.0));
        let analysis = build_steerable_pyramid(&x, 2).unwrap();
        let mut probe = analysis.clone();
        for kind in BandKind::all(2) {
            probe.band_mut(kind).mapv_inplace(|_| rng.gen_range(-1.0..1.0));
        }
        let lhs: f64 = BandKind::all(2)
            .into_iter()
            .map(|k| analysis.band(k).iter().zip(probe.band(k)).map(|(a, b)| a * b).sum::<f64>())
            .sum();
        let back = pyramid_adjoint(&probe).unwrap();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9, "{lhs} vs {rhs}");
    }
}
