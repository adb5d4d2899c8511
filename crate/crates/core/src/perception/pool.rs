//! Spatially varying lowpass: trilinear sampling of a MIP chain at a per-pixel LoD.

use super::lod::LodMap;
use super::mipmap::{self, mip_dims, Mipmap};
use crate::error::{Error, Result};
use crate::raster::Grid;

#[derive(Debug, Clone, Copy)]
struct AxisTap {
    i0: u32,
    i1: u32,
    f: f64,
}

/// Bilinear taps along one axis for MIP level `k`: sample position
/// `(i + 0.5) / 2^k - 0.5`, clamped to the level's extent.
fn axis_taps(n0: usize, nk: usize, k: usize) -> Vec<AxisTap> {
    let scale = 1.0 / (1u64 << k) as f64;
    (0..n0)
        .map(|i| {
            let u = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (nk - 1) as f64);
            let i0 = u.floor() as usize;
            let i1 = (i0 + 1).min(nk - 1);
            AxisTap {
                i0: i0 as u32,
                i1: i1 as u32,
                f: u - i0 as f64,
            }
        })
        .collect()
}

/// Precomputed sampling pattern for one LoD map; reusable across bands of the same size.
#[derive(Debug, Clone)]
pub struct PoolPlan {
    height: usize,
    width: usize,
    levels: Vec<(usize, usize)>,
    /// Per pixel: lower level and blend fraction toward the next level.
    lower: Vec<u8>,
    frac: Vec<f64>,
    xs: Vec<Vec<AxisTap>>,
    ys: Vec<Vec<AxisTap>>,
}

impl PoolPlan {
    pub fn new(lod: &LodMap) -> Self {
        let (h, w) = lod.data.dim();
        let all = mip_dims(h, w);
        let max_lod = lod.data.iter().fold(0.0f64, |m, v| m.max(*v));
        let used = (max_lod.ceil() as usize + 1).min(all.len());
        let levels = all[..used].to_vec();
        let top = (used - 1) as f64;
        let mut lower = Vec::with_capacity(h * w);
        let mut frac = Vec::with_capacity(h * w);
        for &l in lod.data.iter() {
            let l = l.clamp(0.0, top);
            let k = l.floor();
            lower.push(k as u8);
            frac.push(l - k);
        }
        let xs = levels.iter().enumerate().map(|(k, &(_, nw))| axis_taps(w, nw, k)).collect();
        let ys = levels.iter().enumerate().map(|(k, &(nh, _))| axis_taps(h, nh, k)).collect();
        Self {
            height: h,
            width: w,
            levels,
            lower,
            frac,
            xs,
            ys,
        }
    }

    pub fn dim(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// Number of MIP levels the plan reads.
    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    fn bilinear(&self, level: &Grid, k: usize, y: usize, x: usize) -> f64 {
        let ty = self.ys[k][y];
        let tx = self.xs[k][x];
        let (y0, y1, x0, x1) = (ty.i0 as usize, ty.i1 as usize, tx.i0 as usize, tx.i1 as usize);
        let top = level[[y0, x0]] + (level[[y0, x1]] - level[[y0, x0]]) * tx.f;
        let bottom = level[[y1, x0]] + (level[[y1, x1]] - level[[y1, x0]]) * tx.f;
        top + (bottom - top) * ty.f
    }

    fn bilinear_adjoint(&self, grads: &mut [Grid], k: usize, y: usize, x: usize, g: f64) {
        let ty = self.ys[k][y];
        let tx = self.xs[k][x];
        let (y0, y1, x0, x1) = (ty.i0 as usize, ty.i1 as usize, tx.i0 as usize, tx.i1 as usize);
        let level = &mut grads[k];
        level[[y0, x0]] += g * (1.0 - ty.f) * (1.0 - tx.f);
        level[[y0, x1]] += g * (1.0 - ty.f) * tx.f;
        level[[y1, x0]] += g * ty.f * (1.0 - tx.f);
        level[[y1, x1]] += g * ty.f * tx.f;
    }

    /// Samples a MIP chain built over a band of this plan's size.
    pub fn sample(&self, mip: &Mipmap) -> Grid {
        let mut out = Grid::zeros((self.height, self.width));
        let o = out.as_slice_mut().expect("standard layout");
        for y in 0..self.height {
            for x in 0..self.width {
                let i = y * self.width + x;
                let k = self.lower[i] as usize;
                let t = self.frac[i];
                let mut v = self.bilinear(&mip.levels[k], k, y, x);
                if t > 0.0 {
                    let hi = self.bilinear(&mip.levels[k + 1], k + 1, y, x);
                    v += (hi - v) * t;
                }
                o[i] = v;
            }
        }
        out
    }

    /// Pools a band: build its MIP chain and sample it.
    pub fn pool(&self, band: &Grid) -> Grid {
        debug_assert_eq!(band.dim(), (self.height, self.width));
        self.sample(&mipmap::build(band, self.levels.len()))
    }

    /// Adjoint of [`Self::pool`].
    pub fn pool_adjoint(&self, grad: &Grid) -> Grid {
        let mut grads: Vec<Grid> = self.levels.iter().map(|&d| Grid::zeros(d)).collect();
        for y in 0..self.height {
            for x in 0..self.width {
                let i = y * self.width + x;
                let g = grad[[y, x]];
                if g == 0.0 {
                    continue;
                }
                let k = self.lower[i] as usize;
                let t = self.frac[i];
                self.bilinear_adjoint(&mut grads, k, y, x, g * (1.0 - t));
                if t > 0.0 {
                    self.bilinear_adjoint(&mut grads, k + 1, y, x, g * t);
                }
            }
        }
        mipmap::adjoint(grads)
    }
}

/// Pools `band` with a per-pixel LoD.
pub fn pool(band: &Grid, lod: &LodMap) -> Result<Grid> {
    if band.dim() != lod.data.dim() {
        return Err(Error::input(format!(
            "band is {:?} but LoD map is {:?}",
            band.dim(),
            lod.data.dim()
        )));
    }
    if band.is_empty() {
        return Err(Error::input("cannot pool an empty band"));
    }
    Ok(PoolPlan::new(lod).pool(band))
}
