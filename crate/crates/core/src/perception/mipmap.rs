//! Box-filtered MIP chains.

use crate::error::{Error, Result};
use crate::raster::Grid;

/// Level 0 is the source; level `k+1` is the 2x2 average of level `k`, with odd
/// sides padded by replicating the last row/column. The chain ends at 1x1.
#[derive(Debug, Clone, PartialEq)]
pub struct Mipmap {
    pub levels: Vec<Grid>,
}

/// Dimensions `(height, width)` of every level of a chain over `h x w`.
pub fn mip_dims(h: usize, w: usize) -> Vec<(usize, usize)> {
    let mut dims = vec![(h, w)];
    let (mut h, mut w) = (h, w);
    while h > 1 || w > 1 {
        h = h.div_ceil(2);
        w = w.div_ceil(2);
        dims.push((h, w));
    }
    dims
}

fn average_down(src: &Grid) -> Grid {
    let (h, w) = src.dim();
    let (nh, nw) = (h.div_ceil(2), w.div_ceil(2));
    Grid::from_shape_fn((nh, nw), |(y, x)| {
        let (y0, y1) = (2 * y, (2 * y + 1).min(h - 1));
        let (x0, x1) = (2 * x, (2 * x + 1).min(w - 1));
        0.25 * (src[[y0, x0]] + src[[y0, x1]] + src[[y1, x0]] + src[[y1, x1]])
    })
}

fn average_down_adjoint(grad: &Grid, h: usize, w: usize, into: &mut Grid) {
    for ((y, x), g) in grad.indexed_iter() {
        let q = 0.25 * g;
        let (y0, y1) = (2 * y, (2 * y + 1).min(h - 1));
        let (x0, x1) = (2 * x, (2 * x + 1).min(w - 1));
        into[[y0, x0]] += q;
        into[[y0, x1]] += q;
        into[[y1, x0]] += q;
        into[[y1, x1]] += q;
    }
}

pub fn make_mipmap(band: &Grid) -> Result<Mipmap> {
    if band.is_empty() {
        return Err(Error::input("cannot build a MIP chain over an empty grid"));
    }
    Ok(build(band, usize::MAX))
}

/// Builds at most `max_levels` levels.
pub(crate) fn build(band: &Grid, max_levels: usize) -> Mipmap {
    let mut levels = vec![band.clone()];
    while levels.len() < max_levels {
        let last = levels.last().expect("nonempty");
        if last.nrows() == 1 && last.ncols() == 1 {
            break;
        }
        levels.push(average_down(last));
    }
    Mipmap { levels }
}

/// Adjoint of [`build`]: folds per-level gradients back onto level 0.
pub(crate) fn adjoint(mut grads: Vec<Grid>) -> Grid {
    while grads.len() > 1 {
        let top = grads.pop().expect("len > 1");
        let below = grads.last_mut().expect("len >= 1");
        let (h, w) = below.dim();
        average_down_adjoint(&top, h, w, below);
    }
    grads.pop().expect("at least one level")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_chain() {
        let m = make_mipmap(&Grid::from_elem((4, 4), 0.7)).unwrap();
        assert_eq!(m.levels.len(), 3);
        assert_eq!(m.levels[1].dim(), (2, 2));
        assert_eq!(m.levels[2].dim(), (1, 1));
        for l in &m.levels {
            assert!(l.iter().all(|v| (v - 0.7).abs() < 1e-15));
        }
    }

    #[test]
    fn two_by_two_average() {
        let g = Grid::from_shape_vec((2, 2), vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let m = make_mipmap(&g).unwrap();
        assert_eq!(m.levels[1][[0, 0]], 0.5);
    }

    #[test]
    fn top_level_is_the_mean_for_power_of_two_grids() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = Grid::from_shape_fn((8, 8), |_| rng.gen_range(0.0..1.0));
        let m = make_mipmap(&g).unwrap();
        assert_eq!(m.levels.len(), 4);
        let mean = g.iter().sum::<f64>() / 64.0;
        assert!((m.levels[3][[0, 0]] - mean).abs() < 1e-6);
    }

    #[test]
    fn odd_sides_replicate_the_edge() {
        let g = Grid::from_shape_vec((1, 3), vec![1.0, 2.0, 5.0]).unwrap();
        let m = make_mipmap(&g).unwrap();
        assert_eq!(m.levels[1].as_slice().unwrap(), &[1.5, 5.0]);
        assert_eq!(mip_dims(1, 3), vec![(1, 3), (1, 2), (1, 1)]);
    }

    #[test]
    fn empty_grid_is_rejected() {
        assert!(make_mipmap(&Grid::zeros((0, 3))).is_err());
    }

    #[test]
    fn adjoint_satisfies_dot_product_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = Grid::from_shape_fn((11, 6), |_| rng.gen_range(-1.0..1.0));
        let m = build(&x, usize::MAX);
        let probes: Vec<Grid> = m.levels.iter().map(|l| l.mapv(|_| rng.gen_range(-1.0..1.0))).collect();
        let lhs: f64 = m
            .levels
            .iter()
            .zip(&probes)
            .map(|(a, b)| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>())
            .sum();
        let back = adjoint(probes);
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }
}
