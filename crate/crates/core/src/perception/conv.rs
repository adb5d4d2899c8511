//! Small linear image operators used by the pyramid, each with its exact adjoint.

use crate::raster::Grid;

pub type Kernel5 = [[f64; 5]; 5];

/// Reflect (mirror without edge repeat) an index in `-2..n+2` into `0..n`.
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * n - 2 - i
    } else {
        i
    };
    r as usize
}

fn pad_reflect(src: &Grid) -> Grid {
    let (h, w) = src.dim();
    Grid::from_shape_fn((h + 4, w + 4), |(y, x)| {
        src[[reflect(y as isize - 2, h), reflect(x as isize - 2, w)]]
    })
}

/// Correlates `src` with a 5x5 kernel under reflect padding.
pub(crate) fn correlate(src: &Grid, k: &Kernel5) -> Grid {
    let (h, w) = src.dim();
    let padded = pad_reflect(src);
    let p = padded.as_slice().expect("standard layout");
    let pw = w + 4;
    let mut out = Grid::zeros((h, w));
    let o = out.as_slice_mut().expect("standard layout");
    for y in 0..h {
        let row = &mut o[y * w..(y + 1) * w];
        for (ky, krow) in k.iter().enumerate() {
            let src_row = &p[(y + ky) * pw..(y + ky + 1) * pw];
            for (kx, &kv) in krow.iter().enumerate() {
                if kv == 0.0 {
                    continue;
                }
                for (dst, s) in row.iter_mut().zip(&src_row[kx..kx + w]) {
                    *dst += kv * s;
                }
            }
        }
    }
    out
}

/// Adjoint of [`correlate`] with the same kernel.
pub(crate) fn correlate_adjoint(grad: &Grid, k: &Kernel5) -> Grid {
    let (h, w) = grad.dim();
    let pw = w + 4;
    let mut padded = vec![0.0; (h + 4) * pw];
    let g = grad.as_slice().expect("standard layout");
    for y in 0..h {
        let grow = &g[y * w..(y + 1) * w];
        for (ky, krow) in k.iter().enumerate() {
            let dst_row = &mut padded[(y + ky) * pw..(y + ky + 1) * pw];
            for (kx, &kv) in krow.iter().enumerate() {
                if kv == 0.0 {
                    continue;
                }
                for (dst, s) in dst_row[kx..kx + w].iter_mut().zip(grow) {
                    *dst += kv * s;
                }
            }
        }
    }
    let mut out = Grid::zeros((h, w));
    for py in 0..h + 4 {
        let sy = reflect(py as isize - 2, h);
        for px in 0..w + 4 {
            let sx = reflect(px as isize - 2, w);
            out[[sy, sx]] += padded[py * pw + px];
        }
    }
    out
}

/// Keeps every second sample: output has `ceil(n/2)` samples per axis.
pub(crate) fn decimate(src: &Grid) -> Grid {
    let (h, w) = src.dim();
    Grid::from_shape_fn((h.div_ceil(2), w.div_ceil(2)), |(y, x)| src[[2 * y, 2 * x]])
}

pub(crate) fn decimate_adjoint(grad: &Grid, h: usize, w: usize) -> Grid {
    let mut out = Grid::zeros((h, w));
    for ((y, x), g) in grad.indexed_iter() {
        out[[2 * y, 2 * x]] = *g;
    }
    out
}

/// Two-tap linear interpolation weights for upsampling `n_coarse` samples to `n_fine`.
fn upsample_taps(n_fine: usize, n_coarse: usize) -> Vec<(usize, usize, f64)> {
    (0..n_fine)
        .map(|i| {
            if i % 2 == 0 {
                (i / 2, i / 2, 0.0)
            } else {
                let lo = (i - 1) / 2;
                let hi = ((i + 1) / 2).min(n_coarse - 1);
                (lo, hi, 0.5)
            }
        })
        .collect()
}

/// Linear-interpolation upsampling of a decimated grid back to `h x w`.
/// Weights at every output sample sum to one, so constants are preserved exactly.
pub(crate) fn interpolate(src: &Grid, h: usize, w: usize) -> Grid {
    let (sh, sw) = src.dim();
    let ty = upsample_taps(h, sh);
    let tx = upsample_taps(w, sw);
    Grid::from_shape_fn((h, w), |(y, x)| {
        let (y0, y1, fy) = ty[y];
        let (x0, x1, fx) = tx[x];
        let top = src[[y0, x0]] * (1.0 - fx) + src[[y0, x1]] * fx;
        let bottom = src[[y1, x0]] * (1.0 - fx) + src[[y1, x1]] * fx;
        top * (1.0 - fy) + bottom * fy
    })
}

pub(crate) fn interpolate_adjoint(grad: &Grid, sh: usize, sw: usize) -> Grid {
    let (h, w) = grad.dim();
    let ty = upsample_taps(h, sh);
    let tx = upsample_taps(w, sw);
    let mut out = Grid::zeros((sh, sw));
    for ((y, x), g) in grad.indexed_iter() {
        let (y0, y1, fy) = ty[y];
        let (x0, x1, fx) = tx[x];
        out[[y0, x0]] += g * (1.0 - fy) * (1.0 - fx);
        out[[y0, x1]] += g * (1.0 - fy) * fx;
        out[[y1, x0]] += g * fy * (1.0 - fx);
        out[[y1, x1]] += g * fy * fx;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(h: usize, w: usize, rng: &mut ChaCha8Rng) -> Grid {
        Grid::from_shape_fn((h, w), |_| rng.gen_range(-1.0..1.0))
    }

    fn dot(a: &Grid, b: &Grid) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    // <A x, y> == <x, A^T y> for every operator pair.
    #[test]
    fn adjoint_pairs_satisfy_dot_product_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut k = [[0.0; 5]; 5];
        for row in &mut k {
            for v in row.iter_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
        }
        for (h, w) in [(9, 13), (8, 8), (5, 3)] {
            let x = random(h, w, &mut rng);
            let y = random(h, w, &mut rng);
            let lhs = dot(&correlate(&x, &k), &y);
            let rhs = dot(&x, &correlate_adjoint(&y, &k));
            assert!((lhs - rhs).abs() < 1e-10);

            let yd = random(h.div_ceil(2), w.div_ceil(2), &mut rng);
            let lhs = dot(&decimate(&x), &yd);
            let rhs = dot(&x, &decimate_adjoint(&yd, h, w));
            assert!((lhs - rhs).abs() < 1e-10);

            let c = random(h.div_ceil(2), w.div_ceil(2), &mut rng);
            let lhs = dot(&interpolate(&c, h, w), &y);
            let rhs = dot(&c, &interpolate_adjoint(&y, c.nrows(), c.ncols()));
            assert!((lhs - rhs).abs() < 1e-10);
        }
    }

    #[test]
    fn interpolation_preserves_constants() {
        for (h, w) in [(7usize, 8usize), (8, 7), (16, 16)] {
            let c = Grid::from_elem((h.div_ceil(2), w.div_ceil(2)), 0.625);
            assert!(interpolate(&c, h, w).iter().all(|v| *v == 0.625));
        }
    }

    #[test]
    fn reflect_mirrors_without_repeating_edge() {
        assert_eq!(reflect(-1, 5), 1);
        assert_eq!(reflect(-2, 5), 2);
        assert_eq!(reflect(5, 5), 3);
        assert_eq!(reflect(6, 5), 2);
    }
}
