//! Unitary 2D FFT on row-major complex grids.

use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::par;

const ROWS_PER_TASK: usize = 16;

/// Planned forward and inverse 2D transforms for a fixed grid shape.
///
/// Both directions are scaled by `1/sqrt(width * height)`, so the transform is
/// unitary and preserves `sum |u|^2`.
#[derive(Clone)]
pub struct Fft2 {
    width: usize,
    height: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish()
    }
}

impl Fft2 {
    pub fn new(width: usize, height: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            width,
            height,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn forward(&self, grid: &mut Array2<Complex64>) {
        self.run(grid, &self.row_fwd, &self.col_fwd);
    }

    pub fn inverse(&self, grid: &mut Array2<Complex64>) {
        self.run(grid, &self.row_inv, &self.col_inv);
    }

    fn run(&self, grid: &mut Array2<Complex64>, rows: &Arc<dyn Fft<f64>>, cols: &Arc<dyn Fft<f64>>) {
        let (h, w) = grid.dim();
        assert_eq!((w, h), (self.width, self.height), "grid shape does not match plan");
        let data = grid
            .as_slice_mut()
            .expect("complex grids are kept in standard layout");
        transform_rows(data, w, rows);

        let mut transposed = transpose(data, w, h);
        transform_rows(&mut transposed, h, cols);
        let back = transpose(&transposed, h, w);

        let scale = 1.0 / ((w * h) as f64).sqrt();
        for (dst, src) in data.iter_mut().zip(back) {
            *dst = src * scale;
        }
    }
}

fn transform_rows(data: &mut [Complex64], len: usize, fft: &Arc<dyn Fft<f64>>) {
    par::for_each_chunk_mut(data, len * ROWS_PER_TASK, |_, chunk| {
        let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        fft.process_with_scratch(chunk, &mut scratch);
    });
}

/// Transposes a `rows x cols` row-major buffer into `cols x rows`.
fn transpose(data: &[Complex64], cols: usize, rows: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::default(); data.len()];
    const TILE: usize = 32;
    for r0 in (0..rows).step_by(TILE) {
        for c0 in (0..cols).step_by(TILE) {
            for r in r0..(r0 + TILE).min(rows) {
                for c in c0..(c0 + TILE).min(cols) {
                    out[c * rows + r] = data[r * cols + c];
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn naive_dft(grid: &Array2<Complex64>) -> Array2<Complex64> {
        let (h, w) = grid.dim();
        let norm = 1.0 / ((w * h) as f64).sqrt();
        Array2::from_shape_fn((h, w), |(ky, kx)| {
            let mut acc = Complex64::default();
            for y in 0..h {
                for x in 0..w {
                    let angle = -2.0 * PI * ((kx * x) as f64 / w as f64 + (ky * y) as f64 / h as f64);
                    acc += grid[[y, x]] * Complex64::from_polar(1.0, angle);
                }
            }
            acc * norm
        })
    }

    #[test]
    fn matches_naive_dft_on_rectangular_grid() {
        let grid = Array2::from_shape_fn((6, 10), |(y, x)| {
            Complex64::new((x as f64 * 0.7).sin() + y as f64, (y * x) as f64 * 0.1)
        });
        let mut fast = grid.clone();
        Fft2::new(10, 6).forward(&mut fast);
        let slow = naive_dft(&grid);
        for (a, b) in fast.iter().zip(slow.iter()) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn inverse_undoes_forward() {
        let grid = Array2::from_shape_fn((40, 24), |(y, x)| Complex64::new(x as f64, -(y as f64)));
        let plan = Fft2::new(24, 40);
        let mut work = grid.clone();
        plan.forward(&mut work);
        plan.inverse(&mut work);
        for (a, b) in work.iter().zip(grid.iter()) {
            assert!((a - b).norm() < 1e-9);
        }
    }
}
