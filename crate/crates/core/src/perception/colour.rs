//! Full-range BT.601 YCbCr.

use crate::error::{Error, Result};
use crate::raster::{Grid, Image};

const FORWARD: [[f64; 3]; 3] = [
    [0.299, 0.587, 0.114],
    [-0.168_736, -0.331_264, 0.5],
    [0.5, -0.418_688, -0.081_312],
];
const OFFSET: [f64; 3] = [0.0, 0.5, 0.5];

fn inverse_matrix() -> [[f64; 3]; 3] {
    let m = FORWARD;
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let mut inv = [[0.0; 3]; 3];
    for (r, row) in inv.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            let (r1, r2) = ((c + 1) % 3, (c + 2) % 3);
            let (c1, c2) = ((r + 1) % 3, (r + 2) % 3);
            *v = (m[r1][c1] * m[r2][c2] - m[r1][c2] * m[r2][c1]) / det;
        }
    }
    inv
}

fn mix(channels: &[Grid], m: &[[f64; 3]; 3], offset: [f64; 3]) -> Vec<Grid> {
    (0..3)
        .map(|o| {
            let mut out = Grid::from_elem(channels[0].dim(), offset[o]);
            for (i, ch) in channels.iter().enumerate() {
                out.scaled_add(m[o][i], ch);
            }
            out
        })
        .collect()
}

/// Converts RGB grids to YCbCr; single-channel input passes through.
pub(crate) fn to_ycbcr(channels: &[Grid]) -> Vec<Grid> {
    if channels.len() != 3 {
        return channels.to_vec();
    }
    mix(channels, &FORWARD, OFFSET)
}

/// Inverse of [`to_ycbcr`].
pub(crate) fn to_rgb(channels: &[Grid]) -> Vec<Grid> {
    if channels.len() != 3 {
        return channels.to_vec();
    }
    let centred: Vec<Grid> = channels.iter().zip(OFFSET).map(|(c, o)| c - o).collect();
    mix(&centred, &inverse_matrix(), [0.0; 3])
}

/// Pulls YCbCr-space gradients back to RGB (transpose of the colour matrix).
pub(crate) fn to_ycbcr_adjoint(grads: &[Grid]) -> Vec<Grid> {
    if grads.len() != 3 {
        return grads.to_vec();
    }
    let mut t = [[0.0; 3]; 3];
    for (r, row) in FORWARD.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            t[c][r] = *v;
        }
    }
    mix(grads, &t, [0.0; 3])
}

/// Full-range BT.601 conversion of an RGB image in `[0, 1]`.
pub fn rgb_to_ycbcr(img: &Image) -> Result<Image> {
    if img.channel_count() != 3 {
        return Ok(img.clone());
    }
    if img.channels().iter().any(|c| c.iter().any(|v| *v > 1.0)) {
        return Err(Error::input("YCbCr conversion expects RGB values in [0, 1]"));
    }
    Ok(Image::from_parts(to_ycbcr(img.channels())))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Scalar BT.601 full-range conversion written out term by term.
    fn oracle(r: f64, g: f64, b: f64) -> [f64; 3] {
        let y = 0.299 * r + 0.587 * g + 0.114 * b;
        [y, 0.5 + 0.5 * (b - y) / (1.0 - 0.114), 0.5 + 0.5 * (r - y) / (1.0 - 0.299)]
    }

    fn pixel(rgb: [f64; 3]) -> [f64; 3] {
        let img = Image::new(rgb.iter().map(|v| Grid::from_elem((1, 1), *v)).collect()).unwrap();
        let out = rgb_to_ycbcr(&img).unwrap();
        [out.channel(0)[[0, 0]], out.channel(1)[[0, 0]], out.channel(2)[[0, 0]]]
    }

    #[test]
    fn reference_colours() {
        let black = pixel([0.0, 0.0, 0.0]);
        assert!((black[0]).abs() < 1e-12 && (black[1] - 0.5).abs() < 1e-12 && (black[2] - 0.5).abs() < 1e-12);
        let white = pixel([1.0, 1.0, 1.0]);
        assert!((white[0] - 1.0).abs() < 1e-12 && (white[1] - 0.5).abs() < 1e-6 && (white[2] - 0.5).abs() < 1e-6);
        let red = pixel([1.0, 0.0, 0.0]);
        for (got, want) in red.iter().zip([0.299, 0.331_264, 1.0]) {
            assert!((got - want).abs() < 1e-6);
        }
        for rgb in [[1.0, 0.0, 0.0], [0.2, 0.7, 0.1], [0.9, 0.4, 0.6]] {
            let want = oracle(rgb[0], rgb[1], rgb[2]);
            for (got, want) in pixel(rgb).iter().zip(want) {
                assert!((got - want).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn gray_passes_through() {
        let img = Image::gray(Grid::from_elem((2, 2), 0.3)).unwrap();
        assert_eq!(rgb_to_ycbcr(&img).unwrap(), img);
    }

    #[test]
    fn inverse_round_trips() {
        let rgb = vec![
            Grid::from_elem((2, 2), 0.1),
            Grid::from_elem((2, 2), 0.8),
            Grid::from_elem((2, 2), 0.45),
        ];
        let back = to_rgb(&to_ycbcr(&rgb));
        for (a, b) in back.iter().zip(&rgb) {
            assert!(a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12));
        }
    }
}
