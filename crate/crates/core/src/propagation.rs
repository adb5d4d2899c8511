//! Phase-only SLM display model: unit-amplitude fields propagated to the image
//! plane with a Fresnel transfer function, observed as intensity.

use std::f64::consts::PI;

use ndarray::{s, Array2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::par;
use crate::raster::{Grid, Image};

pub const TAU: f64 = 2.0 * PI;

/// SLM pixel pitch of the prototype display, meters.
pub const DEFAULT_PITCH: f64 = 8e-6;
/// Image-plane distance of the prototype display, meters.
pub const DEFAULT_DISTANCE: f64 = 0.15;
pub const WAVELENGTH_RED: f64 = 638e-9;
pub const WAVELENGTH_GREEN: f64 = 520e-9;
pub const WAVELENGTH_BLUE: f64 = 450e-9;

/// Default per-channel wavelengths for a target with `channels` channels.
pub fn default_wavelengths(channels: usize) -> Vec<f64> {
    match channels {
        3 => vec![WAVELENGTH_RED, WAVELENGTH_GREEN, WAVELENGTH_BLUE],
        _ => vec![WAVELENGTH_GREEN; channels],
    }
}

/// Spacing of canonical phase values. Both `TAU` and `PI` are multiples of it,
/// so half-turn shifts of canonical phases are exact.
pub const PHASE_GRID: f64 = 1.0 / (1u64 << 50) as f64;

/// Maps any real phase onto `[0, 2pi)`, snapped to multiples of [`PHASE_GRID`].
pub fn canonical_phase(v: f64) -> f64 {
    let r = (v.rem_euclid(TAU) / PHASE_GRID).round() * PHASE_GRID;
    if r >= TAU {
        0.0
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationConfig {
    /// Signed propagation distance, meters.
    pub distance: f64,
    pub wavelength: f64,
    pub pitch: f64,
}

impl PropagationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength > 0.0 && self.wavelength.is_finite()) {
            return Err(Error::config(format!("wavelength must be positive, got {}", self.wavelength)));
        }
        if !(self.pitch > 0.0 && self.pitch.is_finite()) {
            return Err(Error::config(format!("pitch must be positive, got {}", self.pitch)));
        }
        if !self.distance.is_finite() {
            return Err(Error::config("distance must be finite"));
        }
        Ok(())
    }
}

/// Complex wave amplitudes sampled on the SLM pixel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    data: Array2<Complex64>,
    pitch: f64,
}

impl ComplexField {
    pub fn new(data: Array2<Complex64>, pitch: f64) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::input("field is empty"));
        }
        if !(pitch > 0.0) {
            return Err(Error::config("field pitch must be positive"));
        }
        if data.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::input("field contains non-finite values"));
        }
        Ok(Self {
            data: data.as_standard_layout().into_owned(),
            pitch,
        })
    }

    pub fn width(&self) -> usize {
        self.data.ncols()
    }

    pub fn height(&self) -> usize {
        self.data.nrows()
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn data(&self) -> &Array2<Complex64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<Complex64> {
        self.data
    }

    /// `sum |u|^2`.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn intensity(&self) -> Grid {
        self.data.mapv(|c| c.norm_sqr())
    }
}

/// Per-channel SLM phase values, canonical in `[0, 2pi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMap {
    channels: Vec<Grid>,
    pitch: f64,
}

impl PhaseMap {
    /// Validates and canonicalizes per-channel phase grids.
    pub fn new(mut channels: Vec<Grid>, pitch: f64) -> Result<Self> {
        let first = channels
            .first()
            .ok_or_else(|| Error::input("phase map has no channels"))?;
        if channels.len() != 1 && channels.len() != 3 {
            return Err(Error::input(format!(
                "phase maps have 1 or 3 channels, got {}",
                channels.len()
            )));
        }
        if first.is_empty() {
            return Err(Error::input("phase map is empty"));
        }
        let dim = first.dim();
        if channels.iter().any(|c| c.dim() != dim) {
            return Err(Error::input("phase channels differ in size"));
        }
        if !(pitch > 0.0 && pitch.is_finite()) {
            return Err(Error::config("phase map pitch must be positive"));
        }
        for ch in &mut channels {
            if ch.iter().any(|v| !v.is_finite()) {
                return Err(Error::input("phase map contains non-finite values"));
            }
            ch.mapv_inplace(canonical_phase);
        }
        Ok(Self { channels, pitch })
    }

    pub fn constant(channels: usize, width: usize, height: usize, value: f64, pitch: f64) -> Result<Self> {
        Self::new(vec![Grid::from_elem((height, width), value); channels], pitch)
    }

    pub fn width(&self) -> usize {
        self.channels[0].ncols()
    }

    pub fn height(&self) -> usize {
        self.channels[0].nrows()
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn channel(&self, c: usize) -> &Grid {
        &self.channels[c]
    }

    pub fn channels(&self) -> &[Grid] {
        &self.channels
    }

    pub(crate) fn channels_mut(&mut self) -> &mut [Grid] {
        &mut self.channels
    }

    pub fn into_channels(self) -> Vec<Grid> {
        self.channels
    }
}

/// Frequency-domain Fresnel transfer function for one distance and wavelength.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferKernel {
    data: Array2<Complex64>,
    config: PropagationConfig,
}

impl TransferKernel {
    pub fn data(&self) -> &Array2<Complex64> {
        &self.data
    }

    pub fn config(&self) -> &PropagationConfig {
        &self.config
    }

    pub fn width(&self) -> usize {
        self.data.ncols()
    }

    pub fn height(&self) -> usize {
        self.data.nrows()
    }
}

/// `exp(j * phase)` per pixel.
pub fn field_from_phase(phase: &Grid, pitch: f64) -> Result<ComplexField> {
    if phase.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("phase contains non-finite values"));
    }
    ComplexField::new(phase.mapv(|p| Complex64::from_polar(1.0, p)), pitch)
}

/// Signed FFT frequency index for bin `k` of an `n`-point transform.
fn fft_index(k: usize, n: usize) -> f64 {
    if k <= (n - 1) / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

/// Builds `H(fx, fy) = exp(-j pi lambda d (fx^2 + fy^2))` on the FFT frequency grid.
///
/// The constant `exp(j 2 pi d / lambda)` is omitted since it cannot change intensities.
pub fn fresnel_transfer(width: usize, height: usize, cfg: PropagationConfig) -> Result<TransferKernel> {
    cfg.validate()?;
    if width < 2 || height < 2 {
        return Err(Error::input(format!(
            "transfer kernels need at least 2x2 samples, got {width}x{height}"
        )));
    }
    let scale = -PI * cfg.wavelength * cfg.distance;
    let fx: Vec<f64> = (0..width)
        .map(|k| fft_index(k, width) / (width as f64 * cfg.pitch))
        .collect();
    let fy: Vec<f64> = (0..height)
        .map(|k| fft_index(k, height) / (height as f64 * cfg.pitch))
        .collect();
    let data = Array2::from_shape_fn((height, width), |(y, x)| {
        Complex64::from_polar(1.0, scale * (fx[x] * fx[x] + fy[y] * fy[y]))
    });
    Ok(TransferKernel { data, config: cfg })
}

/// `IFFT(H * FFT(u))` with unitary transforms.
pub fn propagate(field: &ComplexField, kernel: &TransferKernel) -> Result<ComplexField> {
    if field.data.dim() != kernel.data.dim() {
        return Err(Error::input(format!(
            "field is {}x{} but kernel is {}x{}",
            field.width(),
            field.height(),
            kernel.width(),
            kernel.height()
        )));
    }
    let fft = Fft2::new(field.width(), field.height());
    let mut work = field.data.clone();
    apply_transfer(&fft, &mut work, &kernel.data, false);
    Ok(ComplexField {
        data: work,
        pitch: field.pitch,
    })
}

fn apply_transfer(fft: &Fft2, work: &mut Array2<Complex64>, kernel: &Array2<Complex64>, adjoint: bool) {
    fft.forward(work);
    if adjoint {
        work.zip_mut_with(kernel, |w, k| *w *= k.conj());
    } else {
        work.zip_mut_with(kernel, |w, k| *w *= k);
    }
    fft.inverse(work);
}

/// Per-channel intensity `|H(d, lambda_c) exp(j phi_c)|^2`.
pub fn reconstruct_intensity(phase: &PhaseMap, distance: f64, wavelengths: &[f64]) -> Result<Image> {
    let prop = Propagator::new(
        phase.width(),
        phase.height(),
        phase.pitch(),
        distance,
        wavelengths,
        false,
    )?;
    prop.intensity(phase)
}

/// Reusable propagation plan: FFT plan plus one transfer kernel per channel.
///
/// With `padded`, the SLM field is embedded in a zero grid of twice the size
/// before propagation and the central window is observed, which suppresses
/// wrap-around from the periodic FFT grid.
#[derive(Debug, Clone)]
pub struct Propagator {
    width: usize,
    height: usize,
    padded: bool,
    fft: Fft2,
    kernels: Vec<TransferKernel>,
}

/// Image-plane fields retained from a forward pass for the adjoint pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    fields: Vec<Array2<Complex64>>,
}

impl Propagator {
    pub fn new(
        width: usize,
        height: usize,
        pitch: f64,
        distance: f64,
        wavelengths: &[f64],
        padded: bool,
    ) -> Result<Self> {
        if wavelengths.is_empty() {
            return Err(Error::config("at least one wavelength is required"));
        }
        let (gw, gh) = if padded {
            (2 * width, 2 * height)
        } else {
            (width, height)
        };
        let kernels = wavelengths
            .iter()
            .map(|&wavelength| {
                fresnel_transfer(
                    gw,
                    gh,
                    PropagationConfig {
                        distance,
                        wavelength,
                        pitch,
                    },
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            width,
            height,
            padded,
            fft: Fft2::new(gw, gh),
            kernels,
        })
    }

    pub fn channel_count(&self) -> usize {
        self.kernels.len()
    }

    pub fn wavelengths(&self) -> Vec<f64> {
        self.kernels.iter().map(|k| k.config.wavelength).collect()
    }

    pub fn distance(&self) -> f64 {
        self.kernels[0].config.distance
    }

    pub fn padded(&self) -> bool {
        self.padded
    }

    fn check(&self, phase: &PhaseMap) -> Result<()> {
        if phase.channel_count() != self.kernels.len() {
            return Err(Error::config(format!(
                "phase has {} channels but {} wavelengths were given",
                phase.channel_count(),
                self.kernels.len()
            )));
        }
        if phase.width() != self.width || phase.height() != self.height {
            return Err(Error::input(format!(
                "phase is {}x{}, propagator expects {}x{}",
                phase.width(),
                phase.height(),
                self.width,
                self.height
            )));
        }
        Ok(())
    }

    fn window(&self) -> (usize, usize) {
        if self.padded {
            (self.height / 2, self.width / 2)
        } else {
            (0, 0)
        }
    }

    fn embed(&self, field: Array2<Complex64>) -> Array2<Complex64> {
        if !self.padded {
            return field;
        }
        let (oy, ox) = self.window();
        let mut grid = Array2::zeros((2 * self.height, 2 * self.width));
        grid.slice_mut(s![oy..oy + self.height, ox..ox + self.width])
            .assign(&field);
        grid
    }

    fn crop(&self, grid: Array2<Complex64>) -> Array2<Complex64> {
        if !self.padded {
            return grid;
        }
        let (oy, ox) = self.window();
        grid.slice(s![oy..oy + self.height, ox..ox + self.width])
            .to_owned()
    }

    fn propagate_channel(&self, phase: &Grid, c: usize) -> Array2<Complex64> {
        let mut work = self.embed(phase.mapv(|p| Complex64::from_polar(1.0, p)));
        apply_transfer(&self.fft, &mut work, &self.kernels[c].data, false);
        self.crop(work)
    }

    pub fn intensity(&self, phase: &PhaseMap) -> Result<Image> {
        Ok(self.forward(phase)?.0)
    }

    /// Intensity image plus the complex image-plane fields needed by [`Self::backward`].
    pub fn forward(&self, phase: &PhaseMap) -> Result<(Image, ForwardCache)> {
        self.check(phase)?;
        let fields = par::map_range(phase.channel_count(), |c| {
            self.propagate_channel(phase.channel(c), c)
        });
        let intensity = fields.iter().map(|f| f.mapv(|v| v.norm_sqr())).collect();
        Ok((Image::from_parts(intensity), ForwardCache { fields }))
    }

    /// Pulls a gradient with respect to intensity back to the phase values.
    pub fn backward(&self, phase: &PhaseMap, cache: &ForwardCache, grad_intensity: &[Grid]) -> Result<Vec<Grid>> {
        self.check(phase)?;
        if grad_intensity.len() != phase.channel_count()
            || grad_intensity.iter().any(|g| g.dim() != (self.height, self.width))
        {
            return Err(Error::input("intensity gradient does not match the phase layout"));
        }
        Ok(par::map_range(phase.channel_count(), |c| {
            let field = &cache.fields[c];
            let mut work = Array2::from_shape_fn(field.dim(), |ix| field[ix] * (2.0 * grad_intensity[c][ix]));
            work = self.embed(work);
            apply_transfer(&self.fft, &mut work, &self.kernels[c].data, true);
            let grad_field = self.crop(work);
            let phi = phase.channel(c);
            Array2::from_shape_fn(phi.dim(), |ix| {
                let (s, co) = phi[ix].sin_cos();
                let g = grad_field[ix];
                -g.re * s + g.im * co
            })
        }))
    }
}
