//! Preparing phase maps for a phase-only SLM: grating, quantization, file I/O.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::propagation::{canonical_phase, PhaseMap, TAU};
use crate::raster::Grid;

use std::f64::consts::PI;

pub const SIDECAR_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Adds a half-turn to every even column, moving the signal off the zeroth
/// diffraction order. Exactly involutive on canonical phases.
pub fn apply_horizontal_grating(phase: &PhaseMap) -> PhaseMap {
    let channels = phase
        .channels()
        .iter()
        .map(|c| {
            let mut out = c.clone();
            for mut row in out.rows_mut() {
                for v in row.iter_mut().step_by(2) {
                    *v = if *v < PI { *v + PI } else { *v - PI };
                }
            }
            out
        })
        .collect();
    PhaseMap::new(channels, phase.pitch()).expect("grating preserves validity")
}

/// Integer drive levels, `2^bits` codes per turn.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedPhase {
    channels: Vec<Array2<u8>>,
    bits: u8,
}

impl QuantizedPhase {
    pub fn new(channels: Vec<Array2<u8>>, bits: u8) -> Result<Self> {
        if !(1..=8).contains(&bits) {
            return Err(Error::config(format!("bit depth {bits} outside 1..=8")));
        }
        let Some(first) = channels.first() else {
            return Err(Error::input("quantized phase needs at least one channel"));
        };
        if channels.iter().any(|c| c.dim() != first.dim()) {
            return Err(Error::input("quantized channels differ in size"));
        }
        let levels = 1u16 << bits;
        if channels.iter().any(|c| c.iter().any(|v| u16::from(*v) >= levels)) {
            return Err(Error::input(format!("code out of range for {bits}-bit depth")));
        }
        Ok(Self { channels, bits })
    }

    pub fn channels(&self) -> &[Array2<u8>] {
        &self.channels
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn levels(&self) -> u16 {
        1 << self.bits
    }

    pub fn width(&self) -> usize {
        self.channels[0].ncols()
    }

    pub fn height(&self) -> usize {
        self.channels[0].nrows()
    }
}

/// `v = round(phi * L / 2pi) mod L` with `L = 2^bits`.
pub fn quantize_phase_bits(phase: &PhaseMap, bits: u8) -> Result<QuantizedPhase> {
    if !(1..=8).contains(&bits) {
        return Err(Error::config(format!("bit depth {bits} outside 1..=8")));
    }
    let levels = f64::from(1u16 << bits);
    let channels = phase
        .channels()
        .iter()
        .map(|c| c.mapv(|p| ((p * levels / TAU).round() as u32 % (1u32 << bits)) as u8))
        .collect();
    QuantizedPhase::new(channels, bits)
}

pub fn quantize_phase(phase: &PhaseMap) -> QuantizedPhase {
    quantize_phase_bits(phase, 8).expect("8 bits is a valid depth")
}

pub fn dequantize(q: &QuantizedPhase, pitch: f64) -> Result<PhaseMap> {
    let step = TAU / f64::from(q.levels());
    let channels: Vec<Grid> = q
        .channels
        .iter()
        .map(|c| c.mapv(|v| canonical_phase(f64::from(v) * step)))
        .collect();
    PhaseMap::new(channels, pitch)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grating {
    None,
    Horizontal,
}

/// Structured-text description stored beside the per-channel phase images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub version: String,
    pub pitch_m: f64,
    pub wavelengths_m: Vec<f64>,
    pub distance_m: f64,
    pub gaze_xy: [f64; 2],
    pub grating: Grating,
    pub bits: u8,
    pub width: usize,
    pub height: usize,
    /// Per-channel factor mapping simulated intensity onto target units; empty means 1.
    #[serde(default)]
    pub intensity_scale: Vec<f64>,
    /// Channel image file names, relative to the sidecar.
    pub files: Vec<String>,
}

impl Sidecar {
    /// Fails with a conflict unless `wavelengths` matches the recorded ones.
    pub fn check_wavelengths(&self, wavelengths: &[f64]) -> Result<()> {
        let same = wavelengths.len() == self.wavelengths_m.len()
            && wavelengths
                .iter()
                .zip(&self.wavelengths_m)
                .all(|(a, b)| (a - b).abs() <= 1e-12 * b.abs().max(1e-9));
        if same {
            Ok(())
        } else {
            Err(Error::ConfigConflict(format!(
                "hologram was computed for wavelengths {:?} m, simulation requested {:?} m",
                self.wavelengths_m, wavelengths
            )))
        }
    }
}

/// Recorded acquisition settings for an export.
#[derive(Debug, Clone, PartialEq)]
pub struct SlmSettings {
    pub wavelengths_m: Vec<f64>,
    pub distance_m: f64,
    pub gaze_xy: [f64; 2],
    pub grating: Grating,
    pub intensity_scale: Vec<f64>,
}

/// Writes `<stem>_c<i>.png` per channel plus `<stem>.json`; returns the sidecar path.
pub fn export_phase(q: &QuantizedPhase, pitch: f64, settings: &SlmSettings, dir: &Path, stem: &str) -> Result<PathBuf> {
    if settings.wavelengths_m.len() != q.channels.len() {
        return Err(Error::config("one wavelength per phase channel is required"));
    }
    if !settings.intensity_scale.is_empty() && settings.intensity_scale.len() != q.channels.len() {
        return Err(Error::config("intensity_scale needs one entry per phase channel"));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for (i, c) in q.channels.iter().enumerate() {
        let name = format!("{stem}_c{i}.png");
        let path = dir.join(&name);
        let raw: Vec<u8> = c.iter().copied().collect();
        image::save_buffer_with_format(
            &path,
            &raw,
            q.width() as u32,
            q.height() as u32,
            image::ExtendedColorType::L8,
            image::ImageFormat::Png,
        )
        .map_err(|e| Error::format(&path, e.to_string()))?;
        files.push(name);
    }
    let sidecar = Sidecar {
        version: SIDECAR_VERSION.to_string(),
        pitch_m: pitch,
        wavelengths_m: settings.wavelengths_m.clone(),
        distance_m: settings.distance_m,
        gaze_xy: settings.gaze_xy,
        grating: settings.grating,
        bits: q.bits,
        width: q.width(),
        height: q.height(),
        intensity_scale: settings.intensity_scale.clone(),
        files,
    };
    let path = dir.join(format!("{stem}.json"));
    let text = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Reads a sidecar and its channel images back bit-exactly.
pub fn import_phase(sidecar_path: &Path) -> Result<(QuantizedPhase, Sidecar)> {
    let text = fs::read_to_string(sidecar_path).map_err(|e| Error::io(sidecar_path, e))?;
    let sidecar: Sidecar =
        serde_json::from_str(&text).map_err(|e| Error::format(sidecar_path, e.to_string()))?;
    if sidecar.files.is_empty() || sidecar.files.len() != sidecar.wavelengths_m.len() {
        return Err(Error::format(sidecar_path, "channel files and wavelengths disagree"));
    }
    if !sidecar.intensity_scale.is_empty() && sidecar.intensity_scale.len() != sidecar.files.len() {
        return Err(Error::format(sidecar_path, "intensity_scale needs one entry per channel"));
    }
    let base = sidecar_path.parent().unwrap_or_else(|| Path::new("."));
    let mut channels = Vec::new();
    for name in &sidecar.files {
        let path = base.join(name);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
            .map_err(|e| Error::format(&path, e.to_string()))?;
        let image::DynamicImage::ImageLuma8(gray) = img else {
            return Err(Error::format(&path, "phase images must be 8-bit grayscale"));
        };
        if gray.width() as usize != sidecar.width || gray.height() as usize != sidecar.height {
            return Err(Error::format(
                &path,
                format!(
                    "image is {}x{}, sidecar declares {}x{}",
                    gray.width(),
                    gray.height(),
                    sidecar.width,
                    sidecar.height
                ),
            ));
        }
        let grid = Array2::from_shape_vec((sidecar.height, sidecar.width), gray.into_raw())
            .map_err(|e| Error::format(&path, e.to_string()))?;
        channels.push(grid);
    }
    let q = QuantizedPhase::new(channels, sidecar.bits).map_err(|e| Error::format(sidecar_path, e.to_string()))?;
    Ok((q, sidecar))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagation::DEFAULT_PITCH;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_phase(c: usize, w: usize, h: usize, seed: u64) -> PhaseMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PhaseMap::new(
            (0..c).map(|_| Grid::from_shape_fn((h, w), |_| rng.gen_range(0.0..TAU))).collect(),
            DEFAULT_PITCH,
        )
        .unwrap()
    }

    fn settings(channels: usize) -> SlmSettings {
        SlmSettings {
            wavelengths_m: crate::propagation::default_wavelengths(channels),
            distance_m: 0.15,
            gaze_xy: [0.5, 0.5],
            grating: Grating::Horizontal,
            intensity_scale: vec![0.5; channels],
        }
    }

    #[test]
    fn grating_on_zero_phase_alternates() {
        let g = apply_horizontal_grating(&PhaseMap::constant(1, 6, 3, 0.0, DEFAULT_PITCH).unwrap());
        for ((_, x), v) in g.channel(0).indexed_iter() {
            assert_eq!(*v, if x % 2 == 0 { PI } else { 0.0 });
        }
    }

    #[test]
    fn grating_is_an_involution() {
        let p = random_phase(3, 33, 17, 1);
        assert_eq!(apply_horizontal_grating(&apply_horizontal_grating(&p)), p);
    }

    #[test]
    fn quantization_examples() {
        let p = PhaseMap::new(vec![Grid::from_shape_vec((1, 3), vec![0.0, PI, TAU - 1e-3]).unwrap()], DEFAULT_PITCH).unwrap();
        let q = quantize_phase(&p);
        assert_eq!(q.channels()[0].as_slice().unwrap(), &[0, 128, 0]);
    }

    #[test]
    fn every_code_round_trips_within_half_step() {
        let codes = Array2::from_shape_fn((1, 256), |(_, x)| x as u8);
        let q = QuantizedPhase::new(vec![codes], 8).unwrap();
        let p = dequantize(&q, DEFAULT_PITCH).unwrap();
        assert_eq!(quantize_phase(&p), q);
        let r = random_phase(1, 64, 64, 2);
        let back = dequantize(&quantize_phase(&r), DEFAULT_PITCH).unwrap();
        for (a, b) in r.channel(0).iter().zip(back.channel(0)) {
            let d = (a - b).rem_euclid(TAU);
            assert!(d.min(TAU - d) <= PI / 256.0 + 1e-12);
        }
    }

    #[test]
    fn lower_depths_wrap() {
        let p = PhaseMap::constant(1, 2, 2, TAU - 0.01, DEFAULT_PITCH).unwrap();
        let q = quantize_phase_bits(&p, 4).unwrap();
        assert!(q.channels()[0].iter().all(|v| *v == 0));
        assert!(quantize_phase_bits(&p, 9).is_err());
    }

    #[test]
    fn export_import_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let q = quantize_phase(&random_phase(3, 40, 24, 3));
        let path = export_phase(&q, DEFAULT_PITCH, &settings(3), dir.path(), "holo").unwrap();
        let (back, meta) = import_phase(&path).unwrap();
        assert_eq!(back, q);
        assert_eq!(meta.grating, Grating::Horizontal);
        assert_eq!(meta.pitch_m, DEFAULT_PITCH);
        let img = image::open(dir.path().join("holo_c0.png")).unwrap();
        assert_eq!((img.width(), img.height()), (40, 24));
    }

    #[test]
    fn wavelength_mismatch_is_a_conflict() {
        let dir = tempfile::tempdir().unwrap();
        let q = quantize_phase(&random_phase(1, 8, 8, 4));
        let path = export_phase(&q, DEFAULT_PITCH, &settings(1), dir.path(), "p").unwrap();
        let (_, meta) = import_phase(&path).unwrap();
        assert!(meta.check_wavelengths(&[520e-9]).is_ok());
        assert!(matches!(meta.check_wavelengths(&[638e-9]), Err(Error::ConfigConflict(_))));
    }

    #[test]
    fn corrupt_inputs_are_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        let q = quantize_phase(&random_phase(1, 8, 8, 5));
        let path = export_phase(&q, DEFAULT_PITCH, &settings(1), dir.path(), "p").unwrap();

        let mut meta: Sidecar = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        meta.width = 9;
        fs::write(&path, serde_json::to_string(&meta).unwrap()).unwrap();
        assert!(matches!(import_phase(&path), Err(Error::Format { .. })));

        fs::write(&path, "{ not json").unwrap();
        assert!(matches!(import_phase(&path), Err(Error::Format { .. })));

        fs::write(dir.path().join("p_c0.png"), b"garbage").unwrap();
        meta.width = 8;
        fs::write(&path, serde_json::to_string(&meta).unwrap()).unwrap();
        assert!(matches!(import_phase(&path), Err(Error::Format { .. })));

        assert!(matches!(import_phase(&dir.path().join("missing.json")), Err(Error::Io { .. })));
    }
}
