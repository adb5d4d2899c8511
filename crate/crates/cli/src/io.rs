//! Image, raw-dump, table and manifest files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, Luma, Rgb};
use metaholo_core::{Grid, Image};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub fn srgb_to_linear(v: f64) -> f64 {
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

pub fn linear_to_srgb(v: f64) -> f64 {
    if v <= 0.0031308 {
        12.92 * v
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

/// Loaded pixels plus the bit depth they were stored at.
#[derive(Debug, Clone)]
pub struct LoadedImage {
    pub image: Image,
    pub depth: BitDepth,
}

/// Reads an image as 1 (gray) or 3 (colour) channels in `[0, 1]`, dropping
/// alpha. Values are linearized from sRGB unless `linear`.
pub fn load_image(path: &Path, linear: bool) -> CliResult<LoadedImage> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let img = image::load_from_memory(&bytes).map_err(|e| CliError::format(path, e))?;
    let depth = match img {
        DynamicImage::ImageLuma8(_) | DynamicImage::ImageLumaA8(_) | DynamicImage::ImageRgb8(_) | DynamicImage::ImageRgba8(_) => {
            BitDepth::Eight
        }
        _ => BitDepth::Sixteen,
    };
    let colour = img.color().has_color();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let decode = |v: u16| {
        let x = f64::from(v) / 65535.0;
        if linear {
            x
        } else {
            srgb_to_linear(x)
        }
    };
    let channels: Vec<Grid> = if colour {
        let buf = img.to_rgb16();
        (0..3)
            .map(|c| Grid::from_shape_fn((h, w), |(y, x)| decode(buf.get_pixel(x as u32, y as u32)[c])))
            .collect()
    } else {
        let buf = img.to_luma16();
        vec![Grid::from_shape_fn((h, w), |(y, x)| decode(buf.get_pixel(x as u32, y as u32)[0]))]
    };
    let image = Image::new(channels).map_err(|e| CliError::format(path, e))?;
    Ok(LoadedImage { image, depth })
}

/// Writes a PNG, clamping to `[0, 1]` and sRGB-encoding unless `linear`.
pub fn save_image(path: &Path, img: &Image, depth: BitDepth, linear: bool) -> CliResult<()> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let encode = |v: f64| {
        let v = v.clamp(0.0, 1.0);
        if linear {
            v
        } else {
            linear_to_srgb(v)
        }
    };
    let code = |v: f64, max: f64| (encode(v) * max).round();
    let result = match (img.channel_count(), depth) {
        (1, BitDepth::Eight) => ImageBuffer::from_fn(w, h, |x, y| {
            Luma([code(img.channel(0)[[y as usize, x as usize]], 255.0) as u8])
        })
        .save(path),
        (1, BitDepth::Sixteen) => ImageBuffer::from_fn(w, h, |x, y| {
            Luma([code(img.channel(0)[[y as usize, x as usize]], 65535.0) as u16])
        })
        .save(path),
        (_, BitDepth::Eight) => ImageBuffer::from_fn(w, h, |x, y| {
            let p = |c: usize| code(img.channel(c)[[y as usize, x as usize]], 255.0) as u8;
            Rgb([p(0), p(1), p(2)])
        })
        .save(path),
        (_, BitDepth::Sixteen) => ImageBuffer::from_fn(w, h, |x, y| {
            let p = |c: usize| code(img.channel(c)[[y as usize, x as usize]], 65535.0) as u16;
            Rgb([p(0), p(1), p(2)])
        })
        .save(path),
    };
    result.map_err(|e| match e {
        image::ImageError::IoError(io) => CliError::io(path, io),
        other => CliError::format(path, other),
    })
}

/// Bicubic (Catmull-Rom) resampling of every channel, clamped to `[0, 1]`.
pub fn resize_image(img: &Image, width: usize, height: usize) -> Image {
    let channels = img
        .channels()
        .iter()
        .map(|c| {
            let (h, w) = c.dim();
            let buf: ImageBuffer<Luma<f32>, Vec<f32>> =
                ImageBuffer::from_fn(w as u32, h as u32, |x, y| Luma([c[[y as usize, x as usize]] as f32]));
            let out = image::imageops::resize(&buf, width as u32, height as u32, image::imageops::FilterType::CatmullRom);
            Grid::from_shape_fn((height, width), |(y, x)| f64::from(out.get_pixel(x as u32, y as u32)[0]).clamp(0.0, 1.0))
        })
        .collect();
    Image::new(channels).expect("resampled channels are finite and clamped")
}

/// Header line of a raw float dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawHeader {
    /// Always `f32le`.
    pub format: String,
    pub width: usize,
    pub height: usize,
    /// Channel names in storage order; each channel is one row-major plane.
    pub channels: Vec<String>,
    #[serde(default)]
    pub meta: serde_json::Value,
}

/// One JSON header line, then little-endian f32 planes, channel after channel,
/// each row-major.
pub fn write_raw(path: &Path, planes: &[Grid], names: &[String], meta: serde_json::Value) -> CliResult<()> {
    let (h, w) = planes[0].dim();
    let header = RawHeader {
        format: "f32le".into(),
        width: w,
        height: h,
        channels: names.to_vec(),
        meta,
    };
    let mut bytes = serde_json::to_vec(&header).expect("header serializes");
    bytes.push(b'\n');
    bytes.reserve(planes.len() * w * h * 4);
    for p in planes {
        for v in p.iter() {
            bytes.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn read_raw(path: &Path) -> CliResult<(RawHeader, Vec<Grid>)> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let split = bytes
        .iter()
        .position(|b| *b == b'\n')
        .ok_or_else(|| CliError::format(path, "missing header line"))?;
    let header: RawHeader = serde_json::from_slice(&bytes[..split]).map_err(|e| CliError::format(path, e))?;
    if header.format != "f32le" {
        return Err(CliError::format(path, format!("unsupported sample format `{}`", header.format)));
    }
    let plane = header.width * header.height;
    let body = &bytes[split + 1..];
    if plane == 0 || header.channels.is_empty() || body.len() != plane * header.channels.len() * 4 {
        return Err(CliError::format(path, "payload size does not match the header"));
    }
    let planes = body
        .chunks_exact(plane * 4)
        .map(|chunk| {
            let vals: Vec<f64> = chunk
                .chunks_exact(4)
                .map(|b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])))
                .collect();
            Grid::from_shape_vec((header.height, header.width), vals).expect("size checked")
        })
        .collect();
    Ok((header, planes))
}

/// Tab-separated table with a header row.
pub fn write_tsv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let mut text = header.join("\t");
    text.push('\n');
    for row in rows {
        text.push_str(&row.join("\t"));
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| CliError::io(&tmp, e))?;
    f.sync_all().map_err(|e| CliError::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: PathBuf,
    pub sha256: String,
}

pub fn hash_entry(path: &Path) -> CliResult<FileHash> {
    Ok(FileHash {
        path: path.to_path_buf(),
        sha256: sha256_file(path)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn srgb_curves_invert() {
        for i in 0..=1000 {
            let v = i as f64 / 1000.0;
            assert!((linear_to_srgb(srgb_to_linear(v)) - v).abs() < 1e-12);
        }
        assert!((srgb_to_linear(0.5) - 0.214_041_140_482_232_52).abs() < 1e-12);
    }

    fn ramp(channels: usize) -> Image {
        Image::new(
            (0..channels)
                .map(|c| Grid::from_shape_fn((16, 17), |(y, x)| ((x * 16 + y + c * 7) % 256) as f64 / 255.0))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn load_save_round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        for channels in [1, 3] {
            for depth in [BitDepth::Eight, BitDepth::Sixteen] {
                for linear in [false, true] {
                    let first = dir.path().join("a.png");
                    let second = dir.path().join("b.png");
                    save_image(&first, &ramp(channels), depth, linear).unwrap();
                    let loaded = load_image(&first, linear).unwrap();
                    assert_eq!(loaded.depth, depth);
                    assert_eq!(loaded.image.channel_count(), channels);
                    save_image(&second, &loaded.image, depth, linear).unwrap();
                    let a = image::open(&first).unwrap();
                    let b = image::open(&second).unwrap();
                    assert_eq!(a.as_bytes(), b.as_bytes(), "{channels} {depth:?} {linear}");
                }
            }
        }
    }

    #[test]
    fn raw_dump_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.f32");
        let planes = ramp(3).into_channels();
        let names: Vec<String> = ["r", "g", "b"].iter().map(|s| s.to_string()).collect();
        write_raw(&path, &planes, &names, serde_json::json!({"k": 1})).unwrap();
        let (header, back) = read_raw(&path).unwrap();
        assert_eq!((header.width, header.height), (17, 16));
        assert_eq!(header.channels, names);
        for (a, b) in planes.iter().zip(&back) {
            assert!(a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-7));
        }
        let mut bytes = fs::read(&path).unwrap();
        bytes.pop();
        fs::write(&path, bytes).unwrap();
        assert!(matches!(read_raw(&path), Err(CliError::Format { .. })));
    }

    #[test]
    fn atomic_write_leaves_no_temporary() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        write_atomic(&path, b"{}").unwrap();
        write_atomic(&path, b"{\"a\":1}").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "{\"a\":1}");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn tsv_has_header_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.tsv");
        write_tsv(&path, &["a", "b"], &[vec!["1".into(), "2".into()]]).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "a\tb\n1\t2\n");
    }
}
