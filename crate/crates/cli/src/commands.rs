//! The verbs. Each writes its artifacts plus `manifest.json` into the output directory.

use std::fs;
use std::path::{Path, PathBuf};

use metaholo_core::corpus::Rect;
use metaholo_core::losses::metameric_loss;
use metaholo_core::metrics::{foveal_mask, masked_mse, rect_mask};
use metaholo_core::optimizer::{optimise_problem, temporal_sequence, HologramProblem};
use metaholo_core::perception::metamer::{synthesize_metamer_with, uniform_noise};
use metaholo_core::perception::{GazeContext, MetamerOptions};
use metaholo_core::propagation::{PhaseMap, Propagator};
use metaholo_core::slm::{
    apply_horizontal_grating, dequantize, export_phase, import_phase, quantize_phase_bits, Grating, SlmSettings,
};
use metaholo_core::{compare, Grid, Image};
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::Command;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::io::{self, BitDepth, FileHash};

pub fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Optimise(common) => optimise(&common.resolve()?),
        Command::Simulate { sidecar, common } => simulate(&common.resolve()?, &sidecar),
        Command::Compare { common, losses } => {
            let mut cfg = common.resolve()?;
            if let Some(l) = losses {
                cfg.compare.losses = l;
            }
            cfg.validate()?;
            compare(&cfg)
        }
        Command::Metamer { common, passes } => {
            let mut cfg = common.resolve()?;
            if let Some(p) = passes {
                cfg.metamer.passes = p;
            }
            metamer(&cfg)
        }
        Command::Encode {
            phase,
            common,
            grating,
            bits,
        } => {
            let mut cfg = common.resolve()?;
            if let Some(g) = grating {
                cfg.slm.grating = g.into();
            }
            if let Some(b) = bits {
                cfg.slm.bits = b;
            }
            cfg.validate()?;
            encode(&cfg, &phase)
        }
        Command::Average { common, count } => {
            let mut cfg = common.resolve()?;
            if let Some(c) = count {
                cfg.average.count = c;
            }
            cfg.validate()?;
            average(&cfg)
        }
    }
}

/// Collects the files a command reads and writes for its manifest.
struct Run<'a> {
    cfg: &'a RunConfig,
    command: &'static str,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    parallel: bool,
    config: &'a RunConfig,
    inputs: Vec<FileHash>,
    outputs: Vec<FileHash>,
    metrics: Value,
}

impl<'a> Run<'a> {
    fn start(cfg: &'a RunConfig, command: &'static str) -> CliResult<Self> {
        fs::create_dir_all(&cfg.out).map_err(|e| CliError::io(&cfg.out, e))?;
        Ok(Self {
            cfg,
            command,
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.cfg.out.join(name)
    }

    fn output(&mut self, path: PathBuf) -> PathBuf {
        self.outputs.push(path.clone());
        path
    }

    fn save_image(&mut self, name: &str, img: &Image) -> CliResult<()> {
        let path = self.output(self.path(name));
        io::save_image(&path, img, BitDepth::Sixteen, self.cfg.linear)
    }

    fn save_raw(&mut self, name: &str, planes: &[Grid], meta: Value) -> CliResult<()> {
        let path = self.output(self.path(name));
        io::write_raw(&path, planes, &channel_names(planes.len()), meta)
    }

    fn save_tsv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
        let path = self.output(self.path(name));
        io::write_tsv(&path, header, rows)
    }

    /// Exports quantized phase images and their sidecar, recording every file.
    fn export(&mut self, phase: &PhaseMap, settings: &SlmSettings, stem: &str) -> CliResult<PathBuf> {
        let driven = match settings.grating {
            Grating::None => phase.clone(),
            Grating::Horizontal => apply_horizontal_grating(phase),
        };
        let q = quantize_phase_bits(&driven, self.cfg.slm.bits)?;
        let sidecar = export_phase(&q, phase.pitch(), settings, &self.cfg.out, stem)?;
        for c in 0..q.channels().len() {
            self.output(self.path(&format!("{stem}_c{c}.png")));
        }
        Ok(self.output(sidecar))
    }

    fn finish(self, metrics: Value) -> CliResult<()> {
        let hash = |paths: &[PathBuf]| paths.iter().map(|p| io::hash_entry(p)).collect::<CliResult<Vec<_>>>();
        let manifest = Manifest {
            tool: "metaholo",
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            parallel: metaholo_core::is_parallel(),
            config: self.cfg,
            inputs: hash(&self.inputs)?,
            outputs: hash(&self.outputs)?,
            metrics,
        };
        let mut text = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        text.push(b'\n');
        io::write_atomic(&self.path("manifest.json"), &text)
    }
}

fn channel_names(n: usize) -> Vec<String> {
    match n {
        1 => vec!["gray".into()],
        3 => ["r", "g", "b"].iter().map(|s| s.to_string()).collect(),
        n => (0..n).map(|c| format!("c{c}")).collect(),
    }
}

/// Loads the target and fits it to the SLM size.
fn load_target(run: &mut Run) -> CliResult<Image> {
    let cfg = run.cfg;
    let path = cfg.target_path()?.to_path_buf();
    let img = io::load_image(&path, cfg.linear)?.image;
    run.inputs.push(path.clone());
    let (Some(w), Some(h)) = (cfg.slm.width, cfg.slm.height) else {
        return Ok(img);
    };
    if (img.width(), img.height()) == (w, h) {
        Ok(img)
    } else if cfg.resize {
        Ok(io::resize_image(&img, w, h))
    } else {
        Err(CliError::config(format!(
            "{} is {}x{} but the SLM is {w}x{h}; pass --resize to resample",
            path.display(),
            img.width(),
            img.height()
        )))
    }
}

fn progress_printer(label: &str, steps: usize) -> impl FnMut(usize, f64) + '_ {
    let every = (steps / 20).max(1);
    move |i, loss| {
        if i % every == 0 || i + 1 == steps {
            eprintln!("{label} step {:>4}/{steps} loss {loss:.6e}", i + 1);
        }
    }
}

fn slm_settings(cfg: &RunConfig, wavelengths: Vec<f64>, scales: &[f64]) -> SlmSettings {
    SlmSettings {
        wavelengths_m: wavelengths,
        distance_m: cfg.distance_or_default(),
        gaze_xy: cfg.gaze.gaze,
        grating: cfg.slm.grating,
        intensity_scale: scales.to_vec(),
    }
}

/// Metadata carried in a phase dump so `encode` can rebuild the sidecar.
fn phase_meta(settings: &SlmSettings, pitch: f64) -> Value {
    json!({
        "kind": "phase_rad",
        "pitch_m": pitch,
        "wavelengths_m": settings.wavelengths_m,
        "distance_m": settings.distance_m,
        "gaze_xy": settings.gaze_xy,
        "intensity_scale": settings.intensity_scale,
    })
}

fn history_rows(history: &[f64], final_loss: f64) -> Vec<Vec<String>> {
    history
        .iter()
        .chain(std::iter::once(&final_loss))
        .enumerate()
        .map(|(i, l)| vec![i.to_string(), format!("{l:e}")])
        .collect()
}

fn optimise(cfg: &RunConfig) -> CliResult<()> {
    let mut run = Run::start(cfg, "optimise")?;
    let target = load_target(&mut run)?;
    let ocfg = cfg.optim_config();
    let distance = cfg.distance_or_default();
    let problem = HologramProblem::new(&target, &cfg.gaze, distance, &ocfg)?;
    let result = optimise_problem(&problem, &target, &ocfg, &mut progress_printer(ocfg.loss_kind.name(), ocfg.steps))?;
    let recon = problem.simulate(&result.phase)?;

    let settings = slm_settings(cfg, problem.propagator().wavelengths(), problem.scales());
    run.save_raw("phase.f32", result.phase.channels(), phase_meta(&settings, result.phase.pitch()))?;
    run.export(&result.phase, &settings, "phase")?;
    run.save_image("reconstruction.png", &recon)?;
    run.save_raw("reconstruction.f32", recon.channels(), json!({"kind": "intensity"}))?;
    run.save_tsv("loss_history.tsv", &["iteration", "loss"], &history_rows(&result.history, result.final_loss))?;

    let errors = metaholo_core::metrics::region_errors(&recon, &target, &cfg.gaze)?;
    run.finish(json!({
        "initial_loss": result.history[0],
        "final_loss": result.final_loss,
        "full_mse": errors.full,
        "foveal_mse": errors.foveal,
        "peripheral_mse": errors.peripheral,
    }))
}

fn simulate(cfg: &RunConfig, sidecar_path: &Path) -> CliResult<()> {
    let mut run = Run::start(cfg, "simulate")?;
    let (q, sidecar) = import_phase(sidecar_path)?;
    run.inputs.push(sidecar_path.to_path_buf());
    let dir = sidecar_path.parent().unwrap_or(Path::new(""));
    run.inputs.extend(sidecar.files.iter().map(|f| dir.join(f)));
    if !cfg.display.wavelengths.is_empty() {
        sidecar.check_wavelengths(&cfg.display.wavelengths)?;
    }
    let driven = dequantize(&q, sidecar.pitch_m)?;
    // The grating is an involution: applying it again recovers the designed phase.
    let phase = match sidecar.grating {
        Grating::None => driven,
        Grating::Horizontal => apply_horizontal_grating(&driven),
    };
    let distance = cfg.distance.unwrap_or(sidecar.distance_m);
    let prop = Propagator::new(
        q.width(),
        q.height(),
        sidecar.pitch_m,
        distance,
        &sidecar.wavelengths_m,
        cfg.display.padded,
    )?;
    let raw = prop.intensity(&phase)?;
    let recon = if sidecar.intensity_scale.is_empty() {
        raw
    } else {
        Image::new(
            raw.into_channels()
                .into_iter()
                .zip(&sidecar.intensity_scale)
                .map(|(c, s)| c * *s)
                .collect(),
        )?
    };
    run.save_image("simulated.png", &recon)?;
    run.save_raw("simulated.f32", recon.channels(), json!({"kind": "intensity", "distance_m": distance}))?;
    run.finish(json!({ "distance_m": distance }))
}

/// Square window of side `side` centred on `(cx, cy)`, shifted to lie inside the image.
fn window(width: usize, height: usize, cx: f64, cy: f64, side: usize) -> Rect {
    let side_w = side.min(width).max(1);
    let side_h = side.min(height).max(1);
    let place = |c: f64, s: usize, limit: usize| ((c - s as f64 / 2.0).round().max(0.0) as usize).min(limit - s);
    Rect {
        x: place(cx, side_w, width),
        y: place(cy, side_h, height),
        width: side_w,
        height: side_h,
    }
}

/// Foveal and peripheral inset windows for `ctx` on a `width` x `height` image.
pub fn inset_windows(width: usize, height: usize, ctx: &GazeContext, peripheral: Option<Rect>) -> (Rect, Rect) {
    let foveal_px = foveal_mask(width, height, ctx).iter().filter(|m| **m).count();
    let radius = (foveal_px as f64 / std::f64::consts::PI).sqrt().max(4.0);
    let side = (2.0 * radius).round() as usize;
    let (gx, gy) = (ctx.gaze[0] * width as f64, ctx.gaze[1] * height as f64);
    let fovea = window(width, height, gx, gy, side);
    let periphery = peripheral.unwrap_or_else(|| window(width, height, gx + 2.0 * radius, gy, side));
    (fovea, periphery)
}

fn crop(img: &Image, r: Rect) -> CliResult<Image> {
    Ok(Image::new(
        img.channels()
            .iter()
            .map(|c| c.slice(ndarray::s![r.y..r.y + r.height, r.x..r.x + r.width]).to_owned())
            .collect(),
    )?)
}

/// Tiles images left to right with a white two-pixel gutter.
fn side_by_side(tiles: &[Image]) -> CliResult<Image> {
    const GAP: usize = 2;
    let h = tiles.iter().map(Image::height).max().unwrap_or(0);
    let w = tiles.iter().map(Image::width).sum::<usize>() + GAP * tiles.len().saturating_sub(1);
    let channels = tiles[0].channel_count();
    let mut out = vec![Grid::from_elem((h, w), 1.0); channels];
    let mut x0 = 0;
    for t in tiles {
        for (o, c) in out.iter_mut().zip(t.channels()) {
            o.slice_mut(ndarray::s![..t.height(), x0..x0 + t.width()]).assign(c);
        }
        x0 += t.width() + GAP;
    }
    Ok(Image::new(out)?)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), |x| format!("{x:e}"))
}

fn compare(cfg: &RunConfig) -> CliResult<()> {
    let mut run = Run::start(cfg, "compare")?;
    let target = load_target(&mut run)?;
    let ocfg = cfg.optim_config();
    let losses = &cfg.compare.losses;
    eprintln!("comparing {} losses over {} steps", losses.len(), ocfg.steps);
    let rows = compare::compare_losses(&target, &cfg.gaze, cfg.distance_or_default(), &ocfg, losses)?;

    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.loss.name().to_string(),
                format!("{:e}", r.full_mse),
                opt(r.foveal_mse),
                opt(r.peripheral_mse),
                format!("{:e}", r.metameric),
            ]
        })
        .collect();
    run.save_tsv(
        "compare.tsv",
        &["loss", "full_mse", "foveal_mse", "peripheral_mse", "metameric_loss"],
        &table,
    )?;

    let mut header = vec!["iteration".to_string()];
    header.extend(rows.iter().map(|r| r.loss.name().to_string()));
    let history: Vec<Vec<String>> = (0..ocfg.steps)
        .map(|i| {
            std::iter::once(i.to_string())
                .chain(rows.iter().map(|r| format!("{:e}", r.history[i])))
                .collect()
        })
        .collect();
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    run.save_tsv("compare_history.tsv", &header_refs, &history)?;

    for r in &rows {
        run.save_image(&format!("reconstruction_{}.png", r.loss.name()), &r.reconstruction)?;
    }
    let (fovea, periphery) = inset_windows(
        target.width(),
        target.height(),
        &cfg.gaze,
        cfg.compare.inset.map(Rect::from),
    );
    if periphery.x + periphery.width > target.width() || periphery.y + periphery.height > target.height() {
        return Err(CliError::config("compare.inset lies outside the target"));
    }
    for (name, rect) in [("inset_fovea.png", fovea), ("inset_periphery.png", periphery)] {
        let tiles: Vec<Image> = std::iter::once(&target)
            .chain(rows.iter().map(|r| &r.reconstruction))
            .map(|img| crop(img, rect))
            .collect::<CliResult<_>>()?;
        run.save_image(name, &side_by_side(&tiles)?)?;
    }

    let rect_json = |r: Rect| json!({"x": r.x, "y": r.y, "width": r.width, "height": r.height});
    run.finish(json!({
        "inset_order": std::iter::once("target").chain(rows.iter().map(|r| r.loss.name())).collect::<Vec<_>>(),
        "inset_fovea": rect_json(fovea),
        "inset_periphery": rect_json(periphery),
        "rows": rows.iter().map(|r| json!({
            "loss": r.loss.name(),
            "full_mse": r.full_mse,
            "foveal_mse": r.foveal_mse,
            "peripheral_mse": r.peripheral_mse,
            "metameric_loss": r.metameric,
        })).collect::<Vec<_>>(),
    }))
}

fn metamer(cfg: &RunConfig) -> CliResult<()> {
    let mut run = Run::start(cfg, "metamer")?;
    let target = load_target(&mut run)?;
    let seed = cfg.optim.seed;
    let opts = MetamerOptions {
        passes: cfg.metamer.passes,
        ..MetamerOptions::default()
    };
    let out = synthesize_metamer_with(&target, &cfg.gaze, seed, &opts)?;
    let loss = metameric_loss(&out, &target, &cfg.gaze, &cfg.loss)?;
    let baseline = metameric_loss(&uniform_noise(&target, seed), &target, &cfg.gaze, &cfg.loss)?;
    let ratio = if baseline > 0.0 { loss / baseline } else { 0.0 };
    let accepted = ratio <= cfg.metamer.acceptance_ratio;
    if !accepted {
        eprintln!(
            "warning: metameric loss ratio {ratio:.4} exceeds the acceptance ratio {}",
            cfg.metamer.acceptance_ratio
        );
    }
    run.save_image("metamer.png", &out)?;
    run.save_raw("metamer.f32", out.channels(), json!({"kind": "intensity"}))?;
    run.save_image("metamer_composite.png", &side_by_side(&[target.clone(), out])?)?;
    run.finish(json!({
        "metameric_loss": loss,
        "noise_metameric_loss": baseline,
        "ratio": ratio,
        "acceptance_ratio": cfg.metamer.acceptance_ratio,
        "accepted": accepted,
    }))
}

fn meta_f64s(meta: &Value, key: &str) -> Option<Vec<f64>> {
    meta.get(key)?.as_array()?.iter().map(Value::as_f64).collect()
}

fn encode(cfg: &RunConfig, phase_path: &Path) -> CliResult<()> {
    let mut run = Run::start(cfg, "encode")?;
    let (header, planes) = io::read_raw(phase_path)?;
    run.inputs.push(phase_path.to_path_buf());
    let meta = &header.meta;
    let pitch = meta.get("pitch_m").and_then(Value::as_f64).unwrap_or(cfg.display.pitch);
    let wavelengths = match meta_f64s(meta, "wavelengths_m") {
        Some(w) if !w.is_empty() => {
            if !cfg.display.wavelengths.is_empty() && cfg.display.wavelengths != w {
                return Err(metaholo_core::Error::ConfigConflict(format!(
                    "{} records wavelengths {w:?} m, configuration requests {:?} m",
                    phase_path.display(),
                    cfg.display.wavelengths
                ))
                .into());
            }
            w
        }
        _ => cfg.display.wavelengths_for(planes.len())?,
    };
    let wrap = |c: Grid| c.mapv(|v| v.rem_euclid(std::f64::consts::TAU));
    let phase = PhaseMap::new(planes.into_iter().map(wrap).collect(), pitch)?;
    let gaze = meta_f64s(meta, "gaze_xy")
        .and_then(|g| <[f64; 2]>::try_from(g).ok())
        .unwrap_or(cfg.gaze.gaze);
    let settings = SlmSettings {
        wavelengths_m: wavelengths,
        distance_m: cfg
            .distance
            .or_else(|| meta.get("distance_m").and_then(Value::as_f64))
            .unwrap_or_else(|| cfg.distance_or_default()),
        gaze_xy: gaze,
        grating: cfg.slm.grating,
        intensity_scale: meta_f64s(meta, "intensity_scale").unwrap_or_default(),
    };
    run.export(&phase, &settings, "phase")?;
    run.finish(json!({ "bits": cfg.slm.bits, "grating": cfg.slm.grating }))
}

fn average(cfg: &RunConfig) -> CliResult<()> {
    let mut run = Run::start(cfg, "average")?;
    let target = load_target(&mut run)?;
    let ocfg = cfg.optim_config();
    let count = cfg.average.count;
    eprintln!("optimising a {count}-frame sequence");
    let seq = temporal_sequence(&target, &cfg.gaze, cfg.distance_or_default(), &ocfg, count)?;

    let wavelengths = ocfg.display.wavelengths_for(target.channel_count())?;
    let settings = slm_settings(cfg, wavelengths, &target.channel_means());
    for (i, p) in seq.phases.iter().enumerate() {
        let stem = format!("frame{i}");
        run.save_raw(&format!("{stem}.f32"), p.channels(), phase_meta(&settings, p.pitch()))?;
        run.export(p, &settings, &stem)?;
    }
    let single = &seq.frames[0];
    run.save_image("single.png", single)?;
    run.save_raw("single.f32", single.channels(), json!({"kind": "intensity"}))?;
    run.save_image("average.png", &seq.average)?;
    run.save_raw("average.f32", seq.average.channels(), json!({"kind": "intensity", "frames": count}))?;

    let region = cfg.average.flat_region.map(Rect::from).unwrap_or(Rect {
        x: 0,
        y: 0,
        width: target.width(),
        height: target.height(),
    });
    let mask = rect_mask(target.width(), target.height(), region)?;
    let single_err = masked_mse(single, &target, &mask)?.unwrap_or(0.0);
    let average_err = masked_mse(&seq.average, &target, &mask)?.unwrap_or(0.0);
    let ratio = if single_err > 0.0 { average_err / single_err } else { 1.0 };
    run.save_tsv(
        "noise_reduction.tsv",
        &["frames", "x", "y", "width", "height", "single_mse", "average_mse", "ratio"],
        &[vec![
            count.to_string(),
            region.x.to_string(),
            region.y.to_string(),
            region.width.to_string(),
            region.height.to_string(),
            format!("{single_err:e}"),
            format!("{average_err:e}"),
            format!("{ratio:e}"),
        ]],
    )?;
    run.finish(json!({
        "frames": count,
        "single_mse": single_err,
        "average_mse": average_err,
        "ratio": ratio,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn windows_stay_inside_the_image() {
        let ctx = GazeContext {
            gaze: [0.95, 0.05],
            ..GazeContext::default()
        };
        let (f, p) = inset_windows(64, 48, &ctx, None);
        for r in [f, p] {
            assert!(r.x + r.width <= 64 && r.y + r.height <= 48);
            assert!(r.width > 0 && r.height > 0);
        }
    }

    #[test]
    fn tiles_keep_their_pixels() {
        let a = Image::filled(1, 3, 2, 0.25).unwrap();
        let b = Image::filled(1, 4, 3, 0.5).unwrap();
        let out = side_by_side(&[a, b]).unwrap();
        assert_eq!((out.width(), out.height()), (9, 3));
        assert_eq!(out.channel(0)[[0, 0]], 0.25);
        assert_eq!(out.channel(0)[[2, 0]], 1.0);
        assert_eq!(out.channel(0)[[0, 3]], 1.0);
        assert_eq!(out.channel(0)[[2, 5]], 0.5);
    }
}
