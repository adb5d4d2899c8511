//! Run configuration: a TOML file mirroring [`RunConfig`], overridden by flags.

use std::path::{Path, PathBuf};

use metaholo_core::corpus::Rect;
use metaholo_core::losses::{LossConfig, LossKind};
use metaholo_core::optimizer::{DisplayConfig, OptimConfig};
use metaholo_core::perception::GazeContext;
use metaholo_core::propagation::DEFAULT_DISTANCE;
use metaholo_core::slm::Grating;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub target: Option<PathBuf>,
    pub out: PathBuf,
    /// Treat image files as linear light instead of sRGB.
    pub linear: bool,
    /// Fit the target to the SLM size with bicubic resampling.
    pub resize: bool,
    /// Propagation distance in meters; `simulate` uses the sidecar's when unset.
    pub distance: Option<f64>,
    pub display: DisplayConfig,
    pub gaze: GazeContext,
    pub optim: OptimSection,
    pub loss: LossConfig,
    pub slm: SlmSection,
    pub compare: CompareSection,
    pub metamer: MetamerSection,
    pub average: AverageSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            target: None,
            out: PathBuf::from("out"),
            linear: false,
            resize: false,
            distance: None,
            display: DisplayConfig::default(),
            gaze: GazeContext::default(),
            optim: OptimSection::default(),
            loss: LossConfig::default(),
            slm: SlmSection::default(),
            compare: CompareSection::default(),
            metamer: MetamerSection::default(),
            average: AverageSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimSection {
    pub steps: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub loss: LossKind,
    pub warm_steps: usize,
    pub warm_lr_scale: f64,
}

impl Default for OptimSection {
    fn default() -> Self {
        let d = OptimConfig::default();
        Self {
            steps: d.steps,
            learning_rate: d.learning_rate,
            beta1: d.beta1,
            beta2: d.beta2,
            eps: d.eps,
            seed: d.seed,
            loss: d.loss_kind,
            warm_steps: d.warm_steps,
            warm_lr_scale: d.warm_lr_scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlmSection {
    /// SLM resolution; the target's own size when unset.
    pub width: Option<usize>,
    pub height: Option<usize>,
    pub bits: u8,
    pub grating: Grating,
}

impl Default for SlmSection {
    fn default() -> Self {
        Self {
            width: None,
            height: None,
            bits: 8,
            grating: Grating::None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl From<Window> for Rect {
    fn from(w: Window) -> Rect {
        Rect {
            x: w.x,
            y: w.y,
            width: w.width,
            height: w.height,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSection {
    pub losses: Vec<LossKind>,
    /// Peripheral inset; defaults to a fovea-sized window two foveal radii to the right of gaze.
    pub inset: Option<Window>,
}

impl Default for CompareSection {
    fn default() -> Self {
        Self {
            losses: LossKind::ALL.to_vec(),
            inset: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetamerSection {
    pub passes: usize,
    /// Largest accepted ratio of metameric loss against the noise baseline.
    pub acceptance_ratio: f64,
}

impl Default for MetamerSection {
    fn default() -> Self {
        Self {
            passes: 3,
            acceptance_ratio: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AverageSection {
    pub count: usize,
    /// Region scored for noise reduction; the whole image when unset.
    pub flat_region: Option<Window>,
}

impl Default for AverageSection {
    fn default() -> Self {
        Self {
            count: 5,
            flat_region: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    pub fn distance_or_default(&self) -> f64 {
        self.distance.unwrap_or(DEFAULT_DISTANCE)
    }

    pub fn optim_config(&self) -> OptimConfig {
        let o = &self.optim;
        OptimConfig {
            steps: o.steps,
            learning_rate: o.learning_rate,
            beta1: o.beta1,
            beta2: o.beta2,
            eps: o.eps,
            seed: o.seed,
            loss_kind: o.loss,
            loss: self.loss,
            display: self.display.clone(),
            warm_steps: o.warm_steps,
            warm_lr_scale: o.warm_lr_scale,
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        self.optim_config().validate()?;
        self.gaze.validate()?;
        if let Some(d) = self.distance {
            if !d.is_finite() {
                return Err(CliError::config("distance must be finite"));
            }
        }
        if !(self.display.pitch > 0.0 && self.display.pitch.is_finite()) {
            return Err(CliError::config("display.pitch must be positive"));
        }
        if !(1..=8).contains(&self.slm.bits) {
            return Err(CliError::config("slm.bits must lie in 1..=8"));
        }
        if self.slm.width.is_some() != self.slm.height.is_some() {
            return Err(CliError::config("slm.width and slm.height must be given together"));
        }
        if self.compare.losses.is_empty() {
            return Err(CliError::config("compare.losses must name at least one loss"));
        }
        if self.average.count < 1 {
            return Err(CliError::config("average.count must be at least 1"));
        }
        if !(self.metamer.acceptance_ratio > 0.0) {
            return Err(CliError::config("metamer.acceptance_ratio must be positive"));
        }
        Ok(())
    }

    pub fn target_path(&self) -> CliResult<&Path> {
        self.target
            .as_deref()
            .ok_or_else(|| CliError::config("no target image given (--target or `target` in the config file)"))
    }
}

/// `center` or `x,y` in normalized image coordinates.
pub fn parse_gaze(s: &str) -> Result<[f64; 2], String> {
    if s.eq_ignore_ascii_case("center") {
        return Ok([0.5, 0.5]);
    }
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [x, y] = parts.as_slice() else {
        return Err(format!("expected `x,y` or `center`, got `{s}`"));
    };
    let x: f64 = x.parse().map_err(|_| format!("bad gaze x `{x}`"))?;
    let y: f64 = y.parse().map_err(|_| format!("bad gaze y `{y}`"))?;
    Ok([x, y])
}

pub fn parse_loss(s: &str) -> Result<LossKind, String> {
    s.parse::<LossKind>().map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaze_forms() {
        assert_eq!(parse_gaze("center").unwrap(), [0.5, 0.5]);
        assert_eq!(parse_gaze("0.25, 0.75").unwrap(), [0.25, 0.75]);
        assert!(parse_gaze("0.1").is_err());
        assert!(parse_gaze("a,b").is_err());
    }

    #[test]
    fn file_fields_mirror_the_struct() {
        let cfg: RunConfig = toml::from_str(
            r#"
            target = "t.png"
            distance = 0.1
            [optim]
            steps = 7
            loss = "blur_lowpass"
            [gaze]
            gaze = [0.2, 0.3]
            alpha = 0.1
            [slm]
            grating = "horizontal"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.optim.steps, 7);
        assert_eq!(cfg.optim.loss, LossKind::BlurLowpass);
        assert_eq!(cfg.gaze.gaze, [0.2, 0.3]);
        assert_eq!(cfg.slm.grating, Grating::Horizontal);
        assert_eq!(cfg.optim_config().steps, 7);
        let echoed: RunConfig = toml::from_str(&toml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(echoed, cfg);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(toml::from_str::<RunConfig>("stepz = 3").is_err());
    }

    #[test]
    fn validation_catches_bad_ranges() {
        let mut cfg = RunConfig::default();
        cfg.optim.steps = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.slm.width = Some(64);
        assert!(cfg.validate().is_err());
    }
}
