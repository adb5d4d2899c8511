//! Gradient-based phase retrieval with Adam.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{build_objective, LossConfig, LossKind, Objective};
use crate::perception::GazeContext;
use crate::propagation::{canonical_phase, default_wavelengths, PhaseMap, Propagator, DEFAULT_PITCH, TAU};
use crate::raster::{Grid, Image};

/// SLM geometry and illumination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DisplayConfig {
    pub pitch: f64,
    /// One wavelength per target channel; empty selects defaults by channel count.
    pub wavelengths: Vec<f64>,
    /// Propagate on a 2x zero-padded grid.
    pub padded: bool,
}

impl Default for DisplayConfig {
    fn default() -> Self {
        Self {
            pitch: DEFAULT_PITCH,
            wavelengths: Vec::new(),
            padded: false,
        }
    }
}

impl DisplayConfig {
    pub fn wavelengths_for(&self, channels: usize) -> Result<Vec<f64>> {
        if self.wavelengths.is_empty() {
            return Ok(default_wavelengths(channels));
        }
        if self.wavelengths.len() != channels {
            return Err(Error::config(format!(
                "{} wavelengths configured for a {channels}-channel target",
                self.wavelengths.len()
            )));
        }
        Ok(self.wavelengths.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub loss_kind: LossKind,
    pub loss: LossConfig,
    pub display: DisplayConfig,
    /// Iterations of a warm-started run.
    pub warm_steps: usize,
    /// Learning-rate multiplier for warm-started runs.
    pub warm_lr_scale: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            learning_rate: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            loss_kind: LossKind::Metameric,
            loss: LossConfig::default(),
            display: DisplayConfig::default(),
            warm_steps: 5,
            warm_lr_scale: 0.2,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps < 1 {
            return Err(Error::config("steps must be at least 1"));
        }
        if self.warm_steps < 1 {
            return Err(Error::config("warm_steps must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be positive"));
        }
        if !(self.warm_lr_scale > 0.0 && self.warm_lr_scale.is_finite()) {
            return Err(Error::config("warm_lr_scale must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("Adam betas must lie in [0, 1)"));
        }
        if !(self.eps > 0.0) {
            return Err(Error::config("Adam eps must be positive"));
        }
        self.loss.validate()
    }
}

/// Adam moment estimates, shaped like the phase map.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<Grid>,
    pub second_moment: Vec<Grid>,
    pub step_count: u64,
}

impl AdamState {
    pub fn new(phase: &PhaseMap) -> Self {
        let zeros: Vec<Grid> = phase.channels().iter().map(|c| Grid::zeros(c.dim())).collect();
        Self {
            first_moment: zeros.clone(),
            second_moment: zeros,
            step_count: 0,
        }
    }
}

/// One bias-corrected Adam update; the phase is re-canonicalized to `[0, 2pi)`.
pub fn adam_step(
    phase: &mut PhaseMap,
    gradient: &[Grid],
    state: &mut AdamState,
    learning_rate: f64,
    cfg: &OptimConfig,
) -> Result<()> {
    if gradient.len() != phase.channel_count()
        || gradient.iter().zip(phase.channels()).any(|(g, p)| g.dim() != p.dim())
        || state.first_moment.len() != phase.channel_count()
    {
        return Err(Error::input("gradient or Adam state does not match the phase layout"));
    }
    if gradient.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
        return Err(Error::Diverged {
            iteration: state.step_count as usize,
            loss: f64::NAN,
        });
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for c in 0..gradient.len() {
        let g = &gradient[c];
        let m = &mut state.first_moment[c];
        let v = &mut state.second_moment[c];
        let p = &mut phase.channels_mut()[c];
        ndarray::Zip::from(p).and(m).and(v).and(g).for_each(|p, m, v, g| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let update = learning_rate * (*m / c1) / ((*v / c2).sqrt() + cfg.eps);
            *p = canonical_phase(*p - update);
        });
    }
    Ok(())
}

/// A target, its objective and the display model, ready to score phase maps.
pub struct HologramProblem {
    propagator: Propagator,
    objective: Box<dyn Objective>,
    /// Per-channel factor mapping unit-energy intensity onto target units.
    scales: Vec<f64>,
}

impl std::fmt::Debug for HologramProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HologramProblem")
            .field("propagator", &self.propagator)
            .field("scales", &self.scales)
            .finish_non_exhaustive()
    }
}

impl HologramProblem {
    pub fn new(target: &Image, ctx: &GazeContext, distance: f64, cfg: &OptimConfig) -> Result<Self> {
        let objective = build_objective(cfg.loss_kind, target, ctx, &cfg.loss, cfg.seed)?;
        Self::with_objective(target, objective, distance, &cfg.display)
    }

    pub fn with_objective(
        target: &Image,
        objective: Box<dyn Objective>,
        distance: f64,
        display: &DisplayConfig,
    ) -> Result<Self> {
        let wavelengths = display.wavelengths_for(target.channel_count())?;
        let propagator = Propagator::new(
            target.width(),
            target.height(),
            display.pitch,
            distance,
            &wavelengths,
            display.padded,
        )?;
        // A unit-amplitude SLM delivers mean intensity 1; match the target's mean.
        let scales = target.channel_means();
        Ok(Self {
            propagator,
            objective,
            scales,
        })
    }

    pub fn propagator(&self) -> &Propagator {
        &self.propagator
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    fn scale_image(&self, raw: Image) -> Image {
        Image::from_parts(
            raw.into_channels()
                .into_iter()
                .zip(&self.scales)
                .map(|(c, s)| c * *s)
                .collect(),
        )
    }

    /// Reconstruction in target units.
    pub fn simulate(&self, phase: &PhaseMap) -> Result<Image> {
        Ok(self.scale_image(self.propagator.intensity(phase)?))
    }

    pub fn loss(&self, phase: &PhaseMap) -> Result<f64> {
        self.objective.value(&self.simulate(phase)?)
    }

    /// Loss and its exact derivative with respect to every phase value.
    pub fn loss_and_gradient(&self, phase: &PhaseMap) -> Result<(f64, Vec<Grid>)> {
        let (raw, cache) = self.propagator.forward(phase)?;
        let img = self.scale_image(raw);
        let (value, mut grad_img) = self.objective.value_and_grad(&img)?;
        for (g, s) in grad_img.iter_mut().zip(&self.scales) {
            *g *= *s;
        }
        let grad = self.propagator.backward(phase, &cache, &grad_img)?;
        Ok((value, grad))
    }
}

pub fn gradient(problem: &HologramProblem, phase: &PhaseMap) -> Result<Vec<Grid>> {
    Ok(problem.loss_and_gradient(phase)?.1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub phase: PhaseMap,
    /// Loss at each iteration, evaluated before that iteration's update.
    pub history: Vec<f64>,
    /// Loss after the last update.
    pub final_loss: f64,
}

/// Uniform random phase in `[0, 2pi)` from a seeded ChaCha stream.
pub fn random_phase(channels: usize, width: usize, height: usize, pitch: f64, seed: u64) -> Result<PhaseMap> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..channels)
        .map(|_| Grid::from_shape_fn((height, width), |_| rng.gen_range(0.0..TAU)))
        .collect();
    PhaseMap::new(data, pitch)
}

/// Runs `steps` Adam iterations from `phase`, reporting `(iteration, loss)` to `progress`.
pub fn run_adam(
    problem: &HologramProblem,
    mut phase: PhaseMap,
    steps: usize,
    learning_rate: f64,
    cfg: &OptimConfig,
    progress: &mut dyn FnMut(usize, f64),
) -> Result<OptimResult> {
    if steps < 1 {
        return Err(Error::config("steps must be at least 1"));
    }
    let mut state = AdamState::new(&phase);
    let mut history = Vec::with_capacity(steps);
    for iteration in 0..steps {
        let (loss, grad) = problem.loss_and_gradient(&phase)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { iteration, loss });
        }
        history.push(loss);
        progress(iteration, loss);
        adam_step(&mut phase, &grad, &mut state, learning_rate, cfg).map_err(|e| match e {
            Error::Diverged { .. } => Error::Diverged { iteration, loss },
            other => other,
        })?;
    }
    let final_loss = problem.loss(&phase)?;
    if !final_loss.is_finite() {
        return Err(Error::Diverged {
            iteration: steps,
            loss: final_loss,
        });
    }
    Ok(OptimResult {
        phase,
        history,
        final_loss,
    })
}

fn check_target(target: &Image, cfg: &OptimConfig) -> Result<()> {
    cfg.validate()?;
    cfg.display.wavelengths_for(target.channel_count())?;
    Ok(())
}

pub fn optimise_hologram(target: &Image, ctx: &GazeContext, distance: f64, cfg: &OptimConfig) -> Result<OptimResult> {
    optimise_hologram_with(target, ctx, distance, cfg, &mut |_, _| {})
}

pub fn optimise_hologram_with(
    target: &Image,
    ctx: &GazeContext,
    distance: f64,
    cfg: &OptimConfig,
    progress: &mut dyn FnMut(usize, f64),
) -> Result<OptimResult> {
    check_target(target, cfg)?;
    let problem = HologramProblem::new(target, ctx, distance, cfg)?;
    optimise_problem(&problem, target, cfg, progress)
}

/// Random-start optimisation of an already built problem.
pub fn optimise_problem(
    problem: &HologramProblem,
    target: &Image,
    cfg: &OptimConfig,
    progress: &mut dyn FnMut(usize, f64),
) -> Result<OptimResult> {
    check_target(target, cfg)?;
    let init = random_phase(
        target.channel_count(),
        target.width(),
        target.height(),
        cfg.display.pitch,
        cfg.seed,
    )?;
    run_adam(problem, init, cfg.steps, cfg.learning_rate, cfg, progress)
}

/// Short, low-rate optimisation starting from a previous solution.
pub fn warm_start_optimise(
    prev: &PhaseMap,
    target: &Image,
    ctx: &GazeContext,
    distance: f64,
    cfg: &OptimConfig,
) -> Result<OptimResult> {
    check_target(target, cfg)?;
    let problem = HologramProblem::new(target, ctx, distance, cfg)?;
    warm_start_problem(&problem, prev, target, cfg)
}

fn warm_start_problem(problem: &HologramProblem, prev: &PhaseMap, target: &Image, cfg: &OptimConfig) -> Result<OptimResult> {
    if prev.width() != target.width() || prev.height() != target.height() || prev.channel_count() != target.channel_count() {
        return Err(Error::input("previous phase does not match the target layout"));
    }
    run_adam(
        problem,
        prev.clone(),
        cfg.warm_steps,
        cfg.learning_rate * cfg.warm_lr_scale,
        cfg,
        &mut |_, _| {},
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalResult {
    pub phases: Vec<PhaseMap>,
    /// Simulated reconstruction of each hologram, in target units.
    pub frames: Vec<Image>,
    /// Mean of `frames`: what the eye integrates over the sequence.
    pub average: Image,
}

/// A random-start hologram followed by `count - 1` warm-started successors.
pub fn temporal_sequence(
    target: &Image,
    ctx: &GazeContext,
    distance: f64,
    cfg: &OptimConfig,
    count: usize,
) -> Result<TemporalResult> {
    if count < 1 {
        return Err(Error::config("temporal sequences need at least one frame"));
    }
    check_target(target, cfg)?;
    let problem = HologramProblem::new(target, ctx, distance, cfg)?;
    let first = optimise_problem(&problem, target, cfg, &mut |_, _| {})?;
    let mut phases = vec![first.phase];
    while phases.len() < count {
        let prev = phases.last().expect("nonempty");
        let next = warm_start_problem(&problem, prev, target, cfg)?;
        phases.push(next.phase);
    }
    let frames = phases
        .iter()
        .map(|p| problem.simulate(p))
        .collect::<Result<Vec<_>>>()?;
    let average = average_images(&frames);
    Ok(TemporalResult {
        phases,
        frames,
        average,
    })
}

/// Elementwise mean, accumulated in frame order.
pub fn average_images(frames: &[Image]) -> Image {
    let n = frames.len() as f64;
    let mut acc: Vec<Grid> = frames[0].channels().to_vec();
    for f in &frames[1..] {
        for (a, c) in acc.iter_mut().zip(f.channels()) {
            *a += c;
        }
    }
    if frames.len() > 1 {
        for a in &mut acc {
            *a /= n;
        }
    }
    Image::from_parts(acc)
}
