//! Controlled comparison of losses: same target, seed and display, one
//! optimisation per loss.

use crate::error::Result;
use crate::losses::{metameric_loss, LossKind};
use crate::metrics::region_errors;
use crate::optimizer::{optimise_problem, HologramProblem, OptimConfig};
use crate::par;
use crate::perception::GazeContext;
use crate::propagation::PhaseMap;
use crate::raster::Image;

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub loss: LossKind,
    pub full_mse: f64,
    pub foveal_mse: Option<f64>,
    pub peripheral_mse: Option<f64>,
    /// Metameric loss of the reconstruction against the target.
    pub metameric: f64,
    pub history: Vec<f64>,
    pub phase: PhaseMap,
    pub reconstruction: Image,
}

/// Optimises once per entry of `losses`, all from `cfg.seed`, and scores each
/// reconstruction in pixel and perceptual terms. Rows follow `losses` order.
pub fn compare_losses(
    target: &Image,
    ctx: &GazeContext,
    distance: f64,
    cfg: &OptimConfig,
    losses: &[LossKind],
) -> Result<Vec<CompareRow>> {
    cfg.validate()?;
    ctx.validate()?;
    let rows = par::map_slice(losses, |&loss| -> Result<CompareRow> {
        let run_cfg = OptimConfig {
            loss_kind: loss,
            ..cfg.clone()
        };
        let problem = HologramProblem::new(target, ctx, distance, &run_cfg)?;
        let result = optimise_problem(&problem, target, &run_cfg, &mut |_, _| {})?;
        let reconstruction = problem.simulate(&result.phase)?;
        let errors = region_errors(&reconstruction, target, ctx)?;
        let metameric = metameric_loss(&reconstruction, target, ctx, &cfg.loss)?;
        Ok(CompareRow {
            loss,
            full_mse: errors.full,
            foveal_mse: errors.foveal,
            peripheral_mse: errors.peripheral,
            metameric,
            history: result.history,
            phase: result.phase,
            reconstruction,
        })
    });
    rows.into_iter().collect()
}
