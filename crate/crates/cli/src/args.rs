//! Command-line surface. Flags override values from `--config`.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use metaholo_core::losses::LossKind;
use metaholo_core::slm::Grating;

use crate::config::{parse_gaze, parse_loss, RunConfig};
use crate::error::CliResult;

#[derive(Debug, Parser)]
#[command(name = "metaholo", version, about = "Gaze-contingent metameric phase-only holograms")]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimise a phase hologram for a target image.
    Optimise(Common),
    /// Reconstruct the image of an exported hologram.
    Simulate {
        /// Sidecar JSON written by `optimise` or `encode`.
        sidecar: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Optimise once per loss from the same seed and tabulate the errors.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated loss names.
        #[arg(long, value_delimiter = ',', value_parser = parse_loss)]
        losses: Option<Vec<LossKind>>,
    },
    /// Synthesize a metamer of the target for the configured gaze.
    Metamer {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        passes: Option<usize>,
    },
    /// Quantize a raw phase dump into SLM drive images.
    Encode {
        /// Raw phase dump (`phase.f32`).
        phase: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        grating: Option<GratingArg>,
        #[arg(long)]
        bits: Option<u8>,
    },
    /// Build a warm-started hologram sequence and average its reconstructions.
    Average {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        count: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum GratingArg {
    None,
    Horizontal,
}

impl From<GratingArg> for Grating {
    fn from(g: GratingArg) -> Grating {
        match g {
            GratingArg::None => Grating::None,
            GratingArg::Horizontal => Grating::Horizontal,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// TOML file mirroring the run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// `x,y` in normalized image coordinates, or `center`.
    #[arg(long, value_parser = parse_gaze, allow_hyphen_values = true)]
    pub gaze: Option<[f64; 2]>,
    /// Propagation distance in meters.
    #[arg(long, allow_hyphen_values = true)]
    pub distance: Option<f64>,
    /// Pooling growth rate.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Display pixels per degree of visual angle.
    #[arg(long)]
    pub ppd: Option<f64>,
    #[arg(long, value_parser = parse_loss)]
    pub loss: Option<LossKind>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Resample the target to the SLM size.
    #[arg(long)]
    pub resize: bool,
    /// Treat image files as linear light.
    #[arg(long)]
    pub linear: bool,
}

impl Common {
    /// The config file (or defaults) with every given flag applied, validated.
    pub fn resolve(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(t) = &self.target {
            cfg.target = Some(t.clone());
        }
        if let Some(g) = self.gaze {
            cfg.gaze.gaze = g;
        }
        if let Some(d) = self.distance {
            cfg.distance = Some(d);
        }
        if let Some(a) = self.alpha {
            cfg.gaze.alpha = a;
        }
        if let Some(p) = self.ppd {
            cfg.gaze.pixels_per_degree = p;
        }
        if let Some(l) = self.loss {
            cfg.optim.loss = l;
        }
        if let Some(s) = self.steps {
            cfg.optim.steps = s;
        }
        if let Some(lr) = self.lr {
            cfg.optim.learning_rate = lr;
        }
        if let Some(s) = self.seed {
            cfg.optim.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        cfg.resize |= self.resize;
        cfg.linear |= self.linear;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "[optim]\nsteps = 9\nseed = 3\n[gaze]\nalpha = 0.2\n").unwrap();
        let cli = Cli::parse_from([
            "metaholo",
            "optimise",
            "--config",
            path.to_str().unwrap(),
            "--seed",
            "7",
            "--gaze",
            "center",
        ]);
        let Command::Optimise(common) = cli.command else {
            panic!("wrong verb");
        };
        let cfg = common.resolve().unwrap();
        assert_eq!(cfg.optim.steps, 9);
        assert_eq!(cfg.optim.seed, 7);
        assert_eq!(cfg.gaze.alpha, 0.2);
        assert_eq!(cfg.gaze.gaze, [0.5, 0.5]);
    }

    #[test]
    fn loss_lists_parse() {
        let cli = Cli::parse_from(["metaholo", "compare", "--losses", "mse,metameric"]);
        let Command::Compare { losses, .. } = cli.command else {
            panic!("wrong verb");
        };
        assert_eq!(losses.unwrap(), vec![LossKind::Mse, LossKind::Metameric]);
    }
}
