//! Gaze-contingent phase-only hologram optimisation.
//!
//! The crate simulates a phase-only SLM display ([`propagation`]), maps images
//! into a foveated perceptual feature space ([`perception`]), scores
//! reconstructions against targets ([`losses`]), optimises SLM phase with Adam
//! through hand-written adjoints ([`optimizer`]) and prepares the result for a
//! physical SLM ([`slm`]).

pub mod compare;
pub mod corpus;
pub mod error;
pub mod fft;
pub mod losses;
pub mod metrics;
pub mod optimizer;
mod par;
pub mod perception;
pub mod propagation;
pub mod raster;
pub mod slm;

pub use error::{Error, Result};
pub use par::is_parallel;
pub use raster::{Grid, Image};
