//! Illumination-plan optimization for tomographic volumetric additive
//! manufacturing.

pub mod cli;
pub mod config;
pub mod error;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod osmo;
pub mod penalty;
pub mod projector;
pub mod solver;
pub mod sweep;

pub use error::{Error, Result};
pub use geometry::{Label, TargetGeometry};
pub use penalty::{PenaltyConfig, PenaltyFamily};
pub use projector::{DoseImage, ProjectionGeometry, Projector, Sinogram};
pub use solver::{solve, solve_volume, SolveOptions, SolveResult};
