//! Simulation and certification toolkit for nonlinear time-varying impulsive
//! systems: impulse-time sequence classes, Lyapunov-rate certificates,
//! scalar comparison systems, and trajectory ensembles.

pub mod error;
pub mod presets;
pub mod quad;
pub mod ratefns;
pub mod analysis;
pub mod certificates;
pub mod comparison;
pub mod sequences;
pub mod simulator;

pub use error::{Error, Result};
