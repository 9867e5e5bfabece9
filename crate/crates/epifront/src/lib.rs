//! Simulation engine for an epidemic front advancing through a susceptible
//! population. Individuals carry one-dimensional "shielding level" diffusions
//! reflected above a moving lower boundary (the front). Boundary contact
//! accumulates local time; an exponential clock racing a local-time-driven
//! hazard decides infection. Each infection pushes the front further via an
//! infection-age kernel, closing the feedback loop.
//!
//! Modules:
//! - [`coefficients`]: parametric catalogs (kernel, drift, diffusion, rate,
//!   initial law) and structural validation.
//! - [`sde`]: deterministic noise streams and the reflected Euler step.
//! - [`epidemic`]: the interacting particle engine and its coupled variants.
//! - [`lamperti`]: the moving-frame rescaling to a unit-diffusion process.
//! - [`analysis`]: compensator, martingale and decay diagnostics, infection
//!   law checks, and an SIR baseline.
//! - [`scenario`]: the TOML scenario schema used by the command line tool.

pub mod analysis;
pub mod coefficients;
pub mod epidemic;
pub mod error;
pub mod lamperti;
pub mod scenario;
pub mod sde;
pub mod stats;

pub use error::{Error, Result};
