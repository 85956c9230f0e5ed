//! Desk-scale numerics for rearranged trigonometric majorants.

pub mod assembly;
pub mod bands;
pub mod constants;
pub mod demeter;
pub mod directional;
pub mod discrete;
pub mod divergence;
pub mod error;
pub mod exec;
pub mod majorant;
pub mod seed;
pub mod spectral;

pub use error::{Error, Result};
pub use exec::Exec;
