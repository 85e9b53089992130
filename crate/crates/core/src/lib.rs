//! Numerical laboratory for thin waveguides with a small passage and a shrinking room,
//! and their one-dimensional limit with a point interaction.

pub mod abstract_toolkit;
pub mod eigensolve;
pub mod error;
pub mod fem;
pub mod geometry;
pub mod identification;
pub mod io;
pub mod kronig_penney;
pub mod limit;
pub mod metrics;
pub mod sparse;
pub mod sweep;

pub use error::{Error, Result};
