//! Irregular-fragment jigsaw puzzles: fragment synthesis, puzzle generation,
//! classical and flow-matching solvers, and evaluation metrics.

pub mod compat;
pub mod error;
pub mod eval;
pub mod maskforge;
pub mod puzzlegen;
pub mod raster;
pub mod seed;
pub mod shapestats;
pub mod solve;

pub use error::{Error, Result};
