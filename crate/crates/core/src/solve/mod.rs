//! Solving engines: greedy best-buddy placement, genetic algorithm, and
//! flow-matching inference with pluggable scorers.

pub mod flow;
pub mod genetic;
pub mod greedy;
pub mod scorers;

use rand::Rng;

pub use flow::{flow_solve, sample_interpolant, AssignmentState, FlowConfig};
pub use genetic::{ga_solve, pmx_crossover, GaConfig};
pub use greedy::greedy_solve;
pub use scorers::{LinearScorerParams, Scorer};

use crate::puzzlegen::Permutation;

/// Uniform random layout; the chance-level baseline.
pub fn random_solve<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Permutation {
    Permutation::random(n, rng)
}
