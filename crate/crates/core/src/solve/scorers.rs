//! Position scorers for flow inference, including the trainable linear one.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::compat::{CompatibilityTable, Direction};
use crate::error::{Error, Result};
use crate::puzzlegen::Permutation;
use crate::solve::flow::{cross_entropy, sample_interpolant, CfmLoss};

/// Maps an assignment state and time to per-piece position logits.
pub trait Scorer: Sync {
    fn n(&self) -> usize;

    /// Row-major `N x N` logits; entry `i * N + j` scores piece `i` at
    /// position `j`.
    fn logits(&self, state: &[usize], t: f64) -> Vec<f64>;
}

/// Puts a fixed margin on the known answer.
#[derive(Debug, Clone)]
pub struct OracleScorer {
    target: Permutation,
    margin: f64,
}

impl OracleScorer {
    pub fn new(target: Permutation) -> Self {
        Self { target, margin: 10.0 }
    }
}

impl Scorer for OracleScorer {
    fn n(&self) -> usize {
        self.target.len()
    }

    fn logits(&self, _state: &[usize], _t: f64) -> Vec<f64> {
        let n = self.n();
        let mut out = vec![0.0; n * n];
        for (i, &j) in self.target.as_slice().iter().enumerate() {
            out[i * n + j] = self.margin;
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantScorer {
    n: usize,
}

impl ConstantScorer {
    pub fn new(n: usize) -> Self {
        Self { n }
    }
}

impl Scorer for ConstantScorer {
    fn n(&self) -> usize {
        self.n
    }

    fn logits(&self, _state: &[usize], _t: f64) -> Vec<f64> {
        vec![0.0; self.n * self.n]
    }
}

/// Pieces currently sitting on each position.
struct Occupancy(Vec<Vec<usize>>);

impl Occupancy {
    fn new(state: &[usize]) -> Self {
        let mut occ = vec![Vec::new(); state.len()];
        for (piece, &pos) in state.iter().enumerate() {
            occ[pos].push(piece);
        }
        Self(occ)
    }
}

fn neighbor_position(j: usize, k: usize, d: Direction) -> Option<usize> {
    let (dr, dc) = d.offset();
    let row = (j / k) as i64 + dr;
    let col = (j % k) as i64 + dc;
    (row >= 0 && col >= 0 && row < k as i64 && col < k as i64).then(|| row as usize * k + col as usize)
}

/// One minus the best pair compatibility of each piece per direction: high
/// when nothing fits on that side, i.e. the piece likely sits on that border.
fn border_evidence(table: &CompatibilityTable) -> Vec<[f64; 4]> {
    let n = table.n();
    (0..n)
        .map(|i| {
            Direction::ALL.map(|d| {
                let best = (0..n)
                    .filter(|&q| q != i)
                    .map(|q| table.pair_compat(i, q, d))
                    .fold(0.0, f64::max);
                1.0 - best
            })
        })
        .collect()
}

/// For piece `i` hypothetically at `j`, per direction (L, R, U, D): the mean
/// pair compatibility with the other pieces on the neighboring position,
/// the border evidence when that side is off the grid, and `None` when the
/// neighboring position holds no other piece.
fn side_scores(
    table: &CompatibilityTable,
    k: usize,
    occ: &Occupancy,
    border: &[[f64; 4]],
    i: usize,
    j: usize,
) -> [Option<f64>; 4] {
    Direction::ALL.map(|d| {
        let Some(p) = neighbor_position(j, k, d) else {
            return Some(border[i][d.index()]);
        };
        let (sum, count) = occ.0[p]
            .iter()
            .filter(|&&q| q != i)
            .fold((0.0, 0), |(s, c), &q| (s + table.pair_compat(i, q, d), c + 1));
        (count > 0).then(|| sum / count as f64)
    })
}

/// Scores position `j` for piece `i` by its mean compatibility with the
/// pieces currently adjacent to `j`; off-grid sides count with their border
/// evidence.
#[derive(Debug, Clone)]
pub struct NeighborCompatScorer<'a> {
    table: &'a CompatibilityTable,
    k: usize,
    border: Vec<[f64; 4]>,
}

impl<'a> NeighborCompatScorer<'a> {
    pub fn new(table: &'a CompatibilityTable, k: usize) -> Self {
        assert_eq!(table.n(), k * k, "table size must match the grid");
        Self {
            table,
            k,
            border: border_evidence(table),
        }
    }
}

impl Scorer for NeighborCompatScorer<'_> {
    fn n(&self) -> usize {
        self.table.n()
    }

    fn logits(&self, state: &[usize], _t: f64) -> Vec<f64> {
        let n = self.n();
        let occ = Occupancy::new(state);
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let (s, c) = side_scores(self.table, self.k, &occ, &self.border, i, j)
                    .iter()
                    .flatten()
                    .fold((0.0, 0), |(s, c), v| (s + v, c + 1));
                out[i * n + j] = if c == 0 { 0.0 } else { s / c as f64 };
            }
        }
        out
    }
}

pub const FEATURE_VERSION: u32 = 1;
/// Side scores L/R/U/D, stay indicator, t, bias.
pub const FEATURE_COUNT: usize = 7;

/// `phi(i, j, state, t)` for every piece/position pair, row-major. A side
/// whose neighboring position holds no other piece scores 0.
pub fn linear_features(table: &CompatibilityTable, k: usize, state: &[usize], t: f64) -> Vec<[f64; FEATURE_COUNT]> {
    let n = table.n();
    let occ = Occupancy::new(state);
    let border = border_evidence(table);
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let sides = side_scores(table, k, &occ, &border, i, j).map(|v| v.unwrap_or(0.0));
            out.push([
                sides[0],
                sides[1],
                sides[2],
                sides[3],
                if state[i] == j { 1.0 } else { 0.0 },
                t,
                1.0,
            ]);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearScorerParams {
    pub feature_version: u32,
    pub weights: Vec<f64>,
}

impl Default for LinearScorerParams {
    fn default() -> Self {
        Self {
            feature_version: FEATURE_VERSION,
            weights: vec![0.0; FEATURE_COUNT],
        }
    }
}

impl LinearScorerParams {
    pub fn validate(&self) -> Result<()> {
        if self.feature_version != FEATURE_VERSION {
            return Err(Error::Config(format!(
                "scorer features version {} is not supported (expected {FEATURE_VERSION})",
                self.feature_version
            )));
        }
        if self.weights.len() != FEATURE_COUNT {
            return Err(Error::LengthMismatch(format!(
                "{} weights, expected {FEATURE_COUNT}",
                self.weights.len()
            )));
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("scorer weights".into()));
        }
        Ok(())
    }
}

pub fn linear_logits(weights: &[f64], features: &[[f64; FEATURE_COUNT]]) -> Vec<f64> {
    features
        .iter()
        .map(|phi| phi.iter().zip(weights).map(|(a, b)| a * b).sum())
        .collect()
}

/// CFM loss of the linear scorer on precomputed features and the gradient
/// of its sum with respect to the weights.
pub fn linear_loss_and_grad(
    weights: &[f64],
    features: &[[f64; FEATURE_COUNT]],
    target: &Permutation,
) -> (CfmLoss, Vec<f64>) {
    let n = target.len();
    let logits = linear_logits(weights, features);
    let mut grad = vec![0.0; FEATURE_COUNT];
    let mut sum = 0.0;
    for i in 0..n {
        let row = &logits[i * n..(i + 1) * n];
        let tgt = target.position(i);
        sum += cross_entropy(row, tgt);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|v| (v - max).exp()).sum();
        for j in 0..n {
            let p = (row[j] - max).exp() / z - if j == tgt { 1.0 } else { 0.0 };
            for (g, f) in grad.iter_mut().zip(&features[i * n + j]) {
                *g += p * f;
            }
        }
    }
    (
        CfmLoss {
            sum,
            mean: sum / n as f64,
        },
        grad,
    )
}

#[derive(Debug, Clone)]
pub struct LinearScorer<'a> {
    params: LinearScorerParams,
    table: &'a CompatibilityTable,
    k: usize,
}

impl<'a> LinearScorer<'a> {
    pub fn new(params: LinearScorerParams, table: &'a CompatibilityTable, k: usize) -> Result<Self> {
        params.validate()?;
        if table.n() != k * k {
            return Err(Error::LengthMismatch(format!(
                "{} pieces for a {k}x{k} grid",
                table.n()
            )));
        }
        Ok(Self { params, table, k })
    }
}

impl Scorer for LinearScorer<'_> {
    fn n(&self) -> usize {
        self.table.n()
    }

    fn logits(&self, state: &[usize], t: f64) -> Vec<f64> {
        linear_logits(&self.params.weights, &linear_features(self.table, self.k, state, t))
    }
}

/// One supervised example: compatibilities, grid side and solution.
#[derive(Debug, Clone)]
pub struct TrainingPuzzle {
    pub table: CompatibilityTable,
    pub k: usize,
    pub target: Permutation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub params: LinearScorerParams,
    /// Mean per-piece loss over the last epoch; `None` after zero epochs.
    pub final_loss: Option<f64>,
    pub epoch_losses: Vec<f64>,
}

/// Plain SGD on the per-piece mean CFM loss. Each step draws a uniform
/// source permutation and `t ~ U[0, 1)` for one puzzle.
pub fn train_linear_scorer<R: Rng + ?Sized>(
    puzzles: &[TrainingPuzzle],
    epochs: usize,
    learning_rate: f64,
    rng: &mut R,
) -> Result<TrainOutcome> {
    if puzzles.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    if !(learning_rate.is_finite() && learning_rate > 0.0) {
        return Err(Error::Config(format!(
            "learning rate must be positive, got {learning_rate}"
        )));
    }
    for p in puzzles {
        if p.table.n() != p.k * p.k || p.target.len() != p.table.n() {
            return Err(Error::LengthMismatch(format!(
                "training puzzle with {} pieces, k={}, target length {}",
                p.table.n(),
                p.k,
                p.target.len()
            )));
        }
    }
    let mut params = LinearScorerParams::default();
    let mut epoch_losses = Vec::with_capacity(epochs);
    let mut order: Vec<usize> = (0..puzzles.len()).collect();
    for epoch in 0..epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for &idx in &order {
            let p = &puzzles[idx];
            let pi0 = Permutation::random(p.target.len(), rng);
            let t = rng.random::<f64>();
            let state = sample_interpolant(&pi0, &p.target, t, rng)?;
            let features = linear_features(&p.table, p.k, &state.positions, t);
            let (loss, grad) = linear_loss_and_grad(&params.weights, &features, &p.target);
            if !loss.mean.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            let n = p.target.len() as f64;
            for (w, g) in params.weights.iter_mut().zip(&grad) {
                *w -= learning_rate * g / n;
            }
            if params.weights.iter().any(|w| !w.is_finite()) {
                return Err(Error::Divergence { epoch });
            }
            total += loss.mean;
        }
        epoch_losses.push(total / puzzles.len() as f64);
    }
    Ok(TrainOutcome {
        params,
        final_loss: epoch_losses.last().copied(),
        epoch_losses,
    })
}
