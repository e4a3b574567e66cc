//! Discrete flow matching over permutations: interpolant sampling, the
//! CFM objective and iterative greedy-assignment inference.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::puzzlegen::Permutation;
use crate::solve::scorers::Scorer;

/// Per-piece positions between a source and target permutation. Entries
/// may collide; only solver outputs are guaranteed bijective.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentState {
    pub positions: Vec<usize>,
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowConfig {
    pub steps: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self { steps: 20 }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("flow steps must be >= 1".into()));
        }
        Ok(())
    }
}

/// Independently per piece: the target position with probability `t`
/// (linear schedule), the source position otherwise.
pub fn sample_interpolant<R: Rng + ?Sized>(
    pi0: &Permutation,
    pi1: &Permutation,
    t: f64,
    rng: &mut R,
) -> Result<AssignmentState> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Precondition(format!("t must be in [0, 1], got {t}")));
    }
    if pi0.len() != pi1.len() {
        return Err(Error::LengthMismatch(format!(
            "source has {} pieces, target {}",
            pi0.len(),
            pi1.len()
        )));
    }
    let positions = pi0
        .as_slice()
        .iter()
        .zip(pi1.as_slice())
        .map(|(&a, &b)| if rng.random::<f64>() < t { b } else { a })
        .collect();
    Ok(AssignmentState { positions, t })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CfmLoss {
    /// Sum over pieces of the cross-entropy.
    pub sum: f64,
    /// Per-piece mean.
    pub mean: f64,
}

fn check_logits(logits: &[f64], n: usize) -> Result<()> {
    if logits.len() != n * n {
        return Err(Error::LengthMismatch(format!(
            "scorer returned {} logits, expected {}",
            logits.len(),
            n * n
        )));
    }
    if let Some(bad) = logits.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "logit for piece {} at position {} is {}",
            bad / n,
            bad % n,
            logits[bad]
        )));
    }
    Ok(())
}

/// `-log softmax(row)[target]` computed stably.
pub fn cross_entropy(row: &[f64], target: usize) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    lse - row[target]
}

/// Cross-entropy of the target position for every piece, given N x N
/// row-major logits.
pub fn cfm_loss_from_logits(logits: &[f64], target: &Permutation) -> Result<CfmLoss> {
    let n = target.len();
    check_logits(logits, n)?;
    let sum: f64 = (0..n)
        .map(|i| cross_entropy(&logits[i * n..(i + 1) * n], target.position(i)))
        .sum();
    Ok(CfmLoss {
        sum,
        mean: sum / n as f64,
    })
}

/// Samples `pi_t` and scores it against `pi1`.
pub fn cfm_loss<R: Rng + ?Sized>(
    scorer: &dyn Scorer,
    pi0: &Permutation,
    pi1: &Permutation,
    t: f64,
    rng: &mut R,
) -> Result<(CfmLoss, AssignmentState)> {
    let state = sample_interpolant(pi0, pi1, t, rng)?;
    let logits = scorer.logits(&state.positions, t);
    Ok((cfm_loss_from_logits(&logits, pi1)?, state))
}

/// Builds a permutation from logits: pieces in descending order of their
/// best logit (ties to the smaller piece), each taking its best still-free
/// position (ties to the smaller position).
pub fn greedy_assign(logits: &[f64], n: usize) -> Vec<usize> {
    let mut order: Vec<(usize, f64)> = (0..n)
        .map(|i| {
            let best = logits[i * n..(i + 1) * n]
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            (i, best)
        })
        .collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut taken = vec![false; n];
    let mut out = vec![0; n];
    for (i, _) in order {
        let row = &logits[i * n..(i + 1) * n];
        let mut best: Option<usize> = None;
        for j in (0..n).filter(|&j| !taken[j]) {
            if best.is_none_or(|b| row[j] > row[b]) {
                best = Some(j);
            }
        }
        let j = best.expect("a free position remains for every piece");
        taken[j] = true;
        out[i] = j;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowOutcome {
    pub permutation: Permutation,
    pub steps: usize,
}

/// Starts from a uniform random permutation and, for `t = s / S`,
/// re-derives the whole assignment from the scorer's logits.
pub fn flow_solve<R: Rng + ?Sized>(scorer: &dyn Scorer, config: &FlowConfig, rng: &mut R) -> Result<FlowOutcome> {
    config.validate()?;
    let n = scorer.n();
    let mut state = Permutation::random(n, rng).as_slice().to_vec();
    for s in 1..=config.steps {
        let t = s as f64 / config.steps as f64;
        let logits = scorer.logits(&state, t);
        check_logits(&logits, n)?;
        state = greedy_assign(&logits, n);
    }
    Ok(FlowOutcome {
        permutation: Permutation::new(state)?,
        steps: config.steps,
    })
}
