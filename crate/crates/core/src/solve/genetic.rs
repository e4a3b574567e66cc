//! Genetic algorithm over layouts with PMX crossover and elitism.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::compat::{CompatibilityTable, Direction};
use crate::error::{Error, Result};
use crate::puzzlegen::Permutation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    pub early_stop_patience: usize,
    pub mutation_rate: f64,
    pub crossover_rate: f64,
    pub tournament_size: usize,
    pub elitism_ratio: f64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 100,
            generations: 1000,
            early_stop_patience: 100,
            mutation_rate: 0.01,
            crossover_rate: 0.8,
            tournament_size: 3,
            elitism_ratio: 0.1,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("mutation_rate", self.mutation_rate),
            ("crossover_rate", self.crossover_rate),
            ("elitism_ratio", self.elitism_ratio),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        if self.tournament_size == 0 || self.population <= self.tournament_size {
            return Err(Error::Config(format!(
                "population ({}) must exceed tournament_size ({}) >= 1",
                self.population, self.tournament_size
            )));
        }
        Ok(())
    }

    fn elite_count(&self) -> usize {
        (self.elitism_ratio * self.population as f64).round() as usize
    }
}

/// Partially mapped crossover. The child keeps `parent1[cut1..cut2]`; every
/// other slot takes `parent2`'s value, chased through the segment mapping
/// until it no longer collides with the copied segment.
pub fn pmx_crossover(parent1: &[usize], parent2: &[usize], cut1: usize, cut2: usize) -> Vec<usize> {
    let n = parent1.len();
    assert_eq!(n, parent2.len(), "parents must have equal length");
    assert!(cut1 < cut2 && cut2 <= n, "cuts must satisfy cut1 < cut2 <= n");
    let mut index_in_p1 = vec![0; n];
    for (i, &v) in parent1.iter().enumerate() {
        index_in_p1[v] = i;
    }
    let in_segment = |v: usize| (cut1..cut2).contains(&index_in_p1[v]);
    let mut child = parent2.to_vec();
    child[cut1..cut2].copy_from_slice(&parent1[cut1..cut2]);
    for pos in (0..cut1).chain(cut2..n) {
        let mut v = parent2[pos];
        while in_segment(v) {
            v = parent2[index_in_p1[v]];
        }
        child[pos] = v;
    }
    child
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mutation {
    Swap,
    Inversion,
    Scramble,
}

/// Applies one mutation in place; a no-op for fewer than two genes.
pub fn mutate<R: Rng + ?Sized>(genes: &mut [usize], kind: Mutation, rng: &mut R) {
    let n = genes.len();
    if n < 2 {
        return;
    }
    let a = rng.random_range(0..n);
    let mut b = rng.random_range(0..n - 1);
    if b >= a {
        b += 1;
    }
    let (lo, hi) = (a.min(b), a.max(b));
    match kind {
        Mutation::Swap => genes.swap(lo, hi),
        Mutation::Inversion => genes[lo..=hi].reverse(),
        Mutation::Scramble => genes[lo..=hi].shuffle(rng),
    }
}

/// Negative total dissimilarity over right and down neighbors of a
/// position-major layout (`genes[position] = piece`).
pub fn layout_fitness(genes: &[usize], k: usize, table: &CompatibilityTable) -> f64 {
    let mut total = 0.0;
    for row in 0..k {
        for col in 0..k {
            let a = genes[row * k + col];
            if col + 1 < k {
                total += table.dissimilarity(a, genes[row * k + col + 1], Direction::Right);
            }
            if row + 1 < k {
                total += table.dissimilarity(a, genes[(row + 1) * k + col], Direction::Down);
            }
        }
    }
    -total
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaOutcome {
    pub permutation: Permutation,
    pub best_fitness: f64,
    /// Best-so-far fitness after initialization and after each generation.
    pub trace: Vec<f64>,
    pub generations: usize,
}

fn tournament<R: Rng + ?Sized>(fitness: &[f64], size: usize, rng: &mut R) -> usize {
    let mut best = rng.random_range(0..fitness.len());
    for _ in 1..size {
        let c = rng.random_range(0..fitness.len());
        if fitness[c] > fitness[best] {
            best = c;
        }
    }
    best
}

/// Runs the GA; `observe` sees the population (position-major layouts)
/// after initialization and after every generation.
pub fn ga_solve_observed<R: Rng + ?Sized>(
    table: &CompatibilityTable,
    k: usize,
    config: &GaConfig,
    rng: &mut R,
    mut observe: impl FnMut(usize, &[Vec<usize>]),
) -> Result<GaOutcome> {
    config.validate()?;
    let n = table.n();
    if n != k * k {
        return Err(Error::LengthMismatch(format!("{n} pieces for a {k}x{k} grid")));
    }
    let mut population: Vec<Vec<usize>> = (0..config.population)
        .map(|_| {
            let mut g: Vec<usize> = (0..n).collect();
            g.shuffle(rng);
            g
        })
        .collect();
    let score = |pop: &[Vec<usize>]| -> Vec<f64> { pop.iter().map(|g| layout_fitness(g, k, table)).collect() };
    let mut fitness = score(&population);
    observe(0, &population);

    let argmax = |f: &[f64]| {
        (0..f.len())
            .max_by(|&a, &b| f[a].total_cmp(&f[b]).then(b.cmp(&a)))
            .expect("population is non-empty")
    };
    let first = argmax(&fitness);
    let mut best = population[first].clone();
    let mut best_fitness = fitness[first];
    let mut trace = vec![best_fitness];
    let mut stall = 0;
    let mut generations = 0;

    for generation in 1..=config.generations {
        let mut order: Vec<usize> = (0..population.len()).collect();
        order.sort_by(|&a, &b| fitness[b].total_cmp(&fitness[a]).then(a.cmp(&b)));
        let mut next: Vec<Vec<usize>> = order
            .iter()
            .take(config.elite_count())
            .map(|&i| population[i].clone())
            .collect();
        while next.len() < config.population {
            let p1 = &population[tournament(&fitness, config.tournament_size, rng)];
            let p2 = &population[tournament(&fitness, config.tournament_size, rng)];
            let mut child = if n >= 2 && rng.random_bool(config.crossover_rate) {
                let cut1 = rng.random_range(0..n);
                let cut2 = rng.random_range(cut1 + 1..=n);
                pmx_crossover(p1, p2, cut1, cut2)
            } else {
                p1.clone()
            };
            if rng.random_bool(config.mutation_rate) {
                let kind = [Mutation::Swap, Mutation::Inversion, Mutation::Scramble][rng.random_range(0..3)];
                mutate(&mut child, kind, rng);
            }
            next.push(child);
        }
        population = next;
        fitness = score(&population);
        observe(generation, &population);
        generations = generation;

        let top = argmax(&fitness);
        if fitness[top] > best_fitness {
            best_fitness = fitness[top];
            best = population[top].clone();
            stall = 0;
        } else {
            stall += 1;
        }
        trace.push(best_fitness);
        if stall >= config.early_stop_patience {
            break;
        }
    }

    let mut mapping = vec![0; n];
    for (pos, &piece) in best.iter().enumerate() {
        mapping[piece] = pos;
    }
    Ok(GaOutcome {
        permutation: Permutation::new(mapping)?,
        best_fitness,
        trace,
        generations,
    })
}

pub fn ga_solve<R: Rng + ?Sized>(
    table: &CompatibilityTable,
    k: usize,
    config: &GaConfig,
    rng: &mut R,
) -> Result<GaOutcome> {
    ga_solve_observed(table, k, config, rng, |_, _| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;

    #[test]
    fn pmx_textbook_trace() {
        let p1: Vec<usize> = (1..=9).collect();
        let p2 = vec![4, 5, 2, 1, 8, 7, 6, 9, 3];
        // 0-based values for the permutation, same structure
        let z = |v: &[usize]| v.iter().map(|x| x - 1).collect::<Vec<_>>();
        let child = pmx_crossover(&z(&p1), &z(&p2), 3, 7);
        assert_eq!(child, z(&[1, 8, 2, 4, 5, 6, 7, 9, 3]));
    }

    #[test]
    fn pmx_edge_cases() {
        let p = vec![3, 1, 0, 2];
        assert_eq!(pmx_crossover(&p, &p, 1, 3), p);
        assert_eq!(pmx_crossover(&p, &[0, 1, 2, 3], 0, 4), p);
    }

    #[test]
    fn config_validation() {
        assert!(GaConfig::default().validate().is_ok());
        let bad = GaConfig {
            population: 3,
            ..GaConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = GaConfig {
            mutation_rate: 1.5,
            ..GaConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn mutations_keep_permutations() {
        let mut rng = rng_from_seed(4);
        for kind in [Mutation::Swap, Mutation::Inversion, Mutation::Scramble] {
            let mut g: Vec<usize> = (0..9).collect();
            for _ in 0..100 {
                mutate(&mut g, kind, &mut rng);
                assert!(Permutation::is_bijection(&g));
            }
        }
    }
}
