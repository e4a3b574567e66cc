//! Best-buddy seeded greedy placement with segment refinement.

use std::collections::{BTreeMap, BTreeSet};

use crate::compat::{bbm_cells, CompatibilityTable, Direction};
use crate::puzzlegen::Permutation;

type Cells = BTreeMap<(i64, i64), usize>;

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyOutcome {
    pub permutation: Permutation,
    pub bbm: f64,
    /// Refinement rounds that improved BBM.
    pub refinements: usize,
}

fn neighbors((row, col): (i64, i64)) -> impl Iterator<Item = (Direction, (i64, i64))> {
    Direction::ALL.into_iter().map(move |d| {
        let (dr, dc) = d.offset();
        (d, (row + dr, col + dc))
    })
}

fn bbox(cells: &Cells) -> (i64, i64, i64, i64) {
    let mut b = (i64::MAX, i64::MIN, i64::MAX, i64::MIN);
    for &(r, c) in cells.keys() {
        b = (b.0.min(r), b.1.max(r), b.2.min(c), b.3.max(c));
    }
    b
}

/// Best unplaced piece for `slot`: highest mean pair compatibility with the
/// occupied neighbors, then more best-buddy links, then smaller index.
fn best_piece(slot: (i64, i64), cells: &Cells, placed: &BTreeSet<usize>, table: &CompatibilityTable) -> (usize, f64) {
    let adjacent: Vec<(Direction, usize)> = neighbors(slot)
        .filter_map(|(d, p)| cells.get(&p).map(|&q| (d, q)))
        .collect();
    let mut choice: Option<(usize, f64, usize)> = None;
    for piece in (0..table.n()).filter(|p| !placed.contains(p)) {
        let score = adjacent
            .iter()
            .map(|&(d, q)| table.pair_compat(piece, q, d))
            .sum::<f64>()
            / adjacent.len() as f64;
        let buddies = adjacent
            .iter()
            .filter(|&&(d, q)| table.is_best_buddy(piece, q, d))
            .count();
        let better = match choice {
            None => true,
            Some((_, s, b)) => score > s || (score == s && buddies > b),
        };
        if better {
            choice = Some((piece, score, buddies));
        }
    }
    let (piece, score, _) = choice.expect("an unplaced piece exists");
    (piece, score)
}

/// Fills the working grid from `cells` until every piece is placed, never
/// letting the occupied bounding box exceed `k x k`. Slots with the most
/// occupied neighbors go first; among those, the slot whose best piece fits
/// best, then row-major.
fn grow(mut cells: Cells, table: &CompatibilityTable, k: usize) -> Cells {
    let n = table.n();
    let k = k as i64;
    let mut placed: BTreeSet<usize> = cells.values().copied().collect();
    while placed.len() < n {
        let (r0, r1, c0, c1) = bbox(&cells);
        let mut slots: BTreeMap<(i64, i64), usize> = BTreeMap::new();
        for &pos in cells.keys() {
            for (_, slot) in neighbors(pos) {
                if cells.contains_key(&slot) {
                    continue;
                }
                let rows = r1.max(slot.0) - r0.min(slot.0) + 1;
                let cols = c1.max(slot.1) - c0.min(slot.1) + 1;
                if rows > k || cols > k {
                    continue;
                }
                let occupied = neighbors(slot).filter(|(_, p)| cells.contains_key(p)).count();
                slots.insert(slot, occupied);
            }
        }
        let Some(&most) = slots.values().max() else { break };
        let mut pick: Option<((i64, i64), usize, f64)> = None;
        for (&slot, _) in slots.iter().filter(|(_, &o)| o == most) {
            let (piece, score) = best_piece(slot, &cells, &placed, table);
            if pick.is_none_or(|(_, _, s)| score > s) {
                pick = Some((slot, piece, score));
            }
        }
        let (slot, piece, _) = pick.expect("a candidate slot exists");
        cells.insert(slot, piece);
        placed.insert(piece);
    }
    cells
}

/// Largest group of pieces connected through best-buddy adjacencies.
fn largest_segment(cells: &Cells, table: &CompatibilityTable) -> Cells {
    let mut seen: BTreeSet<(i64, i64)> = BTreeSet::new();
    let mut best = Cells::new();
    for &start in cells.keys() {
        if !seen.insert(start) {
            continue;
        }
        let mut segment = Cells::new();
        let mut stack = vec![start];
        while let Some(pos) = stack.pop() {
            let a = cells[&pos];
            segment.insert(pos, a);
            for (d, next) in neighbors(pos) {
                if let Some(&b) = cells.get(&next) {
                    if table.is_best_buddy(a, b, d) && seen.insert(next) {
                        stack.push(next);
                    }
                }
            }
        }
        if segment.len() > best.len() {
            best = segment;
        }
    }
    best
}

fn shift_to_origin(cells: &Cells) -> Cells {
    let (r0, _, c0, _) = bbox(cells);
    cells.iter().map(|(&(r, c), &p)| ((r - r0, c - c0), p)).collect()
}

/// Anchors the layout's bounding box in the `k x k` frame at the
/// translation with the highest BBM and completes it: leftover pieces go
/// to leftover slots by highest mean compatibility with placed neighbors.
fn anchor(cells: &Cells, table: &CompatibilityTable, k: usize) -> Permutation {
    let n = table.n();
    let origin = shift_to_origin(cells);
    let (_, h, _, w) = bbox(&origin);
    let k_i = k as i64;
    let mut frame: Option<Cells> = None;
    let mut frame_bbm = f64::NEG_INFINITY;
    for dr in 0..(k_i - h).max(1) {
        for dc in 0..(k_i - w).max(1) {
            let shifted: Cells = origin
                .iter()
                .map(|(&(r, c), &p)| ((r + dr, c + dc), p))
                .filter(|&((r, c), _)| r < k_i && c < k_i)
                .collect();
            let score = bbm_cells(&shifted, table);
            if score > frame_bbm {
                frame_bbm = score;
                frame = Some(shifted);
            }
        }
    }
    let mut cells = frame.unwrap_or_default();
    let mut placed: BTreeSet<usize> = cells.values().copied().collect();
    loop {
        let free: Vec<(i64, i64)> = (0..k_i)
            .flat_map(|r| (0..k_i).map(move |c| (r, c)))
            .filter(|s| !cells.contains_key(s))
            .collect();
        if free.is_empty() || placed.len() == n {
            break;
        }
        let mut choice: Option<((i64, i64), usize, f64)> = None;
        for &slot in &free {
            let adjacent: Vec<(Direction, usize)> = neighbors(slot)
                .filter_map(|(d, p)| cells.get(&p).map(|&q| (d, q)))
                .collect();
            for piece in (0..n).filter(|p| !placed.contains(p)) {
                let score = if adjacent.is_empty() {
                    0.0
                } else {
                    adjacent
                        .iter()
                        .map(|&(d, q)| table.pair_compat(piece, q, d))
                        .sum::<f64>()
                        / adjacent.len() as f64
                };
                if choice.is_none_or(|(_, _, s)| score > s) {
                    choice = Some((slot, piece, score));
                }
            }
        }
        let (slot, piece, _) = choice.expect("free slot and unplaced piece exist");
        cells.insert(slot, piece);
        placed.insert(piece);
    }
    let mut mapping = vec![0; n];
    for (&(r, c), &p) in &cells {
        mapping[p] = (r * k_i + c) as usize;
    }
    Permutation::new(mapping).expect("every piece placed in a distinct cell")
}

/// Greedy solver over a `k x k` grid (`table.n()` must equal `k * k`).
pub fn greedy_solve(table: &CompatibilityTable, k: usize) -> GreedyOutcome {
    let n = table.n();
    assert_eq!(n, k * k, "table size must match the grid");
    let seed = (0..n)
        .max_by(|&a, &b| {
            table
                .best_buddy_count(a)
                .cmp(&table.best_buddy_count(b))
                .then(b.cmp(&a))
        })
        .expect("n >= 1");
    let mut cells = grow([((0, 0), seed)].into_iter().collect(), table, k);
    let mut score = bbm_cells(&cells, table);
    let mut refinements = 0;
    loop {
        let segment = largest_segment(&cells, table);
        if segment.len() == cells.len() {
            break;
        }
        let candidate = grow(shift_to_origin(&segment), table, k);
        let candidate_score = bbm_cells(&candidate, table);
        if candidate_score > score {
            cells = candidate;
            score = candidate_score;
            refinements += 1;
        } else {
            break;
        }
    }
    let permutation = anchor(&cells, table, k);
    let bbm = crate::compat::bbm(&permutation, k, table);
    GreedyOutcome {
        permutation,
        bbm,
        refinements,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_table_gives_valid_layout() {
        let n = 9;
        let t = CompatibilityTable::from_dissimilarities(n, vec![1.0; 4 * n * n]).unwrap();
        let a = greedy_solve(&t, 3);
        let b = greedy_solve(&t, 3);
        assert!(Permutation::is_bijection(a.permutation.as_slice()));
        assert_eq!(a, b);
    }

    #[test]
    fn anchoring_fills_the_frame() {
        let n = 4;
        let t = CompatibilityTable::from_dissimilarities(n, vec![1.0; 4 * n * n]).unwrap();
        let cells: Cells = [((5, 5), 2)].into_iter().collect();
        let p = anchor(&cells, &t, 2);
        assert_eq!(p.position(2), 0);
        assert!(Permutation::is_bijection(p.as_slice()));
    }
}
