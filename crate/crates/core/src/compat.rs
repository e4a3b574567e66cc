//! Edge dissimilarity, normalized compatibility, best buddies and the
//! best-buddies metric for fragment pieces.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maskforge::BinaryMask;
use crate::puzzlegen::{Permutation, Piece};
use crate::raster::{rgb_to_lab, LabImage};

/// Exponent applied to per-channel prediction errors.
pub const P: f64 = 0.3;
/// Outer exponent; each k-term is raised to `Q / P`.
pub const Q: f64 = 0.0625;
/// Floor for the per-row percentile normalizer.
pub const NORMALIZER_FLOOR: f64 = 1e-12;
/// Percentile of a row's dissimilarities used as its normalizer.
pub const NORMALIZER_PERCENTILE: f64 = 25.0;

/// Side of a piece, and the relation "j sits on this side of i".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Left,
    Right,
    Up,
    Down,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Left, Direction::Right, Direction::Up, Direction::Down];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn opposite(self) -> Self {
        match self {
            Direction::Left => Direction::Right,
            Direction::Right => Direction::Left,
            Direction::Up => Direction::Down,
            Direction::Down => Direction::Up,
        }
    }

    /// Grid step `(drow, dcol)`.
    pub fn offset(self) -> (i64, i64) {
        match self {
            Direction::Left => (0, -1),
            Direction::Right => (0, 1),
            Direction::Up => (-1, 0),
            Direction::Down => (1, 0),
        }
    }
}

/// Boundary samples of one side of a piece: the outermost opaque pixel of
/// every row (or column) and the next opaque pixel inward.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSequence {
    pub direction: Direction,
    pub outer: Vec<[f64; 3]>,
    pub inner: Vec<[f64; 3]>,
}

impl EdgeSequence {
    pub fn len(&self) -> usize {
        self.outer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outer.is_empty()
    }
}

/// Rows (for LEFT/RIGHT) or columns (for UP/DOWN) without any opaque pixel
/// are skipped; samples run top to bottom or left to right.
pub fn edge_sequence(lab: &LabImage, mask: &BinaryMask, direction: Direction) -> Result<EdgeSequence> {
    let side = mask.side();
    if lab.width() != side || lab.height() != side {
        return Err(Error::Shape(format!(
            "Lab image {}x{} does not match {side}px mask",
            lab.width(),
            lab.height()
        )));
    }
    let mut outer = Vec::new();
    let mut inner = Vec::new();
    for line in 0..side {
        let coord = |step: usize| -> (usize, usize) {
            match direction {
                Direction::Right => (side - 1 - step, line),
                Direction::Left => (step, line),
                Direction::Down => (line, side - 1 - step),
                Direction::Up => (line, step),
            }
        };
        let mut hits = (0..side).map(coord).filter(|&(x, y)| mask.get(x, y));
        if let Some((x, y)) = hits.next() {
            let o = lab.get(x, y);
            outer.push(o);
            inner.push(hits.next().map_or(o, |(x, y)| lab.get(x, y)));
        }
    }
    if outer.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(EdgeSequence {
        direction,
        outer,
        inner,
    })
}

/// Nearest-index resampling from length `len` to `target`.
fn resample_index(k: usize, len: usize, target: usize) -> usize {
    ((2 * k + 1) * len / (2 * target)).min(len - 1)
}

/// Prediction-based dissimilarity between edge `a` of one piece and the
/// facing edge `b` of its neighbor. Each side extrapolates one pixel across
/// the seam from its outer and inner samples; per-channel absolute errors
/// are raised to `P` and summed, and each position contributes that sum to
/// the power `Q / P`. The longer sequence is resampled to the shorter.
pub fn edge_dissimilarity(a: &EdgeSequence, b: &EdgeSequence) -> f64 {
    let m = a.len().min(b.len());
    if m == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for k in 0..m {
        let ia = resample_index(k, a.len(), m);
        let ib = resample_index(k, b.len(), m);
        let (ao, ai, bo, bi) = (a.outer[ia], a.inner[ia], b.outer[ib], b.inner[ib]);
        let mut t1 = 0.0;
        let mut t2 = 0.0;
        for c in 0..3 {
            t1 += (2.0 * ao[c] - ai[c] - bo[c]).abs().powf(P);
            t2 += (2.0 * bo[c] - bi[c] - ao[c]).abs().powf(P);
        }
        total += (t1 + t2).powf(Q / P);
    }
    total
}

/// Four edge sequences of a piece, indexed by [`Direction::index`].
#[derive(Debug, Clone)]
pub struct PieceEdges(pub [EdgeSequence; 4]);

impl PieceEdges {
    pub fn of(piece: &Piece) -> Result<Self> {
        let lab = rgb_to_lab(&piece.image)?;
        let e = |d| edge_sequence(&lab, &piece.mask, d);
        Ok(Self([
            e(Direction::Left)?,
            e(Direction::Right)?,
            e(Direction::Up)?,
            e(Direction::Down)?,
        ]))
    }

    pub fn get(&self, d: Direction) -> &EdgeSequence {
        &self.0[d.index()]
    }
}

/// `D(i, j, r)`: dissimilarity of placing `j` on side `r` of `i`.
pub fn dissimilarity(edges: &[PieceEdges], i: usize, j: usize, r: Direction) -> f64 {
    edge_dissimilarity(edges[i].get(r), edges[j].get(r.opposite()))
}

/// Linear-interpolation percentile of an ascending slice.
pub fn percentile_sorted(sorted: &[f64], pct: f64) -> f64 {
    let pos = pct / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompatibilityTable {
    n: usize,
    d: Vec<f64>,
    c: Vec<f64>,
    normalizers: Vec<f64>,
    nearest: Vec<usize>,
    best: Vec<Option<usize>>,
}

impl CompatibilityTable {
    pub fn from_pieces(pieces: &[Piece]) -> Result<Self> {
        let n = pieces.len();
        if n == 0 {
            return Err(Error::InsufficientSamples { needed: 1, got: 0 });
        }
        let edges: Vec<PieceEdges> = pieces.par_iter().map(PieceEdges::of).collect::<Result<_>>()?;
        let d: Vec<f64> = (0..4 * n)
            .into_par_iter()
            .flat_map_iter(|row| {
                let (r, i) = (Direction::ALL[row / n], row % n);
                let edges = &edges;
                (0..n).map(move |j| if i == j { 0.0 } else { dissimilarity(edges, i, j, r) })
            })
            .collect();
        Self::from_dissimilarities(n, d)
    }

    /// Builds the table from a direction-major `4 * n * n` dissimilarity
    /// array. Diagonal entries are ignored. A single piece has no
    /// candidates: its normalizer is the floor and it has no best buddies.
    pub fn from_dissimilarities(n: usize, mut d: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InsufficientSamples { needed: 1, got: 0 });
        }
        if d.len() != 4 * n * n {
            return Err(Error::LengthMismatch(format!(
                "dissimilarity array has {} entries, expected {}",
                d.len(),
                4 * n * n
            )));
        }
        if let Some(bad) = d.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::NonFinite(format!("dissimilarity entry {bad} is {}", d[bad])));
        }
        let mut c = vec![0.0; 4 * n * n];
        let mut normalizers = vec![0.0; 4 * n];
        let mut nearest = vec![0; 4 * n];
        for row in 0..4 * n {
            let i = row % n;
            d[row * n + i] = 0.0;
            let mut others: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| d[row * n + j]).collect();
            others.sort_by(f64::total_cmp);
            let norm = if others.is_empty() {
                NORMALIZER_FLOOR
            } else {
                percentile_sorted(&others, NORMALIZER_PERCENTILE).max(NORMALIZER_FLOOR)
            };
            normalizers[row] = norm;
            let mut best_j = usize::MAX;
            for j in (0..n).filter(|&j| j != i) {
                c[row * n + j] = (-d[row * n + j] / norm).exp();
                if best_j == usize::MAX || d[row * n + j] < d[row * n + best_j] {
                    best_j = j;
                }
            }
            nearest[row] = best_j;
        }
        let best = (0..4 * n)
            .map(|row| {
                let (r, i) = (Direction::ALL[row / n], row % n);
                let j = nearest[row];
                (j != usize::MAX && nearest[r.opposite().index() * n + j] == i).then_some(j)
            })
            .collect();
        Ok(Self {
            n,
            d,
            c,
            normalizers,
            nearest,
            best,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn at(&self, i: usize, j: usize, r: Direction) -> usize {
        (r.index() * self.n + i) * self.n + j
    }

    pub fn dissimilarity(&self, i: usize, j: usize, r: Direction) -> f64 {
        self.d[self.at(i, j, r)]
    }

    /// `C(i, j, r) = exp(-D(i, j, r) / norm(i, r))`; zero on the diagonal.
    pub fn compatibility(&self, i: usize, j: usize, r: Direction) -> f64 {
        self.c[self.at(i, j, r)]
    }

    pub fn normalizer(&self, i: usize, r: Direction) -> f64 {
        self.normalizers[r.index() * self.n + i]
    }

    /// Most compatible `j` on side `r` of `i` (ties to the smaller index);
    /// `None` for a single-piece table.
    pub fn nearest(&self, i: usize, r: Direction) -> Option<usize> {
        let j = self.nearest[r.index() * self.n + i];
        (j != usize::MAX).then_some(j)
    }

    pub fn best_buddy(&self, i: usize, r: Direction) -> Option<usize> {
        self.best[r.index() * self.n + i]
    }

    pub fn is_best_buddy(&self, i: usize, j: usize, r: Direction) -> bool {
        self.best_buddy(i, r) == Some(j)
    }

    /// Number of sides on which `i` has a best buddy.
    pub fn best_buddy_count(&self, i: usize) -> usize {
        Direction::ALL
            .iter()
            .filter(|&&r| self.best_buddy(i, r).is_some())
            .count()
    }

    /// All `(i, j, r)` best-buddy triples.
    pub fn best_buddies(&self) -> Vec<(usize, usize, Direction)> {
        Direction::ALL
            .iter()
            .flat_map(|&r| (0..self.n).filter_map(move |i| self.best_buddy(i, r).map(|j| (i, j, r))))
            .collect()
    }

    /// Symmetrized compatibility of `j` on side `r` of `i`.
    pub fn pair_compat(&self, i: usize, j: usize, r: Direction) -> f64 {
        0.5 * (self.compatibility(i, j, r) + self.compatibility(j, i, r.opposite()))
    }

    pub fn dissimilarities(&self) -> &[f64] {
        &self.d
    }

    /// Raw little-endian f64 dump of `D`, direction-major.
    pub fn write_cache(&self, path: &Path) -> Result<()> {
        let bytes: Vec<u8> = self.d.iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn read_cache(path: &Path, n: usize) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.len() % 8 != 0 {
            return Err(Error::LengthMismatch(format!(
                "{} is {} bytes, not a whole number of f64 values",
                path.display(),
                bytes.len()
            )));
        }
        let d = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Self::from_dissimilarities(n, d)
    }
}

pub fn cache_path(dir: &Path, puzzle_id: &str) -> PathBuf {
    dir.join(format!("{puzzle_id}.d64"))
}

/// Fraction of adjacent placed pairs that are best buddies across their
/// shared side; 1.0 when nothing is adjacent.
pub fn bbm_cells(cells: &BTreeMap<(i64, i64), usize>, table: &CompatibilityTable) -> f64 {
    let mut edges = 0usize;
    let mut good = 0usize;
    for (&(row, col), &a) in cells {
        for r in [Direction::Right, Direction::Down] {
            let (dr, dc) = r.offset();
            if let Some(&b) = cells.get(&(row + dr, col + dc)) {
                edges += 1;
                if table.is_best_buddy(a, b, r) {
                    good += 1;
                }
            }
        }
    }
    if edges == 0 {
        1.0
    } else {
        good as f64 / edges as f64
    }
}

/// BBM of a complete layout on a `k x k` grid.
pub fn bbm(layout: &Permutation, k: usize, table: &CompatibilityTable) -> f64 {
    let cells = layout
        .as_slice()
        .iter()
        .enumerate()
        .map(|(piece, &pos)| (((pos / k) as i64, (pos % k) as i64), piece))
        .collect();
    bbm_cells(&cells, table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(outer: &[[f64; 3]], inner: &[[f64; 3]]) -> EdgeSequence {
        EdgeSequence {
            direction: Direction::Right,
            outer: outer.to_vec(),
            inner: inner.to_vec(),
        }
    }

    #[test]
    fn constant_edges_have_zero_dissimilarity() {
        let a = seq(&[[50.0, 1.0, -2.0]; 5], &[[50.0, 1.0, -2.0]; 5]);
        assert_eq!(edge_dissimilarity(&a, &a.clone()), 0.0);
    }

    #[test]
    fn resampling_picks_centers() {
        assert_eq!(
            (0..3).map(|k| resample_index(k, 6, 3)).collect::<Vec<_>>(),
            vec![1, 3, 5]
        );
        assert_eq!(
            (0..4).map(|k| resample_index(k, 4, 4)).collect::<Vec<_>>(),
            vec![0, 1, 2, 3]
        );
    }

    #[test]
    fn percentile_interpolates() {
        assert_eq!(percentile_sorted(&[1.0, 2.0, 3.0, 4.0, 5.0], 25.0), 2.0);
        assert_eq!(percentile_sorted(&[0.0, 4.0], 25.0), 1.0);
        assert_eq!(percentile_sorted(&[7.0], 25.0), 7.0);
    }

    #[test]
    fn table_normalization_and_buddies() {
        // two pieces: every off-diagonal D equal to 2
        let mut d = vec![2.0; 16];
        for r in 0..4 {
            d[r * 4] = 0.0;
            d[r * 4 + 3] = 0.0;
        }
        let t = CompatibilityTable::from_dissimilarities(2, d).unwrap();
        assert_eq!(t.normalizer(0, Direction::Left), 2.0);
        assert!((t.compatibility(0, 1, Direction::Left) - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(t.compatibility(0, 0, Direction::Left), 0.0);
        assert!(t.is_best_buddy(0, 1, Direction::Right) && t.is_best_buddy(1, 0, Direction::Left));
    }

    #[test]
    fn zero_row_uses_floor() {
        let t = CompatibilityTable::from_dissimilarities(2, vec![0.0; 16]).unwrap();
        assert_eq!(t.normalizer(1, Direction::Up), NORMALIZER_FLOOR);
        assert_eq!(t.compatibility(1, 0, Direction::Up), 1.0);
    }

    #[test]
    fn rejects_bad_arrays() {
        assert!(CompatibilityTable::from_dissimilarities(0, vec![]).is_err());
        let single = CompatibilityTable::from_dissimilarities(1, vec![0.0; 4]).unwrap();
        assert_eq!(single.nearest(0, Direction::Left), None);
        assert!(CompatibilityTable::from_dissimilarities(2, vec![0.0; 15]).is_err());
        let mut d = vec![1.0; 16];
        d[5] = f64::NAN;
        assert!(CompatibilityTable::from_dissimilarities(2, d).is_err());
    }

    #[test]
    fn bbm_conventions() {
        let t = CompatibilityTable::from_dissimilarities(2, vec![1.0; 16]).unwrap();
        let single: BTreeMap<_, _> = [((0, 0), 0)].into_iter().collect();
        assert_eq!(bbm_cells(&single, &t), 1.0);
    }
}
