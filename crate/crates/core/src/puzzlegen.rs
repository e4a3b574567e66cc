//! Puzzle assembly: grid layout, fragment cut-out, shuffling, dataset splits
//! and the on-disk manifest format.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maskforge::{sample_procedural_mask, BinaryMask, ProceduralMaskParams, DEFAULT_MASK_SIDE};
use crate::raster::{resize_bilinear, RasterImage, SampleRange};
use crate::seed::derived_rng;

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Bijection piece index -> position index.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(mapping: Vec<usize>) -> Result<Self> {
        if !Self::is_bijection(&mapping) {
            return Err(Error::Precondition(format!(
                "{mapping:?} is not a permutation of 0..{}",
                mapping.len()
            )));
        }
        Ok(Self(mapping))
    }

    pub fn identity(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut v: Vec<usize> = (0..n).collect();
        v.shuffle(rng);
        Self(v)
    }

    pub fn is_bijection(mapping: &[usize]) -> bool {
        let mut seen = vec![false; mapping.len()];
        for &p in mapping {
            if p >= mapping.len() || seen[p] {
                return false;
            }
            seen[p] = true;
        }
        true
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// Position of piece `i`.
    pub fn position(&self, piece: usize) -> usize {
        self.0[piece]
    }

    /// Mapping position -> piece.
    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.0.len()];
        for (piece, &pos) in self.0.iter().enumerate() {
            inv[pos] = piece;
        }
        Self(inv)
    }
}

impl TryFrom<Vec<usize>> for Permutation {
    type Error = Error;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(p: Permutation) -> Self {
        p.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub k: usize,
    pub canvas: usize,
    pub piece_side: usize,
}

impl GridSpec {
    pub fn new(k: usize, canvas: usize, piece_side: usize) -> Result<Self> {
        if k == 0 || piece_side == 0 {
            return Err(Error::Config("grid side and piece side must be >= 1".into()));
        }
        let grid = Self { k, canvas, piece_side };
        if grid.cell() < piece_side {
            return Err(Error::Config(format!(
                "cell of {}px (canvas {canvas} / k {k}) is smaller than the {piece_side}px piece frame",
                grid.cell()
            )));
        }
        Ok(grid)
    }

    /// 384px canvas for k=3, 640px for k=5, otherwise 128px per cell.
    pub fn standard(k: usize) -> Result<Self> {
        let canvas = match k {
            3 => 384,
            5 => 640,
            _ => DEFAULT_MASK_SIDE * k,
        };
        Self::new(k, canvas, DEFAULT_MASK_SIDE)
    }

    pub fn cell(&self) -> usize {
        self.canvas / self.k
    }

    pub fn pieces(&self) -> usize {
        self.k * self.k
    }

    pub fn row_col(&self, position: usize) -> (usize, usize) {
        (position / self.k, position % self.k)
    }

    /// Top-left pixel of the piece frame centered in cell `position`.
    pub fn frame_origin(&self, position: usize) -> (usize, usize) {
        let (row, col) = self.row_col(position);
        let inset = (self.cell() - self.piece_side) / 2;
        (col * self.cell() + inset, row * self.cell() + inset)
    }
}

/// One fragment: an RGBA frame whose alpha is the mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    pub image: RasterImage,
    pub mask: BinaryMask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PuzzleInstance {
    pub puzzle_id: String,
    pub grid: GridSpec,
    pub pieces: Vec<Piece>,
    pub ground_truth: Permutation,
    pub source: String,
    pub split: Split,
}

/// Supplies fragment masks for puzzle construction.
pub trait MaskSource {
    fn next_mask(&mut self, rng: &mut dyn RngCore, side: usize) -> Result<BinaryMask>;
}

/// Procedural star-convex fragments.
#[derive(Debug, Clone, Default)]
pub struct ProceduralMasks {
    pub params: ProceduralMaskParams,
}

impl MaskSource for ProceduralMasks {
    fn next_mask(&mut self, rng: &mut dyn RngCore, side: usize) -> Result<BinaryMask> {
        sample_procedural_mask(rng, side, &self.params)
    }
}

/// Full square frames: the zero-erosion case.
#[derive(Debug, Clone, Copy, Default)]
pub struct SquareMasks;

impl MaskSource for SquareMasks {
    fn next_mask(&mut self, _rng: &mut dyn RngCore, side: usize) -> Result<BinaryMask> {
        Ok(BinaryMask::full(side))
    }
}

/// Externally supplied masks drawn uniformly with replacement.
#[derive(Debug, Clone)]
pub struct ImportedMasks {
    masks: Vec<BinaryMask>,
}

impl ImportedMasks {
    pub fn new(masks: Vec<BinaryMask>) -> Result<Self> {
        if masks.is_empty() {
            return Err(Error::Config("imported mask set is empty".into()));
        }
        Ok(Self { masks })
    }
}

impl MaskSource for ImportedMasks {
    fn next_mask(&mut self, rng: &mut dyn RngCore, side: usize) -> Result<BinaryMask> {
        let m = &self.masks[rng.random_range(0..self.masks.len())];
        if m.side() != side {
            return Err(Error::Config(format!(
                "imported mask is {}px, piece frame is {side}px",
                m.side()
            )));
        }
        Ok(m.clone())
    }
}

/// Converts any raster to 8-bit-valued RGBA with integral samples.
pub fn to_rgba8(img: &RasterImage) -> RasterImage {
    let img = img.with_range(SampleRange::Byte);
    let (w, h) = (img.width(), img.height());
    let mut bytes = Vec::with_capacity(w * h * 4);
    for y in 0..h {
        for x in 0..w {
            let p = img.pixel(x, y);
            let q = |v: f32| v.round().clamp(0.0, 255.0) as u8;
            match p.len() {
                1 => bytes.extend([q(p[0]), q(p[0]), q(p[0]), 255]),
                3 => bytes.extend([q(p[0]), q(p[1]), q(p[2]), 255]),
                _ => bytes.extend([q(p[0]), q(p[1]), q(p[2]), q(p[3])]),
            }
        }
    }
    RasterImage::from_rgba8(w, h, &bytes).expect("buffer sized from dimensions")
}

/// Cuts an image into `k*k` fragments, one mask per cell, in row-major
/// order with identity ground truth.
pub fn make_puzzle(
    image: &RasterImage,
    grid: GridSpec,
    masks: &mut dyn MaskSource,
    rng: &mut dyn RngCore,
    puzzle_id: &str,
    source: &str,
) -> Result<PuzzleInstance> {
    let grid = GridSpec::new(grid.k, grid.canvas, grid.piece_side)?;
    if image.channels() < 3 {
        return Err(Error::WrongChannels {
            expected: "3 or 4",
            found: image.channels(),
        });
    }
    let canvas = to_rgba8(&resize_bilinear(image, grid.canvas, grid.canvas)?);
    let side = grid.piece_side;
    let mut pieces = Vec::with_capacity(grid.pieces());
    for pos in 0..grid.pieces() {
        let mask = masks.next_mask(rng, side)?;
        if mask.side() != side {
            return Err(Error::Config(format!(
                "mask source produced a {}px mask for a {side}px frame",
                mask.side()
            )));
        }
        let (ox, oy) = grid.frame_origin(pos);
        let mut bytes = vec![0u8; side * side * 4];
        for y in 0..side {
            for x in 0..side {
                if mask.get(x, y) {
                    let src = canvas.pixel(ox + x, oy + y);
                    let dst = &mut bytes[(y * side + x) * 4..][..4];
                    dst[0] = src[0] as u8;
                    dst[1] = src[1] as u8;
                    dst[2] = src[2] as u8;
                    dst[3] = 255;
                }
            }
        }
        pieces.push(Piece {
            image: RasterImage::from_rgba8(side, side, &bytes)?,
            mask,
        });
    }
    Ok(PuzzleInstance {
        puzzle_id: puzzle_id.to_string(),
        grid,
        pieces,
        ground_truth: Permutation::identity(grid.pieces()),
        source: source.to_string(),
        split: Split::Train,
    })
}

/// Fisher-Yates reorder of the pieces; the ground truth follows each piece.
pub fn shuffle<R: Rng + ?Sized>(instance: &PuzzleInstance, rng: &mut R) -> PuzzleInstance {
    let n = instance.pieces.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let gt = instance.ground_truth.as_slice();
    PuzzleInstance {
        pieces: order.iter().map(|&o| instance.pieces[o].clone()).collect(),
        ground_truth: Permutation(order.iter().map(|&o| gt[o]).collect()),
        ..instance.clone()
    }
}

/// Builds and shuffles one puzzle with a generator derived from
/// `(dataset_seed, puzzle_id)`.
pub fn generate_puzzle(
    image: &RasterImage,
    grid: GridSpec,
    masks: &mut dyn MaskSource,
    dataset_seed: u64,
    puzzle_id: &str,
    source: &str,
) -> Result<PuzzleInstance> {
    let mut rng = derived_rng(dataset_seed, puzzle_id);
    let ordered = make_puzzle(image, grid, masks, &mut rng, puzzle_id, source)?;
    Ok(shuffle(&ordered, &mut rng))
}

/// Composites pieces onto a transparent canvas, piece `i` in cell `layout[i]`.
pub fn assemble(instance: &PuzzleInstance, layout: &Permutation) -> Result<RasterImage> {
    let grid = instance.grid;
    if layout.len() != instance.pieces.len() {
        return Err(Error::LengthMismatch(format!(
            "layout has {} entries for {} pieces",
            layout.len(),
            instance.pieces.len()
        )));
    }
    let mut out = RasterImage::filled(grid.canvas, grid.canvas, SampleRange::Byte, &[0.0; 4])?;
    for (piece, &pos) in instance.pieces.iter().zip(layout.as_slice()) {
        let (ox, oy) = grid.frame_origin(pos);
        for y in 0..grid.piece_side {
            for x in 0..grid.piece_side {
                if piece.mask.get(x, y) {
                    out.pixel_mut(ox + x, oy + y).copy_from_slice(piece.image.pixel(x, y));
                }
            }
        }
    }
    Ok(out)
}

/// Smooth synthetic source: bilinear blend of four corner colours drawn
/// within `spread` of a common random base colour.
pub fn gradient_image<R: Rng + ?Sized>(rng: &mut R, side: usize) -> RasterImage {
    gradient_image_with_spread(rng, side, GRADIENT_SPREAD)
}

/// Default half-range of the corner colour offsets in [`gradient_image`].
pub const GRADIENT_SPREAD: f32 = 30.0;

pub fn gradient_image_with_spread<R: Rng + ?Sized>(rng: &mut R, side: usize, spread: f32) -> RasterImage {
    let spread = spread.clamp(0.0, 127.5);
    let base: [f32; 3] = std::array::from_fn(|_| rng.random_range(spread..=255.0 - spread));
    let corners: [[f32; 3]; 4] = std::array::from_fn(|_| {
        std::array::from_fn(|c| {
            base[c]
                + if spread > 0.0 {
                    rng.random_range(-spread..=spread)
                } else {
                    0.0
                }
        })
    });
    let mut bytes = Vec::with_capacity(side * side * 4);
    let denom = (side.max(2) - 1) as f32;
    for y in 0..side {
        let v = y as f32 / denom;
        for x in 0..side {
            let u = x as f32 / denom;
            for c in 0..3 {
                let top = corners[0][c] * (1.0 - u) + corners[1][c] * u;
                let bottom = corners[2][c] * (1.0 - u) + corners[3][c] * u;
                bytes.push((top * (1.0 - v) + bottom * v).round().clamp(0.0, 255.0) as u8);
            }
            bytes.push(255);
        }
    }
    RasterImage::from_rgba8(side, side, &bytes).expect("buffer sized from dimensions")
}

/// Assigns every distinct id to one split. Counts are `floor(ratio * n)`
/// for validation and test, the remainder goes to train. The result is
/// aligned with `ids`; repeated ids share a split.
pub fn split_dataset<R: Rng + ?Sized>(ids: &[String], ratios: (f64, f64, f64), rng: &mut R) -> Result<Vec<Split>> {
    let (tr, va, te) = ratios;
    if [tr, va, te].iter().any(|r| !(0.0..=1.0).contains(r)) || (tr + va + te - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split ratios {ratios:?} must be in [0,1] and sum to 1"
        )));
    }
    let mut unique: Vec<&String> = Vec::new();
    let mut seen = HashMap::new();
    for id in ids {
        if !seen.contains_key(id) {
            seen.insert(id, Split::Train);
            unique.push(id);
        }
    }
    unique.shuffle(rng);
    let n = unique.len();
    let n_val = (va * n as f64).floor() as usize;
    let n_test = (te * n as f64).floor() as usize;
    for (i, id) in unique.iter().enumerate() {
        let split = if i < n_val {
            Split::Val
        } else if i < n_val + n_test {
            Split::Test
        } else {
            Split::Train
        };
        seen.insert(id, split);
    }
    Ok(ids.iter().map(|id| seen[id]).collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestPiece {
    pub piece_id: usize,
    pub file: String,
    pub gt_row: usize,
    pub gt_col: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub puzzle_id: String,
    pub k: usize,
    pub canvas: usize,
    pub split: Split,
    pub source: String,
    pub pieces: Vec<ManifestPiece>,
}

impl Manifest {
    pub fn parse(json: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(json)?;
        let found = value
            .get("schema_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::Manifest("missing schema_version".into()))?;
        if found != u64::from(SCHEMA_VERSION) {
            return Err(Error::SchemaVersion {
                found: u32::try_from(found).unwrap_or(u32::MAX),
                expected: SCHEMA_VERSION,
            });
        }
        let m: Manifest = serde_json::from_value(value)?;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Manifest("k must be >= 1".into()));
        }
        let n = self.k * self.k;
        if self.pieces.len() != n {
            return Err(Error::Manifest(format!(
                "expected {n} pieces for k={}, found {}",
                self.k,
                self.pieces.len()
            )));
        }
        let mut positions = Vec::with_capacity(n);
        for (i, p) in self.pieces.iter().enumerate() {
            if p.piece_id != i {
                return Err(Error::Manifest(format!("piece {i} has piece_id {}", p.piece_id)));
            }
            if p.gt_row >= self.k || p.gt_col >= self.k {
                return Err(Error::Manifest(format!("piece {i} ground truth is outside the grid")));
            }
            if Path::new(&p.file).components().count() != 1 {
                return Err(Error::Manifest(format!(
                    "piece file `{}` must be a bare file name",
                    p.file
                )));
            }
            positions.push(p.gt_row * self.k + p.gt_col);
        }
        if !Permutation::is_bijection(&positions) {
            return Err(Error::Manifest("ground truth positions are not a bijection".into()));
        }
        Ok(())
    }

    pub fn ground_truth(&self) -> Permutation {
        Permutation(self.pieces.iter().map(|p| p.gt_row * self.k + p.gt_col).collect())
    }
}

pub fn piece_file_name(index: usize) -> String {
    format!("piece_{index:02}.png")
}

/// `<root>/<split>/<puzzle_id>`.
pub fn puzzle_dir(root: &Path, split: Split, puzzle_id: &str) -> PathBuf {
    root.join(split.as_str()).join(puzzle_id)
}

pub fn manifest_of(instance: &PuzzleInstance) -> Manifest {
    let k = instance.grid.k;
    Manifest {
        schema_version: SCHEMA_VERSION,
        puzzle_id: instance.puzzle_id.clone(),
        k,
        canvas: instance.grid.canvas,
        split: instance.split,
        source: instance.source.clone(),
        pieces: instance
            .ground_truth
            .as_slice()
            .iter()
            .enumerate()
            .map(|(i, &pos)| ManifestPiece {
                piece_id: i,
                file: piece_file_name(i),
                gt_row: pos / k,
                gt_col: pos % k,
            })
            .collect(),
    }
}

/// Writes the manifest and piece PNGs; returns the manifest path.
pub fn write_manifest(instance: &PuzzleInstance, root: &Path) -> Result<PathBuf> {
    let dir = puzzle_dir(root, instance.split, &instance.puzzle_id);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let manifest = manifest_of(instance);
    for (piece, entry) in instance.pieces.iter().zip(&manifest.pieces) {
        piece.image.write_png(dir.join(&entry.file))?;
    }
    let path = dir.join(MANIFEST_FILE);
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Loads a puzzle from its `manifest.json`; piece masks come from alpha.
pub fn read_manifest(path: &Path) -> Result<PuzzleInstance> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest = Manifest::parse(&text)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut pieces = Vec::with_capacity(manifest.pieces.len());
    let mut side = None;
    for entry in &manifest.pieces {
        let image = RasterImage::read(dir.join(&entry.file))?;
        if image.channels() != 4 || image.width() != image.height() {
            return Err(Error::Manifest(format!(
                "{} must be a square RGBA image, found {}x{} with {} channel(s)",
                entry.file,
                image.width(),
                image.height(),
                image.channels()
            )));
        }
        if *side.get_or_insert(image.width()) != image.width() {
            return Err(Error::Manifest(format!(
                "{} differs in size from earlier pieces",
                entry.file
            )));
        }
        let mask = BinaryMask::from_raster(&image)?;
        pieces.push(Piece { image, mask });
    }
    let grid = GridSpec::new(manifest.k, manifest.canvas, side.unwrap_or(DEFAULT_MASK_SIDE))?;
    Ok(PuzzleInstance {
        puzzle_id: manifest.puzzle_id.clone(),
        grid,
        ground_truth: manifest.ground_truth(),
        pieces,
        source: manifest.source,
        split: manifest.split,
    })
}

/// All manifests under `root`, sorted by path.
pub fn find_manifests(root: &Path) -> Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let entries = fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        for entry in entries {
            let path = entry.map_err(|e| Error::io(&dir, e))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n == MANIFEST_FILE) {
                found.push(path);
            }
        }
    }
    found.sort();
    Ok(found)
}
