//! Fragment masks: synthesis and the clean-up pipeline that turns a soft
//! occupancy map into a single hole-free, smoothed fragment.
//!
//! Connectivity is 4-neighbour throughout. Pixels outside the frame count
//! as background for every operation.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{decode_image, RasterImage, SampleRange};

pub const DEFAULT_MASK_SIDE: usize = 128;
pub const BINARIZE_THRESHOLD: f32 = 0.5;
pub const CLOSING_RADIUS: usize = 2;
const MAX_SAMPLE_ATTEMPTS: usize = 16;

const NEIGHBORS4: [(isize, isize); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

/// Square boolean occupancy grid, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    side: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn empty(side: usize) -> Self {
        Self {
            side,
            bits: vec![false; side * side],
        }
    }

    pub fn full(side: usize) -> Self {
        Self {
            side,
            bits: vec![true; side * side],
        }
    }

    pub fn from_bits(side: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != side * side {
            return Err(Error::Shape(format!(
                "{} bits cannot form a {side}x{side} mask",
                bits.len()
            )));
        }
        Ok(Self { side, bits })
    }

    /// Mask with `pred(x, y)` set.
    pub fn from_fn(side: usize, mut pred: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(side * side);
        for y in 0..side {
            for x in 0..side {
                bits.push(pred(x, y));
            }
        }
        Self { side, bits }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.side + x]
    }

    /// Out-of-frame coordinates read as background.
    #[inline]
    pub fn get_signed(&self, x: isize, y: isize) -> bool {
        let s = self.side as isize;
        x >= 0 && y >= 0 && x < s && y < s && self.bits[(y * s + x) as usize]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.side + x] = value;
    }

    pub fn area(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Shifted copy; pixels leaving the frame are dropped.
    pub fn translated(&self, dx: isize, dy: isize) -> Self {
        Self::from_fn(self.side, |x, y| self.get_signed(x as isize - dx, y as isize - dy))
    }

    /// Normalized grayscale raster: 1.0 foreground, 0.0 background.
    pub fn to_gray(&self) -> RasterImage {
        let samples = self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        RasterImage::new(self.side, self.side, 1, SampleRange::Unit, samples).expect("mask dimensions are valid")
    }

    /// Mask from the alpha channel of an RGBA image (alpha > 0) or from a
    /// grayscale image (value above half range).
    pub fn from_raster(img: &RasterImage) -> Result<Self> {
        if img.width() != img.height() {
            return Err(Error::Shape(format!(
                "mask raster must be square, got {}x{}",
                img.width(),
                img.height()
            )));
        }
        let bits = match img.channels() {
            4 => img.samples().chunks_exact(4).map(|p| p[3] > 0.0).collect(),
            1 => {
                let unit = img.with_range(SampleRange::Unit);
                unit.samples().iter().map(|&v| v > BINARIZE_THRESHOLD).collect()
            }
            n => {
                return Err(Error::WrongChannels {
                    expected: "1 or 4",
                    found: n,
                })
            }
        };
        Self::from_bits(img.width(), bits)
    }

    /// 8-bit grayscale PNG, 0 background and 255 foreground.
    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_gray().write_png(path)
    }

    pub fn read_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_raster(&decode_image(&bytes)?)
    }
}

/// Sets every pixel whose normalized value is strictly above `threshold`.
pub fn binarize(gray: &RasterImage, threshold: f32) -> Result<BinaryMask> {
    if gray.channels() != 1 {
        return Err(Error::WrongChannels {
            expected: "1",
            found: gray.channels(),
        });
    }
    if gray.width() != gray.height() {
        return Err(Error::Shape(format!(
            "expected a square image, got {}x{}",
            gray.width(),
            gray.height()
        )));
    }
    let unit = gray.with_range(SampleRange::Unit);
    let bits = unit.samples().iter().map(|&v| v > threshold).collect();
    BinaryMask::from_bits(gray.width(), bits)
}

/// Fills every background region not 4-connected to the frame border.
pub fn fill_holes(mask: &BinaryMask) -> BinaryMask {
    let side = mask.side;
    let mut outside = vec![false; side * side];
    let mut queue = VecDeque::new();
    for i in 0..side {
        for (x, y) in [(i, 0), (i, side - 1), (0, i), (side - 1, i)] {
            let idx = y * side + x;
            if !mask.bits[idx] && !outside[idx] {
                outside[idx] = true;
                queue.push_back((x, y));
            }
        }
    }
    while let Some((x, y)) = queue.pop_front() {
        for (dx, dy) in NEIGHBORS4 {
            let (nx, ny) = (x as isize + dx, y as isize + dy);
            if nx < 0 || ny < 0 || nx >= side as isize || ny >= side as isize {
                continue;
            }
            let idx = ny as usize * side + nx as usize;
            if !mask.bits[idx] && !outside[idx] {
                outside[idx] = true;
                queue.push_back((nx as usize, ny as usize));
            }
        }
    }
    BinaryMask {
        side,
        bits: outside.into_iter().map(|o| !o).collect(),
    }
}

/// Labels 4-connected foreground components in row-major discovery order.
/// Returns per-pixel labels (`usize::MAX` for background) and sizes.
fn label_components(mask: &BinaryMask) -> (Vec<usize>, Vec<usize>) {
    let side = mask.side;
    let mut labels = vec![usize::MAX; side * side];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..side * side {
        if !mask.bits[start] || labels[start] != usize::MAX {
            continue;
        }
        let label = sizes.len();
        let mut size = 0;
        labels[start] = label;
        queue.push_back(start);
        while let Some(idx) = queue.pop_front() {
            size += 1;
            let (x, y) = ((idx % side) as isize, (idx / side) as isize);
            for (dx, dy) in NEIGHBORS4 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= side as isize || ny >= side as isize {
                    continue;
                }
                let n = ny as usize * side + nx as usize;
                if mask.bits[n] && labels[n] == usize::MAX {
                    labels[n] = label;
                    queue.push_back(n);
                }
            }
        }
        sizes.push(size);
    }
    (labels, sizes)
}

/// Number of 4-connected foreground components.
pub fn component_count(mask: &BinaryMask) -> usize {
    label_components(mask).1.len()
}

/// Keeps the largest 4-connected component. On ties the component whose
/// first pixel comes earliest in row-major order wins.
pub fn largest_component(mask: &BinaryMask) -> Result<BinaryMask> {
    let (labels, sizes) = label_components(mask);
    // labels are assigned in row-major order of first pixel, so the first
    // maximum is also the tie winner
    let best = sizes
        .iter()
        .enumerate()
        .fold(None, |acc: Option<(usize, usize)>, (label, &size)| match acc {
            Some((_, s)) if s >= size => acc,
            _ => Some((label, size)),
        })
        .ok_or(Error::EmptyMask)?
        .0;
    Ok(BinaryMask {
        side: mask.side,
        bits: labels.into_iter().map(|l| l == best).collect(),
    })
}

/// Offsets of the discrete disk `dx² + dy² <= r²`.
pub fn disk_offsets(radius: usize) -> Vec<(isize, isize)> {
    let r = radius as isize;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                out.push((dx, dy));
            }
        }
    }
    out
}

pub fn dilate(mask: &BinaryMask, radius: usize) -> BinaryMask {
    let offsets = disk_offsets(radius);
    let side = mask.side as isize;
    let mut out = BinaryMask::empty(mask.side);
    for y in 0..side {
        for x in 0..side {
            if !mask.get(x as usize, y as usize) {
                continue;
            }
            for &(dx, dy) in &offsets {
                let (nx, ny) = (x + dx, y + dy);
                if nx >= 0 && ny >= 0 && nx < side && ny < side {
                    out.set(nx as usize, ny as usize, true);
                }
            }
        }
    }
    out
}

pub fn erode(mask: &BinaryMask, radius: usize) -> BinaryMask {
    let offsets = disk_offsets(radius);
    BinaryMask::from_fn(mask.side, |x, y| {
        mask.get(x, y)
            && offsets
                .iter()
                .all(|&(dx, dy)| mask.get_signed(x as isize + dx, y as isize + dy))
    })
}

/// Dilation followed by erosion with the radius-`radius` disk.
pub fn morphological_close(mask: &BinaryMask, radius: usize) -> BinaryMask {
    erode(&dilate(mask, radius), radius)
}

/// Binarize at 0.5, fill holes, keep the largest component, close with a
/// radius-2 disk. Closing can seal a narrow inlet into a new hole or, at
/// the frame border, split off a sliver, so hole filling and component
/// selection run once more on the closed mask; on well-formed input that
/// second pass changes nothing.
pub fn postprocess(raw: &RasterImage) -> Result<BinaryMask> {
    let mask = binarize(raw, BINARIZE_THRESHOLD)?;
    let mask = largest_component(&fill_holes(&mask))?;
    let closed = morphological_close(&mask, CLOSING_RADIUS);
    largest_component(&fill_holes(&closed))
}

/// Knobs for the star-convex fragment generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProceduralMaskParams {
    /// Mean vertex radius as a fraction of the frame side, in (0, 0.5].
    pub base_radius_fraction: f64,
    /// Inclusive range of polygon vertex counts.
    pub vertex_count: (usize, usize),
    /// Per-vertex radius noise as a fraction of the base radius.
    pub radial_noise_amplitude: f64,
    /// Per-vertex angular jitter as a fraction of the mean vertex spacing.
    pub angular_jitter: f64,
    /// Amplitude in pixels of the high-frequency boundary noise.
    pub boundary_roughness_scale: f64,
    /// Stretch the shape so its bounding box is square.
    pub square_bbox: bool,
}

impl Default for ProceduralMaskParams {
    fn default() -> Self {
        Self {
            base_radius_fraction: 0.48,
            vertex_count: (6, 12),
            radial_noise_amplitude: 0.2,
            angular_jitter: 0.35,
            boundary_roughness_scale: 3.0,
            square_bbox: false,
        }
    }
}

impl ProceduralMaskParams {
    /// Regular polygon, no noise.
    pub fn noiseless(base_radius_fraction: f64, vertices: usize) -> Self {
        Self {
            base_radius_fraction,
            vertex_count: (vertices, vertices),
            radial_noise_amplitude: 0.0,
            angular_jitter: 0.0,
            boundary_roughness_scale: 0.0,
            square_bbox: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.vertex_count;
        if !(self.base_radius_fraction > 0.0 && self.base_radius_fraction <= 0.5) {
            return Err(Error::Config(format!(
                "base_radius_fraction must be in (0, 0.5], got {}",
                self.base_radius_fraction
            )));
        }
        if lo < 3 || hi < lo {
            return Err(Error::Config(format!(
                "vertex_count range must satisfy 3 <= min <= max, got {lo}..={hi}"
            )));
        }
        for (name, v) in [
            ("radial_noise_amplitude", self.radial_noise_amplitude),
            ("angular_jitter", self.angular_jitter),
            ("boundary_roughness_scale", self.boundary_roughness_scale),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Star-shaped outline: polygon radial function plus a sum of sinusoids.
struct StarOutline {
    angles: Vec<f64>,
    points: Vec<(f64, f64)>,
    ripples: Vec<(f64, f64, f64)>,
}

impl StarOutline {
    fn sample<R: Rng + ?Sized>(rng: &mut R, radius: f64, params: &ProceduralMaskParams) -> Self {
        let (lo, hi) = params.vertex_count;
        let n = rng.random_range(lo..=hi);
        let spacing = 2.0 * PI / n as f64;
        let rotation = rng.random_range(0.0..spacing);
        let mut angles: Vec<f64> = (0..n)
            .map(|v| {
                let jitter = params.angular_jitter * 0.5 * spacing * rng.random_range(-1.0..=1.0);
                (rotation + v as f64 * spacing + jitter).rem_euclid(2.0 * PI)
            })
            .collect();
        angles.sort_by(f64::total_cmp);
        let points = angles
            .iter()
            .map(|&a| {
                let r = radius * (1.0 + params.radial_noise_amplitude * rng.random_range(-1.0..=1.0));
                (r * a.cos(), r * a.sin())
            })
            .collect();
        let ripples = if params.boundary_roughness_scale > 0.0 {
            let count = 4;
            let amp = params.boundary_roughness_scale / (count as f64 / 2.0).sqrt();
            (0..count)
                .map(|_| {
                    (
                        amp * rng.random_range(0.5..=1.0),
                        f64::from(rng.random_range(6u32..=28)),
                        rng.random_range(0.0..2.0 * PI),
                    )
                })
                .collect()
        } else {
            Vec::new()
        };
        Self {
            angles,
            points,
            ripples,
        }
    }

    fn radius_at(&self, theta: f64) -> f64 {
        let n = self.angles.len();
        let theta = theta.rem_euclid(2.0 * PI);
        // edge whose angular span contains theta
        let next = self.angles.partition_point(|&a| a <= theta) % n;
        let prev = (next + n - 1) % n;
        let (p0, p1) = (self.points[prev], self.points[next]);
        let (ux, uy) = (theta.cos(), theta.sin());
        let (ex, ey) = (p1.0 - p0.0, p1.1 - p0.1);
        let den = ux * ey - uy * ex;
        let poly = if den.abs() < 1e-12 {
            (p0.0.hypot(p0.1)).min(p1.0.hypot(p1.1))
        } else {
            (p0.0 * ey - p0.1 * ex) / den
        };
        let ripple: f64 = self
            .ripples
            .iter()
            .map(|&(a, f, phase)| a * (f * theta + phase).sin())
            .sum();
        poly + ripple
    }
}

/// Draws a star-convex fragment and runs it through [`postprocess`].
/// Identical seed and parameters give identical masks.
pub fn sample_procedural_mask<R: Rng + ?Sized>(
    rng: &mut R,
    side: usize,
    params: &ProceduralMaskParams,
) -> Result<BinaryMask> {
    if side < 32 {
        return Err(Error::Precondition(format!("mask side must be >= 32, got {side}")));
    }
    params.validate()?;
    let half = side as f64 / 2.0;
    let limit = half - (CLOSING_RADIUS + 2) as f64;
    let radius = params.base_radius_fraction * side as f64;
    for _ in 0..MAX_SAMPLE_ATTEMPTS {
        let outline = StarOutline::sample(rng, radius, params);
        let (sx, sy) = if params.square_bbox {
            let (w, h) = outline_extent(&outline);
            ((h / w).sqrt(), (w / h).sqrt())
        } else {
            (1.0, 1.0)
        };
        let center = (side as f64 - 1.0) / 2.0;
        let raw = BinaryMask::from_fn(side, |x, y| {
            let dx = (x as f64 - center) / sx;
            let dy = (y as f64 - center) / sy;
            let d = dx.hypot(dy);
            let bound = outline.radius_at(dy.atan2(dx)).min(limit);
            d <= bound && (x as f64 - center).abs() <= limit && (y as f64 - center).abs() <= limit
        });
        match postprocess(&raw.to_gray()) {
            Ok(mask) => return Ok(mask),
            Err(Error::EmptyMask) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::MaskGeneration {
        attempts: MAX_SAMPLE_ATTEMPTS,
    })
}

fn outline_extent(outline: &StarOutline) -> (f64, f64) {
    let (mut xmin, mut xmax, mut ymin, mut ymax) = (0f64, 0f64, 0f64, 0f64);
    for i in 0..720 {
        let a = i as f64 * PI / 360.0;
        let r = outline.radius_at(a);
        xmin = xmin.min(r * a.cos());
        xmax = xmax.max(r * a.cos());
        ymin = ymin.min(r * a.sin());
        ymax = ymax.max(r * a.sin());
    }
    ((xmax - xmin).max(1e-6), (ymax - ymin).max(1e-6))
}
