//! Geometric descriptors of fragment masks, their summary statistics, and
//! PCA-based comparison of two fragment populations.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maskforge::BinaryMask;

pub const FEATURE_NAMES: [&str; 8] = [
    "area",
    "perimeter",
    "aspect_ratio",
    "solidity",
    "circularity",
    "compactness",
    "vertices",
    "concavities",
];

/// Douglas-Peucker tolerance as a fraction of the perimeter.
pub const SIMPLIFY_TOLERANCE: f64 = 0.01;
/// Concavity threshold in radians of turning per contour step.
pub const CONCAVITY_THRESHOLD: f64 = 0.05;
/// Contour samples in the smoothing and curvature window.
pub const CURVATURE_WINDOW: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeFeatures {
    pub area: f64,
    pub perimeter: f64,
    pub aspect_ratio: f64,
    pub solidity: f64,
    pub circularity: f64,
    pub compactness: f64,
    pub vertices: f64,
    pub concavities: f64,
}

impl ShapeFeatures {
    pub fn to_array(&self) -> [f64; 8] {
        [
            self.area,
            self.perimeter,
            self.aspect_ratio,
            self.solidity,
            self.circularity,
            self.compactness,
            self.vertices,
            self.concavities,
        ]
    }

    pub fn from_array(v: [f64; 8]) -> Self {
        Self {
            area: v[0],
            perimeter: v[1],
            aspect_ratio: v[2],
            solidity: v[3],
            circularity: v[4],
            compactness: v[5],
            vertices: v[6],
            concavities: v[7],
        }
    }
}

type Point = (f64, f64);

const MOORE: [(isize, isize); 8] = [(-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1)];

fn moore_index(dx: isize, dy: isize) -> usize {
    MOORE
        .iter()
        .position(|&d| d == (dx, dy))
        .expect("offset is a Moore neighbour")
}

/// Outer 8-connected boundary of the component containing the first
/// foreground pixel in row-major order, as pixel coordinates traced
/// clockwise on screen. The start pixel is not repeated at the end.
pub fn trace_outer_contour(mask: &BinaryMask) -> Result<Vec<(isize, isize)>> {
    let side = mask.side();
    let start_idx = mask.bits().iter().position(|&b| b).ok_or(Error::EmptyMask)?;
    let start = ((start_idx % side) as isize, (start_idx / side) as isize);
    let fg = |p: (isize, isize)| mask.get_signed(p.0, p.1);

    let mut contour = vec![start];
    let mut current = start;
    // west of the first row-major pixel is always background
    let mut back = moore_index(-1, 0);
    let limit = 4 * mask.area() + 8;
    for _ in 0..limit {
        let mut found = None;
        for k in 1..=8 {
            let dir = (back + k) % 8;
            let p = (current.0 + MOORE[dir].0, current.1 + MOORE[dir].1);
            if fg(p) {
                let prev = MOORE[(back + k - 1) % 8];
                let b = (current.0 + prev.0, current.1 + prev.1);
                found = Some((p, b));
                break;
            }
        }
        let Some((next, b)) = found else {
            break; // isolated pixel
        };
        // the first move repeats: the loop is closed
        if contour.len() > 1 && current == start && next == contour[1] {
            contour.pop();
            break;
        }
        back = moore_index(b.0 - next.0, b.1 - next.1);
        contour.push(next);
        current = next;
    }
    Ok(contour)
}

/// Chain-code length estimate for a closed 8-connected contour: straight
/// and diagonal steps weighted by 0.980 and 1.406, minus 0.091 per change
/// of direction (Vossepoel and Smeulders).
pub fn chain_length(contour: &[(isize, isize)]) -> f64 {
    let n = contour.len();
    if n < 2 {
        return 0.0;
    }
    let steps: Vec<(isize, isize)> = (0..n)
        .map(|i| {
            let a = contour[i];
            let b = contour[(i + 1) % n];
            (b.0 - a.0, b.1 - a.1)
        })
        .collect();
    let mut len = 0.0;
    let mut corners = 0usize;
    for (i, s) in steps.iter().enumerate() {
        len += if s.0 != 0 && s.1 != 0 { 1.406 } else { 0.980 };
        if steps[(i + n - 1) % n] != *s {
            corners += 1;
        }
    }
    len - 0.091 * corners as f64
}

fn shoelace(poly: &[Point]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum::<f64>()
        / 2.0
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Pixels inside or on the convex hull of the given pixel centers, by
/// Pick's theorem on the lattice hull polygon.
fn hull_pixel_count(pixels: &[(isize, isize)]) -> u64 {
    let pts: Vec<Point> = pixels.iter().map(|&(x, y)| (x as f64, y as f64)).collect();
    let hull: Vec<(i64, i64)> = convex_hull(&pts).iter().map(|&(x, y)| (x as i64, y as i64)).collect();
    match hull.len() {
        0 => 0,
        1 => 1,
        2 => (gcd(hull[1].0 - hull[0].0, hull[1].1 - hull[0].1) + 1) as u64,
        n => {
            let (mut twice_area, mut boundary) = (0i64, 0i64);
            for i in 0..n {
                let (a, b) = (hull[i], hull[(i + 1) % n]);
                twice_area += a.0 * b.1 - b.0 * a.1;
                boundary += gcd(b.0 - a.0, b.1 - a.1);
            }
            ((twice_area.abs() + boundary) / 2 + 1) as u64
        }
    }
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Andrew's monotone chain. Returns the hull counter-clockwise without
/// collinear points.
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let base = hull.len();
        let iter: Box<dyn Iterator<Item = &Point>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= base + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return (p.0 - a.0).hypot(p.1 - a.1);
    }
    let t = (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0);
    (p.0 - a.0 - t * dx).hypot(p.1 - a.1 - t * dy)
}

fn douglas_peucker(points: &[Point], eps: f64, keep: &mut [bool], lo: usize, hi: usize) {
    if hi <= lo + 1 {
        return;
    }
    let (mut best, mut best_d) = (lo, -1.0);
    for i in lo + 1..hi {
        let d = point_segment_distance(points[i], points[lo], points[hi]);
        if d > best_d {
            best = i;
            best_d = d;
        }
    }
    if best_d > eps {
        keep[best] = true;
        douglas_peucker(points, eps, keep, lo, best);
        douglas_peucker(points, eps, keep, best, hi);
    }
}

/// Vertex count of the Douglas-Peucker simplification of a closed curve.
/// The curve is split at its first point and the point farthest from it.
pub fn simplified_vertex_count(contour: &[Point], eps: f64) -> usize {
    let n = contour.len();
    if n <= 3 {
        return n;
    }
    let far = (1..n)
        .max_by(|&a, &b| {
            let da = (contour[a].0 - contour[0].0).hypot(contour[a].1 - contour[0].1);
            let db = (contour[b].0 - contour[0].0).hypot(contour[b].1 - contour[0].1);
            da.total_cmp(&db).then(b.cmp(&a))
        })
        .expect("n > 3");
    let mut closed = contour.to_vec();
    closed.push(contour[0]);
    let mut keep = vec![false; n + 1];
    keep[0] = true;
    keep[far] = true;
    douglas_peucker(&closed, eps, &mut keep, 0, far);
    douglas_peucker(&closed, eps, &mut keep, far, n);
    keep[..n].iter().filter(|&&k| k).count()
}

/// Contour points bending inward by more than `threshold` radians per step.
/// The contour is first smoothed with a centered moving average over
/// `window` samples; curvature at each point is the turn between the chords
/// reaching `window / 2` samples back and forward, divided by that span.
pub fn count_concavities(contour: &[Point], window: usize, threshold: f64) -> usize {
    let n = contour.len();
    let half = window / 2;
    if half == 0 || n < window {
        return 0;
    }
    let smooth: Vec<Point> = (0..n)
        .map(|i| {
            let (mut x, mut y) = (0.0, 0.0);
            for k in 0..window {
                let p = contour[(i + n + k - half) % n];
                x += p.0;
                y += p.1;
            }
            (x / window as f64, y / window as f64)
        })
        .collect();
    let orientation = shoelace(&smooth).signum();
    (0..n)
        .filter(|&i| {
            let a = smooth[(i + n - half) % n];
            let p = smooth[i];
            let b = smooth[(i + half) % n];
            let v1 = (p.0 - a.0, p.1 - a.1);
            let v2 = (b.0 - p.0, b.1 - p.1);
            let turn = (v1.0 * v2.1 - v1.1 * v2.0).atan2(v1.0 * v2.0 + v1.1 * v2.1);
            orientation * turn / (half as f64) < -threshold
        })
        .count()
}

/// Computes the eight shape descriptors.
///
/// Perimeter is the chain-code length of the outer contour through pixel
/// centers plus π, the length added by offsetting a closed curve outward
/// by half a pixel to reach the pixel-union boundary that `area` counts.
/// It is floored at the isoperimetric bound `sqrt(4πA)`, which only binds
/// for masks of a few pixels. Solidity divides by the number of pixels in
/// the convex hull of the pixel centers, so it never exceeds one.
pub fn extract_features(mask: &BinaryMask) -> Result<ShapeFeatures> {
    let contour = trace_outer_contour(mask)?;
    let area = mask.area() as f64;

    let perimeter = (chain_length(&contour) + PI).max((4.0 * PI * area).sqrt());

    let (mut xmin, mut xmax, mut ymin, mut ymax) = (isize::MAX, isize::MIN, isize::MAX, isize::MIN);
    for &(x, y) in &contour {
        xmin = xmin.min(x);
        xmax = xmax.max(x);
        ymin = ymin.min(y);
        ymax = ymax.max(y);
    }
    let aspect_ratio = (xmax - xmin + 1) as f64 / (ymax - ymin + 1) as f64;

    let solidity = area / hull_pixel_count(&contour) as f64;

    let circularity = 4.0 * PI * area / (perimeter * perimeter);
    let compactness = perimeter * perimeter / area;

    let centers: Vec<Point> = contour.iter().map(|&(x, y)| (x as f64, y as f64)).collect();
    let vertices = simplified_vertex_count(&centers, SIMPLIFY_TOLERANCE * perimeter) as f64;
    let concavities = count_concavities(&centers, CURVATURE_WINDOW, CONCAVITY_THRESHOLD) as f64;

    Ok(ShapeFeatures {
        area,
        perimeter,
        aspect_ratio,
        solidity,
        circularity,
        compactness,
        vertices,
        concavities,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureSummary {
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    pub iqr: f64,
}

/// Median with the lower middle element for even lengths. `sorted` must be
/// non-empty and ascending.
fn lower_median(sorted: &[f64]) -> f64 {
    sorted[(sorted.len() - 1) / 2]
}

/// Summary of one sample: mean, sample SD, lower median, extremes and the
/// Tukey-hinge IQR (halves exclude the median when n is odd).
pub fn summarize_values(values: &[f64]) -> Result<FeatureSummary> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let half = n / 2;
    let q1 = lower_median(&sorted[..half]);
    let q3 = lower_median(&sorted[n - half..]);
    Ok(FeatureSummary {
        mean,
        sd: var.sqrt(),
        median: lower_median(&sorted),
        min: sorted[0],
        max: sorted[n - 1],
        iqr: q3 - q1,
    })
}

/// Per-feature summaries in [`FEATURE_NAMES`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub n: usize,
    pub features: Vec<(String, FeatureSummary)>,
}

impl SummaryStats {
    pub fn get(&self, name: &str) -> Option<&FeatureSummary> {
        self.features.iter().find(|(n, _)| n == name).map(|(_, s)| s)
    }
}

pub fn summarize(samples: &[ShapeFeatures]) -> Result<SummaryStats> {
    let features = FEATURE_NAMES
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let column: Vec<f64> = samples.iter().map(|s| s.to_array()[k]).collect();
            Ok((name.to_string(), summarize_values(&column)?))
        })
        .collect::<Result<_>>()?;
    Ok(SummaryStats {
        n: samples.len(),
        features,
    })
}

/// Principal components of z-scored data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaResult {
    /// Row `k` is the unit loading vector of component `k`.
    pub component_loadings: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
    /// Scores of every input row on every component.
    pub projected: Vec<Vec<f64>>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl PcaResult {
    pub fn standardize(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.means.iter().zip(&self.sds))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    /// Scores of an arbitrary row in component space.
    pub fn project(&self, row: &[f64]) -> Vec<f64> {
        let z = self.standardize(row);
        self.component_loadings
            .iter()
            .map(|l| l.iter().zip(&z).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Standardized row rebuilt from its scores on all components.
    pub fn reconstruct_standardized(&self, scores: &[f64]) -> Vec<f64> {
        let d = self.means.len();
        (0..d)
            .map(|j| scores.iter().zip(&self.component_loadings).map(|(s, l)| s * l[j]).sum())
            .collect()
    }
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues and matching eigenvectors (as columns of the second
/// result, stored row-major), unsorted.
pub fn symmetric_eigen(matrix: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let d = matrix.len();
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    let mut v: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let scale: f64 = a
        .iter()
        .flatten()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..d)
            .flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                if a[p][q].abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vkp, vkq) = (row[p], row[q]);
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..d).map(|i| a[i][i]).collect(), v)
}

/// PCA over rows of equal width. Columns are z-scored with the sample SD,
/// components sorted by eigenvalue, each loading row signed so its
/// largest-magnitude entry is non-negative.
pub fn pca(rows: &[Vec<f64>], names: &[&str]) -> Result<PcaResult> {
    let d = names.len();
    let n = rows.len();
    if n < d + 1 {
        return Err(Error::InsufficientSamples { needed: d + 1, got: n });
    }
    if let Some(bad) = rows.iter().position(|r| r.len() != d) {
        return Err(Error::LengthMismatch(format!(
            "row {bad} has {} columns, expected {d}",
            rows[bad].len()
        )));
    }
    let mut means = vec![0.0; d];
    let mut sds = vec![0.0; d];
    for j in 0..d {
        let m = rows.iter().map(|r| r[j]).sum::<f64>() / n as f64;
        let var = rows.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        let sd = var.sqrt();
        if !(sd > 1e-12 * m.abs().max(1.0)) {
            return Err(Error::ConstantFeature {
                column: names[j].to_string(),
            });
        }
        means[j] = m;
        sds[j] = sd;
    }
    let z: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| (0..d).map(|j| (r[j] - means[j]) / sds[j]).collect())
        .collect();
    let mut cov = vec![vec![0.0; d]; d];
    for row in &z {
        for i in 0..d {
            for j in i..d {
                cov[i][j] += row[i] * row[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            cov[i][j] /= (n - 1) as f64;
            cov[j][i] = cov[i][j];
        }
    }
    let (values, vectors) = symmetric_eigen(&cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));

    let loadings: Vec<Vec<f64>> = order
        .iter()
        .map(|&k| {
            let mut col: Vec<f64> = (0..d).map(|i| vectors[i][k]).collect();
            let lead = col
                .iter()
                .copied()
                .fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
            if lead < 0.0 {
                col.iter_mut().for_each(|x| *x = -*x);
            }
            col
        })
        .collect();
    let eigenvalues: Vec<f64> = order.iter().map(|&k| values[k].max(0.0)).collect();
    let total: f64 = eigenvalues.iter().sum();
    let explained_variance_ratio = eigenvalues.iter().map(|v| v / total).collect();
    let projected = z
        .iter()
        .map(|row| {
            loadings
                .iter()
                .map(|l| l.iter().zip(row).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect();
    Ok(PcaResult {
        component_loadings: loadings,
        eigenvalues,
        explained_variance_ratio,
        projected,
        means,
        sds,
    })
}

/// PCA on the eight shape features.
pub fn pca_features(samples: &[ShapeFeatures]) -> Result<PcaResult> {
    let rows: Vec<Vec<f64>> = samples.iter().map(|s| s.to_array().to_vec()).collect();
    pca(&rows, &FEATURE_NAMES)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedPoint {
    pub group: String,
    pub pc1: f64,
    pub pc2: f64,
}

/// Real-versus-synthetic comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub real: SummaryStats,
    pub synthetic: SummaryStats,
    /// `(synthetic mean - real mean) / |real mean|` per feature.
    pub relative_mean_difference: Vec<(String, f64)>,
    pub explained_variance_ratio: Vec<f64>,
    pub component_loadings: Vec<Vec<f64>>,
    pub points: Vec<ProjectedPoint>,
    /// Distance between group centroids in the PC1/PC2 plane, in units of
    /// the pooled standard deviation of the two components.
    pub centroid_gap: f64,
    /// Set when pooled PCA was impossible (e.g. a constant feature).
    pub pca_error: Option<String>,
}

pub fn compare_distributions(real: &[ShapeFeatures], synth: &[ShapeFeatures]) -> Result<ValidationReport> {
    if real.is_empty() || synth.is_empty() {
        return Err(Error::Precondition(
            "both fragment populations must be non-empty".into(),
        ));
    }
    let real_stats = summarize(real)?;
    let synth_stats = summarize(synth)?;
    let relative_mean_difference = real_stats
        .features
        .iter()
        .zip(&synth_stats.features)
        .map(|((name, r), (_, s))| {
            let denom = r.mean.abs();
            let diff = if denom > 0.0 {
                (s.mean - r.mean) / denom
            } else {
                s.mean - r.mean
            };
            (name.clone(), diff)
        })
        .collect();

    let pooled: Vec<ShapeFeatures> = real.iter().chain(synth).copied().collect();
    let mut report = ValidationReport {
        real: real_stats,
        synthetic: synth_stats,
        relative_mean_difference,
        explained_variance_ratio: Vec::new(),
        component_loadings: Vec::new(),
        points: Vec::new(),
        centroid_gap: 0.0,
        pca_error: None,
    };
    match pca_features(&pooled) {
        Ok(p) => {
            report.points = p
                .projected
                .iter()
                .enumerate()
                .map(|(i, s)| ProjectedPoint {
                    group: if i < real.len() { "real" } else { "synthetic" }.into(),
                    pc1: s[0],
                    pc2: s[1],
                })
                .collect();
            let centroid = |group: &str| {
                let pts: Vec<_> = report.points.iter().filter(|p| p.group == group).collect();
                let n = pts.len() as f64;
                (
                    pts.iter().map(|p| p.pc1).sum::<f64>() / n,
                    pts.iter().map(|p| p.pc2).sum::<f64>() / n,
                )
            };
            let (a, b) = (centroid("real"), centroid("synthetic"));
            let pooled_sd = ((p.eigenvalues[0] + p.eigenvalues[1]) / 2.0).sqrt();
            report.centroid_gap = (a.0 - b.0).hypot(a.1 - b.1) / pooled_sd;
            report.explained_variance_ratio = p.explained_variance_ratio;
            report.component_loadings = p.component_loadings;
        }
        Err(e) => report.pca_error = Some(e.to_string()),
    }
    Ok(report)
}

/// PC1/PC2 scatter, one colour per group.
pub fn scatter_svg(report: &ValidationReport) -> String {
    const W: f64 = 640.0;
    const H: f64 = 480.0;
    const PAD: f64 = 40.0;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    if report.points.is_empty() {
        svg.push_str("</svg>\n");
        return svg;
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in &report.points {
        x0 = x0.min(p.pc1);
        x1 = x1.max(p.pc1);
        y0 = y0.min(p.pc2);
        y1 = y1.max(p.pc2);
    }
    let sx = (W - 2.0 * PAD) / (x1 - x0).max(1e-9);
    let sy = (H - 2.0 * PAD) / (y1 - y0).max(1e-9);
    let pct = |k: usize| 100.0 * report.explained_variance_ratio.get(k).copied().unwrap_or(0.0);
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">PC1 ({:.1}%)</text>\n\
         <text x=\"12\" y=\"{}\" font-size=\"12\" transform=\"rotate(-90 12 {})\" text-anchor=\"middle\">PC2 ({:.1}%)</text>\n",
        W / 2.0,
        H - 8.0,
        pct(0),
        H / 2.0,
        H / 2.0,
        pct(1)
    ));
    for p in &report.points {
        let color = if p.group == "real" { "#1f77b4" } else { "#ff7f0e" };
        svg.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"{color}\" fill-opacity=\"0.5\"/>\n",
            PAD + (p.pc1 - x0) * sx,
            H - PAD - (p.pc2 - y0) * sy
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Feature table with a header row, one fragment per line.
pub fn features_csv(ids: &[String], samples: &[ShapeFeatures]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["id"];
    header.extend(FEATURE_NAMES);
    w.write_record(&header).map_err(csv_err)?;
    for (id, s) in ids.iter().zip(samples) {
        let mut rec = vec![id.clone()];
        rec.extend(s.to_array().iter().map(|v| format!("{v}")));
        w.write_record(&rec).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Encode(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Encode(e.to_string())
}
