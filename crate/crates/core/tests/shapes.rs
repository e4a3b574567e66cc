use gap_core::maskforge::{sample_procedural_mask, BinaryMask, ProceduralMaskParams};
use gap_core::seed::rng_from_seed;
use gap_core::shapestats::{
    compare_distributions, extract_features, pca, summarize_values, ShapeFeatures, FEATURE_NAMES,
};
use gap_core::Error;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr_free::normal;

mod rand_distr_free {
    use rand::Rng;

    /// Box-Muller standard normal.
    pub fn normal<R: Rng>(rng: &mut R) -> f64 {
        let u1: f64 = rng.random::<f64>().max(1e-300);
        let u2: f64 = rng.random();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

fn disk(side: usize, r: f64) -> BinaryMask {
    let c = side as f64 / 2.0;
    BinaryMask::from_fn(side, |x, y| (x as f64 - c).powi(2) + (y as f64 - c).powi(2) <= r * r)
}

/// Eigenvalues of the sample correlation matrix via nalgebra, descending.
fn oracle_eigenvalues(rows: &[Vec<f64>]) -> Vec<f64> {
    let (n, d) = (rows.len(), rows[0].len());
    let m = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    let mut z = m.clone();
    for j in 0..d {
        let col = m.column(j);
        let mean = col.mean();
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        for i in 0..n {
            z[(i, j)] = (m[(i, j)] - mean) / sd;
        }
    }
    let corr = z.transpose() * &z / (n - 1) as f64;
    let mut ev: Vec<f64> = SymmetricEigen::new(corr).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

#[test]
fn filled_square_features() {
    let m = BinaryMask::from_fn(32, |x, y| (5..15).contains(&x) && (5..15).contains(&y));
    let f = extract_features(&m).unwrap();
    assert_eq!(f.area, 100.0);
    assert_eq!(f.aspect_ratio, 1.0);
    assert!((0.98..=1.0).contains(&f.solidity), "solidity {}", f.solidity);
}

#[test]
fn disk_radius_40_features() {
    let f = extract_features(&disk(128, 40.0)).unwrap();
    let area = std::f64::consts::PI * 1600.0;
    assert!((f.area - area).abs() / area < 0.02);
    assert!((0.95..=1.02).contains(&f.circularity), "circularity {}", f.circularity);
    assert!(f.solidity >= 0.98);
    assert!(f.concavities <= 4.0, "concavities {}", f.concavities);
}

#[test]
fn circularity_times_compactness_is_four_pi() {
    let p = ProceduralMaskParams::default();
    let mut rng = rng_from_seed(9);
    for _ in 0..1000 {
        let m = sample_procedural_mask(&mut rng, 128, &p).unwrap();
        let f = extract_features(&m).unwrap();
        assert!((f.circularity * f.compactness - 4.0 * std::f64::consts::PI).abs() < 1e-9);
    }
}

#[test]
fn summary_of_small_samples() {
    let s = summarize_values(&[1.0, 2.0, 3.0, 4.0]).unwrap();
    assert_eq!(s.mean, 2.5);
    assert!((s.sd - 1.2909944487358056).abs() < 1e-12);
    let c = summarize_values(&[3.0; 7]).unwrap();
    assert_eq!((c.sd, c.iqr), (0.0, 0.0));
    assert!(matches!(
        summarize_values(&[1.0]),
        Err(Error::InsufficientSamples { .. })
    ));
}

#[test]
fn pca_matches_dense_eigensolver() {
    let mut rng = rng_from_seed(77);
    for _ in 0..50 {
        // correlated columns: random mixing of independent normals
        let mix: Vec<Vec<f64>> = (0..8).map(|_| (0..8).map(|_| normal(&mut rng)).collect()).collect();
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|_| {
                let z: Vec<f64> = (0..8).map(|_| normal(&mut rng)).collect();
                (0..8).map(|j| (0..8).map(|k| mix[j][k] * z[k]).sum()).collect()
            })
            .collect();
        let p = pca(&rows, &FEATURE_NAMES).unwrap();
        let oracle = oracle_eigenvalues(&rows);
        for (a, b) in p.eigenvalues.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
        let r = &p.explained_variance_ratio;
        assert!(r.windows(2).all(|w| w[0] >= w[1]));
        assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        // full-rank reconstruction recovers the standardized rows
        let z = p.standardize(&rows[3]);
        let back = p.reconstruct_standardized(&p.project(&rows[3]));
        for (a, b) in z.iter().zip(&back) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn pca_isotropic_and_collinear() {
    let mut rng = rng_from_seed(5);
    let iso: Vec<Vec<f64>> = (0..10_000)
        .map(|_| (0..8).map(|_| normal(&mut rng)).collect())
        .collect();
    let p = pca(&iso, &FEATURE_NAMES).unwrap();
    assert!(p.explained_variance_ratio.iter().all(|r| (r - 0.125).abs() < 0.02));

    let line: Vec<Vec<f64>> = (0..500)
        .map(|_| {
            let t = normal(&mut rng);
            let mut row = vec![t, t];
            row.extend((0..6).map(|_| 1e-3 * normal(&mut rng)));
            row
        })
        .collect();
    let p = pca(&line, &FEATURE_NAMES).unwrap();
    // the informative pair holds 2/8 of the standardized variance; PC1 takes all of it
    let share = p.explained_variance_ratio[0] / (2.0 / 8.0);
    assert!(share > 0.98, "share {share}");
    let l = &p.component_loadings[0];
    assert!(l[0] * l[0] + l[1] * l[1] > 0.9);
}

#[test]
fn pca_errors() {
    let few: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64; 8]).collect();
    assert!(matches!(
        pca(&few, &FEATURE_NAMES),
        Err(Error::InsufficientSamples { .. })
    ));
    let mut rng = rng_from_seed(1);
    let constant: Vec<Vec<f64>> = (0..20)
        .map(|_| {
            let mut r: Vec<f64> = (0..8).map(|_| rng.random::<f64>()).collect();
            r[4] = 2.0;
            r
        })
        .collect();
    match pca(&constant, &FEATURE_NAMES) {
        Err(Error::ConstantFeature { column }) => assert_eq!(column, "circularity"),
        other => panic!("expected constant-feature error, got {other:?}"),
    }
}

fn sample_features(seed: u64, n: usize) -> Vec<ShapeFeatures> {
    let mut rng = rng_from_seed(seed);
    let p = ProceduralMaskParams::default();
    (0..n)
        .map(|_| extract_features(&sample_procedural_mask(&mut rng, 128, &p).unwrap()).unwrap())
        .collect()
}

#[test]
fn distribution_comparison() {
    let a = sample_features(1, 120);
    let same = compare_distributions(&a, &a).unwrap();
    assert!(same.relative_mean_difference.iter().all(|(_, d)| *d == 0.0));

    let scaled: Vec<ShapeFeatures> = a
        .iter()
        .map(|f| ShapeFeatures {
            area: f.area * 1.1,
            ..*f
        })
        .collect();
    let r = compare_distributions(&a, &scaled).unwrap();
    for (name, d) in &r.relative_mean_difference {
        let expected = if name == "area" { 0.1 } else { 0.0 };
        assert!((d - expected).abs() < 1e-9, "{name}: {d}");
    }

    let b = sample_features(2, 958);
    let c = sample_features(3, 958);
    let r = compare_distributions(&b, &c).unwrap();
    assert!(r.pca_error.is_none());
    assert!(r.centroid_gap < 0.5, "gap {}", r.centroid_gap);
}
