use std::collections::VecDeque;

use gap_core::maskforge::{
    binarize, fill_holes, largest_component, morphological_close, postprocess, sample_procedural_mask, BinaryMask,
    ProceduralMaskParams,
};
use gap_core::raster::{RasterImage, SampleRange};
use gap_core::seed::rng_from_seed;
use gap_core::shapestats::extract_features;
use gap_core::Error;
use proptest::prelude::*;

fn disk(side: usize, cx: f64, cy: f64, r: f64) -> BinaryMask {
    BinaryMask::from_fn(side, |x, y| (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r)
}

fn ring(side: usize, c: f64, r_in: f64, r_out: f64) -> BinaryMask {
    BinaryMask::from_fn(side, |x, y| {
        let d2 = (x as f64 - c).powi(2) + (y as f64 - c).powi(2);
        d2 <= r_out * r_out && d2 > r_in * r_in
    })
}

fn gray(side: usize, mut f: impl FnMut(usize, usize) -> f32) -> RasterImage {
    let samples = (0..side * side).map(|i| f(i % side, i / side)).collect();
    RasterImage::new(side, side, 1, SampleRange::Unit, samples).unwrap()
}

/// Plain BFS from every border background pixel (4-connectivity); a hole
/// is background that is never reached.
fn oracle_holes(m: &BinaryMask) -> usize {
    let s = m.side();
    let mut seen = vec![false; s * s];
    let mut q = VecDeque::new();
    for y in 0..s {
        for x in 0..s {
            if (x == 0 || y == 0 || x == s - 1 || y == s - 1) && !m.get(x, y) {
                seen[y * s + x] = true;
                q.push_back((x, y));
            }
        }
    }
    while let Some((x, y)) = q.pop_front() {
        let mut visit = |nx: usize, ny: usize| {
            if !m.get(nx, ny) && !seen[ny * s + nx] {
                seen[ny * s + nx] = true;
                q.push_back((nx, ny));
            }
        };
        if x > 0 {
            visit(x - 1, y);
        }
        if y > 0 {
            visit(x, y - 1);
        }
        if x + 1 < s {
            visit(x + 1, y);
        }
        if y + 1 < s {
            visit(x, y + 1);
        }
    }
    (0..s * s).filter(|&i| !m.bits()[i] && !seen[i]).count()
}

/// Recursive-free DFS count of 4-connected foreground components.
fn oracle_components(m: &BinaryMask) -> usize {
    let s = m.side();
    let mut seen = vec![false; s * s];
    let mut count = 0;
    for start in 0..s * s {
        if !m.bits()[start] || seen[start] {
            continue;
        }
        count += 1;
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            let (x, y) = (i % s, i / s);
            let mut next = Vec::new();
            if x > 0 {
                next.push(i - 1);
            }
            if x + 1 < s {
                next.push(i + 1);
            }
            if y > 0 {
                next.push(i - s);
            }
            if y + 1 < s {
                next.push(i + s);
            }
            for n in next {
                if m.bits()[n] && !seen[n] {
                    seen[n] = true;
                    stack.push(n);
                }
            }
        }
    }
    count
}

#[test]
fn binarize_threshold_is_strict() {
    assert!(binarize(&gray(8, |_, _| 0.49), 0.5).unwrap().is_empty());
    assert_eq!(binarize(&gray(8, |_, _| 0.51), 0.5).unwrap().area(), 64);
    assert!(binarize(&gray(8, |_, _| 0.5), 0.5).unwrap().is_empty());
}

#[test]
fn hole_filling_examples() {
    let annulus = ring(64, 32.0, 10.0, 20.0);
    assert_eq!(fill_holes(&annulus), disk(64, 32.0, 32.0, 20.0));
    let solid = disk(64, 30.0, 33.0, 12.0);
    assert_eq!(fill_holes(&solid), solid);

    let mut nested = ring(96, 48.0, 30.0, 40.0);
    let inner = ring(96, 48.0, 10.0, 20.0);
    for (i, b) in inner.bits().iter().enumerate() {
        if *b {
            nested.set(i % 96, i / 96, true);
        }
    }
    let filled = fill_holes(&nested);
    assert_eq!(filled, disk(96, 48.0, 48.0, 40.0));
    assert_eq!(oracle_holes(&filled), 0);
}

#[test]
fn largest_component_examples() {
    // 10-pixel bar and 5-pixel bar
    let m = BinaryMask::from_fn(20, |x, y| (y == 2 && x < 10) || (y == 10 && (3..8).contains(&x)));
    let out = largest_component(&m).unwrap();
    assert_eq!(out.area(), 10);
    assert!(out.get(0, 2) && !out.get(3, 10));

    let single = disk(32, 16.0, 16.0, 6.0);
    assert_eq!(largest_component(&single).unwrap(), single);

    // equal blobs: the one reached first in row-major order
    let twins = BinaryMask::from_fn(20, |x, y| {
        (y < 3 && (12..15).contains(&x)) || ((8..11).contains(&y) && x < 3)
    });
    let out = largest_component(&twins).unwrap();
    assert!(out.get(12, 0) && !out.get(0, 8));
    assert!(matches!(
        largest_component(&BinaryMask::empty(4)),
        Err(Error::EmptyMask)
    ));
}

#[test]
fn closing_examples() {
    let d = disk(96, 48.0, 48.0, 30.0);
    assert_eq!(morphological_close(&d, 2), d);
    assert!(morphological_close(&BinaryMask::empty(12), 2).is_empty());

    // direct oracle on a 7x7 grid for two pixels two apart
    let pair = BinaryMask::from_fn(7, |x, y| y == 3 && (x == 2 || x == 4));
    let within = |x: isize, y: isize, p: (isize, isize)| (x - p.0).pow(2) + (y - p.1).pow(2) <= 4;
    let dilated = |x: isize, y: isize| within(x, y, (2, 3)) || within(x, y, (4, 3));
    let oracle = BinaryMask::from_fn(7, |x, y| {
        (-2isize..=2).all(|dy| {
            (-2isize..=2).all(|dx| {
                dx * dx + dy * dy > 4 || {
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    (0..7).contains(&nx) && (0..7).contains(&ny) && dilated(nx, ny)
                }
            })
        })
    });
    assert_eq!(morphological_close(&pair, 2), oracle);

    // parallel strokes one pixel apart merge into a bar
    let strokes = BinaryMask::from_fn(9, |x, y| (x == 2 || x == 4) && (1..=7).contains(&y));
    let closed = morphological_close(&strokes, 2);
    assert!(closed.get(3, 4));
    assert_eq!(oracle_components(&closed), 1);
}

#[test]
fn postprocess_examples() {
    let blob = disk(64, 32.0, 32.0, 20.0);
    assert_eq!(postprocess(&blob.to_gray()).unwrap(), blob);

    let mut messy = blob.clone();
    messy.set(32, 32, false);
    messy.set(2, 2, true);
    let out = postprocess(&messy.to_gray()).unwrap();
    assert_eq!(out, blob);

    assert!(matches!(postprocess(&gray(16, |_, _| 0.0)), Err(Error::EmptyMask)));
}

#[test]
fn noiseless_sampler_gives_a_regular_polygon() {
    let params = ProceduralMaskParams::noiseless(0.4, 64);
    let m = sample_procedural_mask(&mut rng_from_seed(1), 128, &params).unwrap();
    let r = 0.4 * 128.0;
    let expected = std::f64::consts::PI * r * r;
    // 64-gon area is within 0.2% of the circle; allow for rasterization
    assert!(
        (m.area() as f64 - expected).abs() / expected < 0.03,
        "area {}",
        m.area()
    );
    let f = extract_features(&m).unwrap();
    assert!(f.solidity > 0.98 && f.circularity > 0.9);
}

#[test]
fn sampler_is_deterministic() {
    let p = ProceduralMaskParams::default();
    let a = sample_procedural_mask(&mut rng_from_seed(42), 128, &p).unwrap();
    let b = sample_procedural_mask(&mut rng_from_seed(42), 128, &p).unwrap();
    assert_eq!(a, b);
    assert!(sample_procedural_mask(&mut rng_from_seed(42), 16, &p).is_err());
}

#[test]
fn thousand_masks_are_clean_and_calibrated() {
    let p = ProceduralMaskParams::default();
    let mut rng = rng_from_seed(2024);
    let mut total = 0.0;
    for _ in 0..1000 {
        let m = sample_procedural_mask(&mut rng, 128, &p).unwrap();
        assert_eq!(oracle_components(&m), 1);
        assert_eq!(oracle_holes(&m), 0);
        assert_eq!(postprocess(&m.to_gray()).unwrap(), m);
        total += m.area() as f64;
    }
    let mean = total / 1000.0;
    assert!((mean - 10716.0).abs() / 10716.0 <= 0.15, "mean area {mean}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn postprocess_output_is_one_solid_component(seed in any::<u64>(), density in 0.2f64..0.8) {
        let mut state = seed;
        let noise = gray(24, |_, _| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) as f64 / (1u64 << 31) as f64) as f32
        });
        let img = gray(24, |x, y| if noise.pixel(x, y)[0] < density as f32 { 1.0 } else { 0.0 });
        match postprocess(&img) {
            Ok(m) => {
                prop_assert_eq!(oracle_components(&m), 1);
                prop_assert_eq!(oracle_holes(&m), 0);
                prop_assert_eq!(postprocess(&m.to_gray()).unwrap(), m);
            }
            Err(e) => prop_assert!(matches!(e, Error::EmptyMask)),
        }
    }

    #[test]
    fn closing_is_idempotent(seed in any::<u64>()) {
        let mut state = seed;
        let m = BinaryMask::from_fn(20, |_, _| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 60) < 5
        });
        let once = morphological_close(&m, 2);
        prop_assert_eq!(morphological_close(&once, 2), once.clone());
        // extensive away from the frame border
        for y in 4..16 {
            for x in 4..16 {
                prop_assert!(!m.get(x, y) || once.get(x, y));
            }
        }
    }
}
