use std::collections::{HashMap, HashSet};

use gap_core::maskforge::BinaryMask;
use gap_core::puzzlegen::{
    assemble, find_manifests, generate_puzzle, make_puzzle, manifest_of, read_manifest, shuffle, split_dataset,
    write_manifest, GridSpec, Manifest, Permutation, Piece, ProceduralMasks, PuzzleInstance, Split, SquareMasks,
};
use gap_core::raster::{RasterImage, SampleRange};
use gap_core::seed::rng_from_seed;
use gap_core::Error;

fn image(side: usize, f: impl Fn(usize, usize) -> [f32; 3]) -> RasterImage {
    let samples = (0..side * side).flat_map(|i| f(i % side, i / side)).collect();
    RasterImage::new(side, side, 3, SampleRange::Byte, samples).unwrap()
}

fn textured(side: usize) -> RasterImage {
    image(side, |x, y| {
        [(x * 7 % 256) as f32, (y * 5 % 256) as f32, ((x + y) % 256) as f32]
    })
}

#[test]
fn single_piece_is_the_masked_center_crop() {
    let grid = GridSpec::new(1, 160, 128).unwrap();
    let img = textured(160);
    let mut rng = rng_from_seed(3);
    let p = make_puzzle(
        &img,
        grid,
        &mut ProceduralMasks::default(),
        &mut rng,
        "one",
        "synthetic",
    )
    .unwrap();
    assert_eq!(p.ground_truth, Permutation::identity(1));
    let piece = &p.pieces[0];
    for y in 0..128 {
        for x in 0..128 {
            let px = piece.image.pixel(x, y);
            if piece.mask.get(x, y) {
                assert_eq!(&px[..3], img.pixel(16 + x, 16 + y));
                assert_eq!(px[3], 255.0);
            } else {
                assert_eq!(px[3], 0.0);
            }
        }
    }
}

#[test]
fn horizontal_gradient_red_increases_with_column() {
    let grid = GridSpec::standard(3).unwrap();
    let img = image(grid.canvas, |x, _| {
        [x as f32 * 255.0 / (grid.canvas - 1) as f32, 40.0, 90.0]
    });
    let p = make_puzzle(
        &img,
        grid,
        &mut ProceduralMasks::default(),
        &mut rng_from_seed(8),
        "g",
        "synthetic",
    )
    .unwrap();
    let mean_red = |piece: &Piece| {
        let (mut s, mut c) = (0.0, 0.0);
        for y in 0..grid.piece_side {
            for x in 0..grid.piece_side {
                if piece.mask.get(x, y) {
                    s += f64::from(piece.image.pixel(x, y)[0]);
                    c += 1.0;
                }
            }
        }
        s / c
    };
    for row in 0..3 {
        let reds: Vec<f64> = (0..3).map(|col| mean_red(&p.pieces[row * 3 + col])).collect();
        assert!(reds[0] < reds[1] && reds[1] < reds[2], "{reds:?}");
    }
}

#[test]
fn square_pieces_tile_the_canvas() {
    let grid = GridSpec::standard(3).unwrap();
    assert_eq!((grid.canvas, grid.cell(), grid.piece_side), (384, 128, 128));
    let img = textured(384);
    let p = generate_puzzle(&img, grid, &mut SquareMasks, 11, "sq", "synthetic").unwrap();
    let rebuilt = assemble(&p, &p.ground_truth).unwrap();
    for y in 0..384 {
        for x in 0..384 {
            assert_eq!(&rebuilt.pixel(x, y)[..3], img.pixel(x, y));
        }
    }
}

#[test]
fn shuffle_is_seeded_and_invertible() {
    let grid = GridSpec::standard(3).unwrap();
    let img = textured(384);
    let ordered = make_puzzle(&img, grid, &mut SquareMasks, &mut rng_from_seed(0), "p", "s").unwrap();
    let a = shuffle(&ordered, &mut rng_from_seed(99));
    let b = shuffle(&ordered, &mut rng_from_seed(99));
    assert_eq!(a, b);
    assert_eq!(
        assemble(&a, &a.ground_truth).unwrap(),
        assemble(&ordered, &Permutation::identity(9)).unwrap()
    );
}

#[test]
fn shuffle_is_uniform_over_three_pieces() {
    let piece = Piece {
        image: RasterImage::from_rgba8(2, 2, &[0; 16]).unwrap(),
        mask: BinaryMask::full(2),
    };
    let instance = PuzzleInstance {
        puzzle_id: "tiny".into(),
        grid: GridSpec::new(1, 2, 2).unwrap(),
        pieces: vec![piece; 3],
        ground_truth: Permutation::identity(3),
        source: "s".into(),
        split: Split::Train,
    };
    let mut rng = rng_from_seed(2025);
    let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
    let draws = 100_000;
    for _ in 0..draws {
        *counts
            .entry(shuffle(&instance, &mut rng).ground_truth.as_slice().to_vec())
            .or_default() += 1;
    }
    // all 3! orders, each with frequency 1/6
    assert_eq!(counts.len(), 6);
    for (order, c) in counts {
        let f = c as f64 / draws as f64;
        assert!((f - 1.0 / 6.0).abs() < 0.01, "{order:?}: {f}");
    }
}

#[test]
fn split_counts_and_set_algebra() {
    let ids: Vec<String> = (0..20).map(|i| format!("id{i}")).collect();
    let s = split_dataset(&ids, (0.7, 0.15, 0.15), &mut rng_from_seed(1)).unwrap();
    let count = |x: Split| s.iter().filter(|&&v| v == x).count();
    assert_eq!((count(Split::Train), count(Split::Val), count(Split::Test)), (14, 3, 3));
    assert_eq!(
        s,
        split_dataset(&ids, (0.7, 0.15, 0.15), &mut rng_from_seed(1)).unwrap()
    );

    let mut rng = rng_from_seed(5);
    let ids: Vec<String> = (0..10_000).map(|i| format!("obj-{}", i * 7919 % 100_003)).collect();
    let s = split_dataset(&ids, (0.8, 0.1, 0.1), &mut rng).unwrap();
    let groups: Vec<HashSet<&String>> = [Split::Train, Split::Val, Split::Test]
        .iter()
        .map(|&g| ids.iter().zip(&s).filter(|(_, &x)| x == g).map(|(id, _)| id).collect())
        .collect();
    let union: HashSet<&String> = groups.iter().flatten().copied().collect();
    assert_eq!(union, ids.iter().collect());
    for a in 0..3 {
        for b in a + 1..3 {
            assert!(groups[a].is_disjoint(&groups[b]));
        }
    }
    assert!(split_dataset(&ids, (0.5, 0.2, 0.2), &mut rng).is_err());
}

#[test]
fn manifest_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let grid = GridSpec::standard(3).unwrap();
    let mut p = generate_puzzle(
        &textured(384),
        grid,
        &mut ProceduralMasks::default(),
        4,
        "rt-1",
        "met:1",
    )
    .unwrap();
    p.split = Split::Test;
    let path = write_manifest(&p, dir.path()).unwrap();
    assert!(path.ends_with("test/rt-1/manifest.json"));
    let back = read_manifest(&path).unwrap();
    assert_eq!(back, p);
    assert_eq!(find_manifests(dir.path()).unwrap(), vec![path]);
}

#[test]
fn manifest_validation() {
    let grid = GridSpec::standard(2).unwrap();
    let p = generate_puzzle(&textured(256), grid, &mut SquareMasks, 4, "v", "s").unwrap();
    let mut m = manifest_of(&p);
    m.pieces.pop();
    assert!(matches!(m.validate(), Err(Error::Manifest(_))));
    let json = serde_json::to_string(&m).unwrap();
    assert!(Manifest::parse(&json).is_err());

    let mut m = manifest_of(&p);
    m.schema_version = 7;
    let json = serde_json::to_string(&m).unwrap();
    assert!(matches!(
        Manifest::parse(&json),
        Err(Error::SchemaVersion { found: 7, .. })
    ));
}

#[test]
fn golden_manifest_fixture() {
    let text = include_str!("fixtures/manifest_2x2.json");
    let m = Manifest::parse(text).unwrap();
    assert_eq!(m.puzzle_id, "fixture-001");
    assert_eq!((m.k, m.canvas), (2, 256));
    assert_eq!(m.split, Split::Val);
    assert_eq!(m.source, "met:12345");
    assert_eq!(m.pieces[2].file, "piece_02.png");
    assert_eq!(m.ground_truth().as_slice(), &[2, 0, 3, 1]);
}
