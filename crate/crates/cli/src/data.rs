//! Corpus, mask, dataset and shape-statistics subcommands.

use std::path::Path;
use std::time::Duration;

use gap_core::maskforge::{
    component_count, fill_holes, postprocess, sample_procedural_mask, BinaryMask, ProceduralMaskParams,
};
use gap_core::puzzlegen::{
    generate_puzzle, gradient_image, split_dataset, write_manifest, GridSpec, ImportedMasks, MaskSource,
    ProceduralMasks, Split, SquareMasks,
};
use gap_core::raster::{resize_bilinear, RasterImage, SampleRange};
use gap_core::seed::derived_rng;
use gap_core::shapestats::{compare_distributions, extract_features, features_csv, scatter_svg, ShapeFeatures};
use gap_ingest::{collect, Backoff, CollectConfig, MetClient, DEFAULT_BASE_URL};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::args::{FeaturesArgs, FetchArgs, GenerateArgs, MaskKind, MasksArgs, StatsCompareArgs};
use crate::error::{CliError, Result};
use crate::files::{ensure_dir, find_files, relative_name, write_json, write_text};
use crate::BASE_URL_ENV;

const IMAGE_EXTS: [&str; 3] = ["png", "jpg", "jpeg"];

pub fn require_seed(seed: Option<u64>, what: &str) -> Result<u64> {
    seed.ok_or_else(|| CliError::Usage(format!("{what} is stochastic and needs --seed")))
}

fn print_summary(value: &serde_json::Value) {
    println!("{value}");
}

pub fn fetch(a: &FetchArgs, workers: Option<usize>) -> Result<()> {
    let base = std::env::var(BASE_URL_ENV).unwrap_or_else(|_| DEFAULT_BASE_URL.to_string());
    let client = MetClient::new(base, Duration::from_secs(a.timeout_secs));
    let ids = match &a.ids {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(|l| {
                    l.parse::<u64>()
                        .map_err(|e| CliError::Data(format!("{}: bad id `{l}`: {e}", path.display())))
                })
                .collect::<Result<Vec<_>>>()?
        }
        None => client.fetch_object_ids()?,
    };
    let config = CollectConfig {
        n_target: a.n,
        workers: a.fetch_workers.or(workers).unwrap_or(20),
        backoff: Backoff {
            base: Duration::from_millis(a.backoff_ms),
            max_tries: a.retries,
        },
    };
    log::info!("{} candidate ids", ids.len());
    let corpus = collect(&client, &ids, &config, &a.out)?;
    print_summary(&json!({
        "stored": corpus.entries.len(),
        "checked": corpus.checked,
        "rejected": corpus.rejected,
        "failed": corpus.failed,
    }));
    Ok(())
}

/// Single-channel version of an arbitrary mask image: alpha for RGBA,
/// channel mean for RGB.
fn mask_gray(img: &RasterImage) -> Result<RasterImage> {
    let unit = img.with_range(SampleRange::Unit);
    let c = unit.channels();
    let samples: Vec<f32> = match c {
        1 => return Ok(unit),
        3 => unit
            .samples()
            .chunks_exact(3)
            .map(|p| (p[0] + p[1] + p[2]) / 3.0)
            .collect(),
        4 => unit.samples().chunks_exact(4).map(|p| p[3]).collect(),
        _ => unit.samples().chunks_exact(c).map(|p| p[0]).collect(),
    };
    Ok(RasterImage::new(
        unit.width(),
        unit.height(),
        1,
        SampleRange::Unit,
        samples,
    )?)
}

fn is_clean(mask: &BinaryMask) -> bool {
    component_count(mask) == 1 && fill_holes(mask) == *mask
}

#[derive(Serialize)]
struct MaskSummary {
    count: usize,
    side: usize,
    mean_area: f64,
    rejected: Vec<String>,
}

pub fn masks(a: &MasksArgs) -> Result<()> {
    ensure_dir(&a.out)?;
    let (written, rejected): (Vec<BinaryMask>, Vec<String>) = match &a.import {
        None => {
            let seed = require_seed(a.seed, "mask sampling")?;
            let params = ProceduralMaskParams::default();
            let masks: Vec<BinaryMask> = (0..a.n)
                .into_par_iter()
                .map(|i| sample_procedural_mask(&mut derived_rng(seed, &format!("mask/{i}")), a.side, &params))
                .collect::<gap_core::Result<_>>()?;
            for (i, m) in masks.iter().enumerate() {
                m.write_png(a.out.join(format!("mask_{i:05}.png")))?;
            }
            (masks, Vec::new())
        }
        Some(dir) => {
            let files = find_files(dir, &IMAGE_EXTS)?;
            let results: Vec<(String, Option<BinaryMask>)> = files
                .par_iter()
                .map(|path| {
                    let name = relative_name(dir, path);
                    let img = RasterImage::read(path)?;
                    let gray = resize_bilinear(&mask_gray(&img)?, a.side, a.side)?;
                    let mask = postprocess(&gray).ok().filter(is_clean);
                    Ok((name, mask))
                })
                .collect::<Result<_>>()?;
            let mut kept = Vec::new();
            let mut rejected = Vec::new();
            for (name, mask) in results {
                match mask {
                    Some(m) => {
                        m.write_png(a.out.join(format!("mask_{:05}.png", kept.len())))?;
                        kept.push(m);
                    }
                    None => rejected.push(name),
                }
            }
            if kept.is_empty() {
                return Err(CliError::Data(format!(
                    "no usable masks among {} files",
                    rejected.len()
                )));
            }
            (kept, rejected)
        }
    };
    let summary = MaskSummary {
        count: written.len(),
        side: a.side,
        mean_area: written.iter().map(|m| m.area() as f64).sum::<f64>() / written.len().max(1) as f64,
        rejected,
    };
    write_json(&a.out.join("masks.json"), &summary)?;
    print_summary(&json!({"count": summary.count, "rejected": summary.rejected.len()}));
    Ok(())
}

fn load_masks(dir: &Path) -> Result<Vec<BinaryMask>> {
    find_files(dir, &["png"])?
        .iter()
        .map(|p| BinaryMask::read_png(p).map_err(CliError::from))
        .collect()
}

#[derive(Clone)]
enum Masks {
    Procedural(ProceduralMasks),
    Square(SquareMasks),
    Imported(ImportedMasks),
}

impl Masks {
    fn source(&mut self) -> &mut dyn MaskSource {
        match self {
            Masks::Procedural(m) => m,
            Masks::Square(m) => m,
            Masks::Imported(m) => m,
        }
    }
}

#[derive(Serialize)]
struct DatasetInfo {
    seed: u64,
    k: usize,
    canvas: usize,
    n: usize,
    masks: String,
    source: String,
    train: usize,
    val: usize,
    test: usize,
}

pub fn generate(a: &GenerateArgs) -> Result<()> {
    let seed = require_seed(a.seed, "dataset generation")?;
    if a.n == 0 {
        return Err(CliError::Usage("--n must be >= 1".into()));
    }
    let grid = match a.canvas {
        Some(c) => GridSpec::new(a.k, c, gap_core::maskforge::DEFAULT_MASK_SIDE)?,
        None => GridSpec::standard(a.k)?,
    };
    let ratios = match a.splits[..] {
        [tr, va, te] => (tr, va, te),
        _ => return Err(CliError::Usage("--splits takes three fractions".into())),
    };
    let masks = match (&a.mask_dir, a.masks) {
        (Some(dir), _) => Masks::Imported(ImportedMasks::new(load_masks(dir)?)?),
        (None, MaskKind::Procedural) => Masks::Procedural(ProceduralMasks::default()),
        (None, MaskKind::Square) => Masks::Square(SquareMasks),
    };
    let images = match &a.images {
        Some(dir) => {
            let files = find_files(dir, &IMAGE_EXTS)?;
            if files.is_empty() {
                return Err(CliError::Data(format!("no images under {}", dir.display())));
            }
            Some((dir.clone(), files))
        }
        None => None,
    };

    let ids: Vec<String> = (0..a.n).map(|i| format!("p{i:05}")).collect();
    let sources: Vec<String> = match &images {
        Some((dir, files)) => (0..a.n)
            .map(|i| format!("file:{}", relative_name(dir, &files[i % files.len()])))
            .collect(),
        None => vec!["synthetic".to_string(); a.n],
    };
    // puzzles cut from the same image must share a split
    let group_keys: Vec<String> = match &images {
        Some(_) => sources.clone(),
        None => ids.clone(),
    };
    let splits = split_dataset(&group_keys, ratios, &mut derived_rng(seed, "splits"))?;

    ensure_dir(&a.out)?;
    log::info!(
        "generating {} puzzles ({}x{}, canvas {})",
        a.n,
        grid.k,
        grid.k,
        grid.canvas
    );
    (0..a.n).into_par_iter().try_for_each(|i| -> Result<()> {
        let image = match &images {
            Some((_, files)) => RasterImage::read(&files[i % files.len()])?,
            None => gradient_image(&mut derived_rng(seed, &format!("image/{}", ids[i])), grid.canvas),
        };
        let mut m = masks.clone();
        let mut puzzle = generate_puzzle(&image, grid, m.source(), seed, &ids[i], &sources[i])?;
        puzzle.split = splits[i];
        write_manifest(&puzzle, &a.out)?;
        Ok(())
    })?;

    let count = |s: Split| splits.iter().filter(|&&x| x == s).count();
    let info = DatasetInfo {
        seed,
        k: grid.k,
        canvas: grid.canvas,
        n: a.n,
        masks: match (&a.mask_dir, a.masks) {
            (Some(_), _) => "imported".into(),
            (None, MaskKind::Procedural) => "procedural".into(),
            (None, MaskKind::Square) => "square".into(),
        },
        source: if images.is_some() {
            "images".into()
        } else {
            "synthetic".into()
        },
        train: count(Split::Train),
        val: count(Split::Val),
        test: count(Split::Test),
    };
    write_json(&a.out.join("dataset.json"), &info)?;
    print_summary(&serde_json::to_value(&info).map_err(|e| CliError::Data(e.to_string()))?);
    Ok(())
}

fn features_of(dir: &Path) -> Result<(Vec<String>, Vec<ShapeFeatures>)> {
    let files = find_files(dir, &["png"])?;
    if files.is_empty() {
        return Err(CliError::Data(format!("no PNG masks under {}", dir.display())));
    }
    let feats: Vec<ShapeFeatures> = files
        .par_iter()
        .map(|p| {
            let mask = BinaryMask::read_png(p)?;
            extract_features(&mask).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
        })
        .collect::<Result<_>>()?;
    Ok((files.iter().map(|p| relative_name(dir, p)).collect(), feats))
}

pub fn features(a: &FeaturesArgs) -> Result<()> {
    let (ids, feats) = features_of(&a.input)?;
    write_text(&a.out, &features_csv(&ids, &feats)?)?;
    print_summary(&json!({"fragments": ids.len()}));
    Ok(())
}

pub fn stats_compare(a: &StatsCompareArgs) -> Result<()> {
    let (_, real) = features_of(&a.real)?;
    let (_, synth) = features_of(&a.synthetic)?;
    let report = compare_distributions(&real, &synth)?;
    ensure_dir(&a.out)?;
    write_json(&a.out.join("comparison.json"), &report)?;
    write_text(&a.out.join("comparison.svg"), &scatter_svg(&report))?;
    print_summary(&json!({
        "real": real.len(),
        "synthetic": synth.len(),
        "centroid_gap": report.centroid_gap,
    }));
    Ok(())
}
