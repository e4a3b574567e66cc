//! Puzzle-level metrics: perfect accuracy, absolute accuracy and spatial
//! relationship accuracy, plus batch reports.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::puzzlegen::Permutation;

fn check_pairs(preds: &[Permutation], gts: &[Permutation]) -> Result<()> {
    if preds.len() != gts.len() {
        return Err(Error::LengthMismatch(format!(
            "{} predictions for {} ground truths",
            preds.len(),
            gts.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    for (i, (p, g)) in preds.iter().zip(gts).enumerate() {
        if p.len() != g.len() {
            return Err(Error::LengthMismatch(format!(
                "puzzle {i}: prediction has {} pieces, ground truth {}",
                p.len(),
                g.len()
            )));
        }
    }
    Ok(())
}

fn piece_accuracy(pred: &Permutation, gt: &Permutation) -> f64 {
    let hits = pred
        .as_slice()
        .iter()
        .zip(gt.as_slice())
        .filter(|(a, b)| a == b)
        .count();
    hits as f64 / gt.len() as f64
}

/// Percentage of puzzles solved exactly.
pub fn perfect_accuracy(preds: &[Permutation], gts: &[Permutation]) -> Result<f64> {
    check_pairs(preds, gts)?;
    let exact = preds.iter().zip(gts).filter(|(p, g)| p == g).count();
    Ok(100.0 * exact as f64 / preds.len() as f64)
}

/// Mean over puzzles of the percentage of pieces in their true position.
pub fn absolute_accuracy(preds: &[Permutation], gts: &[Permutation]) -> Result<f64> {
    check_pairs(preds, gts)?;
    let total: f64 = preds.iter().zip(gts).map(|(p, g)| piece_accuracy(p, g)).sum();
    Ok(100.0 * total / preds.len() as f64)
}

pub fn grid_side(n: usize) -> Result<usize> {
    let k = (n as f64).sqrt().round() as usize;
    if k * k != n || n == 0 {
        return Err(Error::Shape(format!("{n} pieces do not form a square grid")));
    }
    Ok(k)
}

/// Fraction of ground-truth neighbor pairs (right and down, each counted
/// once) that the prediction places in the same relation.
pub fn sra(pred: &Permutation, gt: &Permutation) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch(format!(
            "prediction has {} pieces, ground truth {}",
            pred.len(),
            gt.len()
        )));
    }
    let k = grid_side(gt.len())?;
    if k == 1 {
        return Ok(1.0);
    }
    let at = gt.inverse();
    let pred = pred.as_slice();
    let mut preserved = 0usize;
    for u in 0..k * k {
        let (row, col) = (u / k, u % k);
        let a = pred[at.position(u)];
        if col + 1 < k {
            let b = pred[at.position(u + 1)];
            if a % k + 1 < k && b == a + 1 {
                preserved += 1;
            }
        }
        if row + 1 < k {
            let b = pred[at.position(u + k)];
            if b == a + k {
                preserved += 1;
            }
        }
    }
    Ok(preserved as f64 / (2 * k * (k - 1)) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PuzzleMetrics {
    pub puzzle_id: String,
    pub solved: bool,
    /// Percent of pieces placed correctly.
    pub aa: f64,
    /// Fraction of neighbor relations preserved.
    pub sra: f64,
}

/// PA and AA in percent; SRA as a fraction in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_puzzles: usize,
    pub pa: f64,
    pub aa: f64,
    pub sra: f64,
    pub rows: Vec<PuzzleMetrics>,
}

/// A prediction to score.
#[derive(Debug, Clone)]
pub struct Scored {
    pub puzzle_id: String,
    pub prediction: Permutation,
    pub ground_truth: Permutation,
}

pub fn evaluate(items: &[Scored]) -> Result<MetricsReport> {
    if items.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    let rows: Vec<PuzzleMetrics> = items
        .par_iter()
        .map(|s| {
            if s.prediction.len() != s.ground_truth.len() {
                return Err(Error::LengthMismatch(format!(
                    "{}: prediction has {} pieces, ground truth {}",
                    s.puzzle_id,
                    s.prediction.len(),
                    s.ground_truth.len()
                )));
            }
            Ok(PuzzleMetrics {
                puzzle_id: s.puzzle_id.clone(),
                solved: s.prediction == s.ground_truth,
                aa: 100.0 * piece_accuracy(&s.prediction, &s.ground_truth),
                sra: sra(&s.prediction, &s.ground_truth)?,
            })
        })
        .collect::<Result<_>>()?;
    let n = rows.len() as f64;
    Ok(MetricsReport {
        n_puzzles: rows.len(),
        pa: 100.0 * rows.iter().filter(|r| r.solved).count() as f64 / n,
        aa: rows.iter().map(|r| r.aa).sum::<f64>() / n,
        sra: rows.iter().map(|r| r.sra).sum::<f64>() / n,
        rows,
    })
}

impl MetricsReport {
    /// Per-puzzle rows followed by a `mean` row.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::Encode(e.to_string());
        w.write_record(["puzzle_id", "solved", "aa", "sra"]).map_err(err)?;
        for r in &self.rows {
            w.write_record([
                r.puzzle_id.clone(),
                u8::from(r.solved).to_string(),
                format!("{}", r.aa),
                format!("{}", r.sra),
            ])
            .map_err(err)?;
        }
        w.write_record([
            "mean".to_string(),
            format!("{}", self.pa / 100.0),
            format!("{}", self.aa),
            format!("{}", self.sra),
        ])
        .map_err(err)?;
        let bytes = w.into_inner().map_err(|e| Error::Encode(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Grouped bars of PA, AA and SRA (as percent) for each labelled report.
pub fn bar_chart_svg(reports: &[(String, MetricsReport)]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 360.0;
    const PAD: f64 = 40.0;
    let colors = ["#4c72b0", "#dd8452", "#55a868"];
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    let groups = reports.len().max(1) as f64;
    let group_w = (W - 2.0 * PAD) / groups;
    let bar_w = group_w / 4.0;
    for (g, (label, r)) in reports.iter().enumerate() {
        let x0 = PAD + g as f64 * group_w;
        for (b, v) in [r.pa, r.aa, 100.0 * r.sra].iter().enumerate() {
            let h = (H - 2.0 * PAD) * v / 100.0;
            svg.push_str(&format!(
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"/>\n",
                x0 + (b as f64 + 0.5) * bar_w,
                H - PAD - h,
                bar_w * 0.9,
                h,
                colors[b]
            ));
        }
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
            x0 + group_w / 2.0,
            H - PAD / 2.0,
            escape(label)
        ));
    }
    for (b, name) in ["PA", "AA", "SRA"].iter().enumerate() {
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"20\" font-size=\"12\" fill=\"{}\">{name}</text>\n",
            PAD + b as f64 * 50.0,
            colors[b]
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
