//! Solving, training, evaluation and rendering subcommands.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use gap_core::compat::{cache_path, CompatibilityTable};
use gap_core::eval::{bar_chart_svg, evaluate, MetricsReport, Scored};
use gap_core::puzzlegen::{assemble, find_manifests, read_manifest, Permutation, PuzzleInstance};
use gap_core::raster::{RasterImage, SampleRange};
use gap_core::seed::{derive_seed, rng_from_seed};
use gap_core::solve::flow::flow_solve;
use gap_core::solve::genetic::ga_solve;
use gap_core::solve::greedy::greedy_solve;
use gap_core::solve::random_solve;
use gap_core::solve::scorers::{
    train_linear_scorer, LinearScorer, LinearScorerParams, NeighborCompatScorer, OracleScorer, Scorer, TrainOutcome,
    TrainingPuzzle,
};
use gap_core::solve::{FlowConfig, GaConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::args::{EvalArgs, RenderArgs, ScorerKind, SolveArgs, SolverKind, TrainArgs};
use crate::data::require_seed;
use crate::error::{CliError, Result};
use crate::files::{ensure_dir, find_files, read_json, write_json, write_text};

/// One solver output, as written to `<out>/solutions/<puzzle_id>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub puzzle_id: String,
    pub solver: String,
    pub scorer: Option<String>,
    pub seed: Option<u64>,
    /// Entry `i` is the grid position of piece `i`.
    pub permutation: Vec<usize>,
    /// Only recorded with `--timing`.
    pub wall_ms: Option<f64>,
    pub diagnostics: Value,
}

/// Puzzles under `root`, optionally restricted to one split, sorted by id.
pub fn load_puzzles(root: &Path, split: Option<&str>) -> Result<Vec<PuzzleInstance>> {
    let manifests = find_manifests(root)?;
    let mut puzzles: Vec<PuzzleInstance> = manifests
        .par_iter()
        .map(|p| read_manifest(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display()))))
        .collect::<Result<_>>()?;
    if let Some(s) = split {
        puzzles.retain(|p| p.split.as_str() == s);
    }
    if puzzles.is_empty() {
        return Err(CliError::Data(format!(
            "no puzzles under {}{}",
            root.display(),
            split.map(|s| format!(" in split `{s}`")).unwrap_or_default()
        )));
    }
    puzzles.sort_by(|a, b| a.puzzle_id.cmp(&b.puzzle_id));
    Ok(puzzles)
}

fn table_for(p: &PuzzleInstance, cache: Option<&Path>) -> Result<CompatibilityTable> {
    let Some(dir) = cache else {
        return Ok(CompatibilityTable::from_pieces(&p.pieces)?);
    };
    let path = cache_path(dir, &p.puzzle_id);
    if let Ok(t) = CompatibilityTable::read_cache(&path, p.pieces.len()) {
        return Ok(t);
    }
    let t = CompatibilityTable::from_pieces(&p.pieces)?;
    t.write_cache(&path)?;
    Ok(t)
}

fn load_params(path: &Path) -> Result<LinearScorerParams> {
    let value: Value = read_json(path)?;
    let params = if value.get("params").is_some() {
        serde_json::from_value::<TrainOutcome>(value).map(|o| o.params)
    } else {
        serde_json::from_value::<LinearScorerParams>(value)
    }
    .map_err(CliError::json(path))?;
    params.validate()?;
    Ok(params)
}

struct SolveSetup {
    solver: SolverKind,
    scorer: ScorerKind,
    seed: Option<u64>,
    flow: FlowConfig,
    ga: GaConfig,
    params: Option<LinearScorerParams>,
}

fn solve_one(s: &SolveSetup, p: &PuzzleInstance, table: &CompatibilityTable) -> Result<(Permutation, Value)> {
    let k = p.grid.k;
    let n = p.pieces.len();
    // greedy never draws from it, so the fallback seed is never observable
    let mut rng = rng_from_seed(derive_seed(s.seed.unwrap_or(0), &format!("solve/{}", p.puzzle_id)));
    Ok(match s.solver {
        SolverKind::Greedy => {
            let out = greedy_solve(table, k);
            (out.permutation, json!({"bbm": out.bbm, "refinements": out.refinements}))
        }
        SolverKind::Ga => {
            let out = ga_solve(table, k, &s.ga, &mut rng)?;
            (
                out.permutation,
                json!({"best_fitness": out.best_fitness, "generations": out.generations}),
            )
        }
        SolverKind::Random => (random_solve(n, &mut rng), json!({})),
        SolverKind::Flow => {
            let scorer: Box<dyn Scorer + '_> = match s.scorer {
                ScorerKind::Oracle => Box::new(OracleScorer::new(p.ground_truth.clone())),
                ScorerKind::Neighbor => Box::new(NeighborCompatScorer::new(table, k)),
                ScorerKind::Linear => Box::new(LinearScorer::new(
                    s.params.clone().expect("linear scorer has parameters"),
                    table,
                    k,
                )?),
            };
            let out = flow_solve(scorer.as_ref(), &s.flow, &mut rng)?;
            (out.permutation, json!({"steps": out.steps}))
        }
    })
}

fn write_report(dir: &Path, stem: &str, label: &str, report: &MetricsReport) -> Result<()> {
    write_json(&dir.join(format!("{stem}.json")), report)?;
    write_text(&dir.join(format!("{stem}.csv")), &report.to_csv()?)?;
    write_text(
        &dir.join(format!("{stem}.svg")),
        &bar_chart_svg(&[(label.to_string(), report.clone())]),
    )
}

fn print_report(report: &MetricsReport) {
    println!(
        "{}",
        json!({"n_puzzles": report.n_puzzles, "pa": report.pa, "aa": report.aa, "sra": report.sra})
    );
}

pub fn solve(a: &SolveArgs) -> Result<()> {
    let stochastic = a.solver != SolverKind::Greedy;
    let seed = if stochastic {
        Some(require_seed(a.seed, a.solver.name())?)
    } else {
        a.seed
    };
    let flow = FlowConfig { steps: a.steps };
    flow.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let ga = match &a.ga_config {
        Some(path) => read_json::<GaConfig>(path)?,
        None => GaConfig::default(),
    };
    ga.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let params = match (a.solver, a.scorer, &a.params) {
        (SolverKind::Flow, ScorerKind::Linear, Some(path)) => Some(load_params(path)?),
        (SolverKind::Flow, ScorerKind::Linear, None) => {
            return Err(CliError::Usage("--scorer linear needs --params".into()))
        }
        _ => None,
    };
    let setup = SolveSetup {
        solver: a.solver,
        scorer: a.scorer,
        seed,
        flow,
        ga,
        params,
    };
    if let Some(dir) = &a.cache {
        ensure_dir(dir)?;
    }

    let puzzles = load_puzzles(&a.dataset, a.split.as_deref())?;
    log::info!("solving {} puzzles with {}", puzzles.len(), a.solver.name());
    let solutions: Vec<Solution> = puzzles
        .par_iter()
        .map(|p| {
            let table = table_for(p, a.cache.as_deref())?;
            let start = Instant::now();
            let (perm, diagnostics) = solve_one(&setup, p, &table)?;
            let wall_ms = a.timing.then(|| start.elapsed().as_secs_f64() * 1000.0);
            Ok(Solution {
                puzzle_id: p.puzzle_id.clone(),
                solver: a.solver.name().into(),
                scorer: (a.solver == SolverKind::Flow).then(|| a.scorer.name().into()),
                seed,
                permutation: perm.into(),
                wall_ms,
                diagnostics,
            })
        })
        .collect::<Result<_>>()?;

    let sol_dir = a.out.join("solutions");
    ensure_dir(&sol_dir)?;
    for s in &solutions {
        write_json(&sol_dir.join(format!("{}.json", s.puzzle_id)), s)?;
    }
    let items: Vec<Scored> = solutions
        .iter()
        .zip(&puzzles)
        .map(|(s, p)| {
            Ok(Scored {
                puzzle_id: s.puzzle_id.clone(),
                prediction: Permutation::new(s.permutation.clone())?,
                ground_truth: p.ground_truth.clone(),
            })
        })
        .collect::<Result<_>>()?;
    let report = evaluate(&items)?;
    let label = match a.solver {
        SolverKind::Flow => format!("flow/{}", a.scorer.name()),
        other => other.name().to_string(),
    };
    write_report(&a.out, "report", &label, &report)?;
    print_report(&report);
    Ok(())
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let seed = require_seed(a.seed, "training")?;
    let puzzles = load_puzzles(&a.dataset, Some(&a.split))?;
    let set: Vec<TrainingPuzzle> = puzzles
        .par_iter()
        .map(|p| {
            Ok(TrainingPuzzle {
                table: CompatibilityTable::from_pieces(&p.pieces)?,
                k: p.grid.k,
                target: p.ground_truth.clone(),
            })
        })
        .collect::<Result<_>>()?;
    log::info!("training on {} puzzles for {} epochs", set.len(), a.epochs);
    let outcome = train_linear_scorer(&set, a.epochs, a.lr, &mut rng_from_seed(seed))?;
    write_json(&a.out, &outcome)?;
    println!(
        "{}",
        json!({"puzzles": set.len(), "epochs": a.epochs, "final_loss": outcome.final_loss, "weights": outcome.params.weights})
    );
    Ok(())
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let truths: BTreeMap<String, Permutation> = load_puzzles(&a.dataset, None)?
        .into_iter()
        .map(|p| (p.puzzle_id, p.ground_truth))
        .collect();
    let files = find_files(&a.solutions, &["json"])?;
    if files.is_empty() {
        return Err(CliError::Data(format!(
            "no solution files under {}",
            a.solutions.display()
        )));
    }
    let mut items = Vec::with_capacity(files.len());
    let mut label = None;
    for f in &files {
        let s: Solution = read_json(f)?;
        let gt = truths
            .get(&s.puzzle_id)
            .ok_or_else(|| CliError::Data(format!("{}: unknown puzzle `{}`", f.display(), s.puzzle_id)))?;
        label.get_or_insert_with(|| match &s.scorer {
            Some(sc) => format!("{}/{sc}", s.solver),
            None => s.solver.clone(),
        });
        items.push(Scored {
            puzzle_id: s.puzzle_id,
            prediction: Permutation::new(s.permutation).map_err(|e| CliError::Data(format!("{}: {e}", f.display())))?,
            ground_truth: gt.clone(),
        });
    }
    items.sort_by(|x, y| x.puzzle_id.cmp(&y.puzzle_id));
    let report = evaluate(&items)?;
    ensure_dir(&a.out)?;
    let label = a.label.clone().or(label).unwrap_or_default();
    write_report(&a.out, "metrics", &label, &report)?;
    print_report(&report);
    Ok(())
}

/// Pastes RGBA `src` onto `dst` at `(ox, oy)` wherever it is opaque.
fn paste(dst: &mut RasterImage, src: &RasterImage, ox: usize, oy: usize) {
    for y in 0..src.height() {
        for x in 0..src.width() {
            let p = src.pixel(x, y);
            if p[3] > 0.0 {
                dst.pixel_mut(ox + x, oy + y).copy_from_slice(p);
            }
        }
    }
}

pub fn render(a: &RenderArgs) -> Result<()> {
    const GAP: usize = 16;
    let puzzle = read_manifest(&a.manifest)?;
    let layout = match &a.solution {
        Some(path) => {
            let s: Solution = read_json(path)?;
            if s.puzzle_id != puzzle.puzzle_id {
                return Err(CliError::Data(format!(
                    "solution is for `{}`, manifest is `{}`",
                    s.puzzle_id, puzzle.puzzle_id
                )));
            }
            Permutation::new(s.permutation)?
        }
        None => puzzle.ground_truth.clone(),
    };
    // scrambled view: pieces in stored order, row-major
    let scrambled = assemble(&puzzle, &Permutation::identity(puzzle.pieces.len()))?;
    let solved = assemble(&puzzle, &layout)?;
    let c = puzzle.grid.canvas;
    let mut out = RasterImage::filled(2 * c + GAP, c, SampleRange::Byte, &[255.0; 4])?;
    paste(&mut out, &scrambled, 0, 0);
    paste(&mut out, &solved, c + GAP, 0);
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    out.write_png(&a.out)?;
    Ok(())
}
