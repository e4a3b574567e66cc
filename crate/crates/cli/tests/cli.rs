use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::thread;

use gap_cli::solving::Solution;
use gap_core::puzzlegen::{find_manifests, read_manifest};
use serde_json::{json, Value};
use tempfile::TempDir;

fn gap(args: &[&str]) -> Output {
    gap_env(args, &[])
}

fn gap_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_gap"));
    cmd.args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn ok(args: &[&str]) -> Value {
    let out = gap(args);
    assert!(
        out.status.success(),
        "gap {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("summary is JSON")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Every file under `root`, keyed by relative path.
fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    files
}

fn generate(dir: &Path, n: usize, seed: u64, extra: &[&str]) -> Value {
    let n = n.to_string();
    let seed = seed.to_string();
    let mut args = vec!["generate", "--out", p(dir), "--n", &n, "--k", "3", "--seed", &seed];
    args.extend_from_slice(extra);
    ok(&args)
}

#[test]
fn generate_is_byte_identical_across_runs_and_thread_counts() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    generate(&a, 10, 7, &[]);
    ok(&[
        "--workers",
        "1",
        "generate",
        "--out",
        p(&b),
        "--n",
        "10",
        "--k",
        "3",
        "--seed",
        "7",
    ]);
    let sa = snapshot(&a);
    assert_eq!(sa.keys().filter(|k| k.ends_with("manifest.json")).count(), 10);
    assert_eq!(sa, snapshot(&b));

    let c = tmp.path().join("c");
    generate(&c, 10, 8, &[]);
    assert_ne!(sa, snapshot(&c));
}

#[test]
fn eval_of_ground_truth_is_perfect() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    generate(&data, 6, 3, &["--masks", "square"]);
    let sols = tmp.path().join("sols");
    fs::create_dir_all(&sols).unwrap();
    for m in find_manifests(&data).unwrap() {
        let puzzle = read_manifest(&m).unwrap();
        let s = Solution {
            puzzle_id: puzzle.puzzle_id.clone(),
            solver: "truth".into(),
            scorer: None,
            seed: None,
            permutation: puzzle.ground_truth.clone().into(),
            wall_ms: None,
            diagnostics: json!({}),
        };
        fs::write(
            sols.join(format!("{}.json", s.puzzle_id)),
            serde_json::to_string(&s).unwrap(),
        )
        .unwrap();
    }
    let out = tmp.path().join("metrics");
    let summary = ok(&["eval", "--dataset", p(&data), "--solutions", p(&sols), "--out", p(&out)]);
    assert_eq!(summary["n_puzzles"], 6);
    assert_eq!(summary["pa"], 100.0);
    assert_eq!(summary["aa"], 100.0);
    assert_eq!(summary["sra"], 1.0);
    for f in ["metrics.json", "metrics.csv", "metrics.svg"] {
        assert!(out.join(f).is_file(), "{f}");
    }
}

#[test]
fn flow_with_oracle_scorer_solves_every_puzzle() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    generate(&data, 100, 11, &[]);
    let out = tmp.path().join("flow");
    let summary = ok(&[
        "solve",
        "--dataset",
        p(&data),
        "--solver",
        "flow",
        "--scorer",
        "oracle",
        "--seed",
        "1",
        "--out",
        p(&out),
    ]);
    assert_eq!(summary["n_puzzles"], 100);
    assert_eq!(summary["pa"], 100.0);
    assert_eq!(fs::read_dir(out.join("solutions")).unwrap().count(), 100);
}

#[test]
fn every_solver_is_deterministic_given_a_seed() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    generate(&data, 8, 5, &[]);
    let params = tmp.path().join("params.json");
    ok(&[
        "train-scorer",
        "--dataset",
        p(&data),
        "--epochs",
        "2",
        "--seed",
        "3",
        "--out",
        p(&params),
    ]);
    let runs: [&[&str]; 6] = [
        &["--solver", "greedy"],
        &["--solver", "ga", "--seed", "9"],
        &["--solver", "random", "--seed", "9"],
        &["--solver", "flow", "--scorer", "oracle", "--seed", "9"],
        &["--solver", "flow", "--scorer", "neighbor", "--seed", "9"],
        &[
            "--solver",
            "flow",
            "--scorer",
            "linear",
            "--params",
            p(&params),
            "--seed",
            "9",
        ],
    ];
    for (i, extra) in runs.iter().enumerate() {
        let mut snaps = Vec::new();
        for workers in ["1", "3"] {
            let out = tmp.path().join(format!("run{i}_{workers}"));
            let mut args = vec!["--workers", workers, "solve", "--dataset", p(&data), "--out", p(&out)];
            args.extend_from_slice(extra);
            ok(&args);
            snaps.push(snapshot(&out));
        }
        assert_eq!(snaps[0], snaps[1], "{extra:?}");
    }
}

#[test]
fn cache_reuse_gives_the_same_solutions() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    generate(&data, 4, 2, &[]);
    let cache = tmp.path().join("cache");
    let mut snaps = Vec::new();
    for run in 0..3 {
        let out = tmp.path().join(format!("g{run}"));
        let mut args = vec!["solve", "--dataset", p(&data), "--solver", "greedy", "--out", p(&out)];
        if run > 0 {
            args.extend_from_slice(&["--cache", p(&cache)]);
        }
        ok(&args);
        snaps.push(snapshot(&out));
    }
    assert_eq!(fs::read_dir(&cache).unwrap().count(), 4);
    assert_eq!(snaps[0], snaps[1]);
    assert_eq!(snaps[1], snaps[2]);
}

#[test]
fn timing_is_recorded_only_on_request() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    generate(&data, 2, 2, &["--masks", "square"]);
    for (flag, expect) in [(false, false), (true, true)] {
        let out = tmp.path().join(format!("t{flag}"));
        let mut args = vec!["solve", "--dataset", p(&data), "--solver", "greedy", "--out", p(&out)];
        if flag {
            args.push("--timing");
        }
        ok(&args);
        let s: Solution =
            serde_json::from_str(&fs::read_to_string(out.join("solutions/p00000.json")).unwrap()).unwrap();
        assert_eq!(s.wall_ms.is_some(), expect);
    }
}

#[test]
fn config_file_supplies_flags_and_explicit_flags_win() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("gen.json");
    fs::write(
        &cfg,
        r#"{"n": 4, "k": 2, "seed": 7, "masks": "square", "splits": [1.0, 0.0, 0.0]}"#,
    )
    .unwrap();
    let a = tmp.path().join("a");
    let summary = ok(&["generate", "--config", p(&cfg), "--out", p(&a)]);
    assert_eq!(summary["n"], 4);
    assert_eq!(summary["k"], 2);
    assert_eq!(summary["masks"], "square");
    assert_eq!(summary["train"], 4);

    let b = tmp.path().join("b");
    let summary = ok(&[
        "generate",
        "--config",
        p(&cfg),
        "--out",
        p(&b),
        "--n",
        "2",
        "--masks",
        "procedural",
    ]);
    assert_eq!(summary["n"], 2);
    assert_eq!(summary["k"], 2);
    assert_eq!(summary["masks"], "procedural");

    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"n": {"nested": 1}}"#).unwrap();
    let out = gap(&["generate", "--config", p(&bad), "--out", p(&a)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn exit_codes_distinguish_usage_data_and_network_errors() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("x");

    assert_eq!(gap(&["--help"]).status.code(), Some(0));
    assert_eq!(gap(&["frobnicate"]).status.code(), Some(1));
    let bad_value = gap(&["solve", "--dataset", "d", "--solver", "annealing", "--out", p(&out)]);
    assert_eq!(bad_value.status.code(), Some(1));
    assert_eq!(
        gap(&["generate", "--out", p(&out)]).status.code(),
        Some(1),
        "missing seed"
    );
    assert_eq!(
        gap(&["--workers", "0", "generate", "--out", p(&out), "--seed", "1"])
            .status
            .code(),
        Some(1)
    );

    let missing = tmp.path().join("nowhere");
    let out_code = gap(&[
        "solve",
        "--dataset",
        p(&missing),
        "--solver",
        "greedy",
        "--out",
        p(&out),
    ]);
    assert_eq!(out_code.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&out_code.stderr).is_empty());

    // a port that was just released has nothing listening on it
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let base = format!("http://127.0.0.1:{port}");
    let fetch = gap_env(
        &[
            "fetch",
            "--out",
            p(&out),
            "--n",
            "1",
            "--retries",
            "1",
            "--timeout-secs",
            "2",
        ],
        &[("GAP_MET_BASE_URL", &base)],
    );
    assert_eq!(fetch.status.code(), Some(3));
}

/// Serves a tiny collection: ids 1..=4 are usable, 5 is not public domain.
fn start_collection() -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let image_base = base.clone();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let image_base = image_base.clone();
            thread::spawn(move || {
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut line = String::new();
                if reader.read_line(&mut line).is_err() {
                    return;
                }
                let path = line.split_whitespace().nth(1).unwrap_or("/").to_string();
                loop {
                    let mut h = String::new();
                    if reader.read_line(&mut h).map_or(true, |n| n == 0) || h == "\r\n" {
                        break;
                    }
                }
                let (status, body) = match path.as_str() {
                    "/objects" => (
                        200,
                        json!({"total": 5, "objectIDs": [5, 3, 1, 4, 2]})
                            .to_string()
                            .into_bytes(),
                    ),
                    p if p.starts_with("/objects/") => {
                        let id: u64 = p["/objects/".len()..].parse().unwrap_or(0);
                        if (1..=5).contains(&id) {
                            let body = json!({
                                "objectID": id,
                                "title": format!("Plate {id}"),
                                "isPublicDomain": id != 5,
                                "primaryImage": format!("{image_base}/img/{id}.png"),
                            });
                            (200, body.to_string().into_bytes())
                        } else {
                            (404, b"missing".to_vec())
                        }
                    }
                    p if p.starts_with("/img/") => (200, vec![7u8; 32]),
                    _ => (404, b"missing".to_vec()),
                };
                let head = format!(
                    "HTTP/1.1 {status} X\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
                    body.len()
                );
                let _ = stream.write_all(head.as_bytes());
                let _ = stream.write_all(&body);
            });
        }
    });
    base
}

#[test]
fn fetch_collects_from_the_configured_endpoint() {
    let base = start_collection();
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("corpus");
    let run = gap_env(
        &["fetch", "--out", p(&out), "--n", "3", "--backoff-ms", "1"],
        &[("GAP_MET_BASE_URL", &base)],
    );
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let summary: Value = serde_json::from_slice(&run.stdout).unwrap();
    assert_eq!(summary["stored"], 3);
    let mut images: Vec<String> = fs::read_dir(out.join("images"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    images.sort();
    assert_eq!(images, ["1.png", "2.png", "3.png"]);
    let csv = fs::read_to_string(out.join("metadata.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);

    // an explicit id list restricts the candidates
    let ids = tmp.path().join("ids.txt");
    fs::write(&ids, "# chosen\n5\n4\n").unwrap();
    let out2 = tmp.path().join("corpus2");
    let run = gap_env(
        &["fetch", "--out", p(&out2), "--n", "5", "--ids", p(&ids)],
        &[("GAP_MET_BASE_URL", &base)],
    );
    assert!(run.status.success());
    let summary: Value = serde_json::from_slice(&run.stdout).unwrap();
    assert_eq!(summary["stored"], 1);
    assert_eq!(summary["rejected"], 1);
}

#[test]
fn masks_features_and_stats_compare_round_trip() {
    let tmp = TempDir::new().unwrap();
    let real = tmp.path().join("real");
    let synth = tmp.path().join("synth");
    let a = ok(&["masks", "--out", p(&real), "--n", "12", "--seed", "1", "--side", "64"]);
    assert_eq!(a["count"], 12);
    ok(&["masks", "--out", p(&synth), "--n", "12", "--seed", "2", "--side", "64"]);

    // importing already clean masks keeps all of them
    let imported = tmp.path().join("imported");
    let b = ok(&["masks", "--out", p(&imported), "--import", p(&real), "--side", "64"]);
    assert_eq!(b["count"], 12);
    assert_eq!(b["rejected"], 0);

    let csv = tmp.path().join("features.csv");
    let f = ok(&["features", "--input", p(&real), "--out", p(&csv)]);
    assert_eq!(f["fragments"], 12);
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 13);

    let cmp = tmp.path().join("cmp");
    ok(&[
        "stats-compare",
        "--real",
        p(&real),
        "--synthetic",
        p(&synth),
        "--out",
        p(&cmp),
    ]);
    assert!(cmp.join("comparison.json").is_file());
    assert!(fs::read_to_string(cmp.join("comparison.svg"))
        .unwrap()
        .starts_with("<svg"));
}

#[test]
fn render_writes_side_by_side_layouts() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    generate(&data, 1, 4, &["--masks", "square", "--splits", "1,0,0"]);
    let manifest = data.join("train/p00000/manifest.json");
    let png = tmp.path().join("r.png");
    let out = gap(&["render", "--manifest", p(&manifest), "--out", p(&png)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let img = gap_core::raster::RasterImage::read(&png).unwrap();
    assert_eq!((img.width(), img.height()), (2 * 384 + 16, 384));
}
