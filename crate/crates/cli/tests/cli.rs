use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use echoprune::api::{prune, prune_arrays};
use echoprune::report::read_report;
use echoprune::synthgen::{NoveltyEvent, QueryTarget, Region, SceneSpec};
use echoprune::tensor_io::{read_text, read_visual};
use echoprune::{Keep, PruneConfig, Window};
use tempfile::TempDir;

fn echoprune(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_echoprune")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn write_spec(dir: &Path, name: &str, spec: &SceneSpec) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string(spec).unwrap()).unwrap();
    path
}

fn object_spec(frames: usize, rows: usize, cols: usize, dim: usize, seed: u64) -> SceneSpec {
    SceneSpec::moving_object(frames, rows, cols, dim, seed)
}

/// Generates a scene with the binary and returns the output directory.
fn gen(dir: &Path, spec: &SceneSpec) -> PathBuf {
    let spec_path = write_spec(dir, "spec.json", spec);
    let out = dir.join("scene");
    let run = echoprune(&["gen", "--spec", spec_path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn prune_reports_rounded_ratio_budget() {
    let tmp = TempDir::new().unwrap();
    let scene = gen(tmp.path(), &object_spec(10, 14, 14, 32, 5));
    let report = tmp.path().join("report.json");
    let run = echoprune(&[
        "prune", "--visual", s(&scene.join("visual.ept")), "--text", s(&scene.join("text.ept")),
        "--keep-ratio", "0.2", "--tau", "0.1", "--window", "3", "--out", s(&report),
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));

    let expected_budget = (0.2f64 * (10 * 14 * 14) as f64).round() as usize;
    assert_eq!(expected_budget, 392);
    let parsed = read_report(&report).unwrap();
    assert_eq!(parsed.budget, expected_budget);
    assert_eq!(parsed.kept.len(), expected_budget);
    assert_eq!(parsed.config.window, Window::Neighborhood { side: 3 });

    let stdout = String::from_utf8(run.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 1);
    for field in ["tokens_in=1960", "kept=392", "gamma=5.0000", "wall_ms="] {
        assert!(stdout.contains(field), "{stdout}");
    }
}

#[test]
fn prune_matches_library_call() {
    let tmp = TempDir::new().unwrap();
    let scene = gen(tmp.path(), &object_spec(6, 8, 8, 16, 11));
    let report = tmp.path().join("report.json");
    let run = echoprune(&[
        "prune", "--visual", s(&scene.join("visual.ept")), "--text", s(&scene.join("text.ept")),
        "--window", "full", "--tau", "0.5", "--budget", "50", "--variant", "bidirection", "--history", "2",
        "--out", s(&report),
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let parsed = read_report(&report).unwrap();
    assert_eq!(parsed.config.window, Window::FullFrame);

    let visual = read_visual(scene.join("visual.ept")).unwrap();
    let text = read_text(scene.join("text.ept")).unwrap();
    let cfg = PruneConfig { history: 2, variant: echoprune::Variant::Bidirection, keep: Keep::Absolute(50), ..PruneConfig::default() };
    assert_eq!(parsed.config, cfg);
    let direct = prune(&visual, &text, &cfg).unwrap();
    let from_cli: Vec<(usize, usize, usize)> = parsed.kept.iter().map(|e| (e.frame, e.row, e.col)).collect();
    let from_lib: Vec<(usize, usize, usize)> = direct.selection.tokens().iter().map(|t| (t.frame, t.row, t.col)).collect();
    assert_eq!(from_cli, from_lib);
}

#[test]
fn in_memory_arrays_and_files_select_the_same_tokens() {
    let tmp = TempDir::new().unwrap();
    let scene = gen(tmp.path(), &object_spec(5, 7, 7, 12, 23));
    let report = tmp.path().join("report.json");
    let run = echoprune(&[
        "prune", "--visual", s(&scene.join("visual.ept")), "--text", s(&scene.join("text.ept")),
        "--keep-ratio", "0.3", "--tau", "0.1", "--window", "3", "--out", s(&report),
    ]);
    assert_eq!(code(&run), 0);
    let from_cli: Vec<[usize; 3]> = read_report(&report).unwrap().kept.iter().map(|e| [e.frame, e.row, e.col]).collect();

    let visual = read_visual(scene.join("visual.ept")).unwrap();
    let text = read_text(scene.join("text.ept")).unwrap();
    let flags: BTreeMap<String, String> = [("keep-ratio", "0.3"), ("tau", "0.1"), ("window", "3")]
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    let arrays = prune_arrays(visual.data(), [5, 7, 7, 12], text.data(), [text.count(), 12], &flags).unwrap();
    assert_eq!(arrays.indices, from_cli);
}

#[test]
fn flag_misuse_exits_two() {
    let tmp = TempDir::new().unwrap();
    let scene = gen(tmp.path(), &object_spec(3, 4, 4, 8, 1));
    let (v, t) = (scene.join("visual.ept"), scene.join("text.ept"));
    let out = tmp.path().join("r.json");
    let base = ["prune", "--visual", s(&v), "--text", s(&t), "--out", s(&out)];
    let with = |extra: &[&str]| {
        let mut args = base.to_vec();
        args.extend_from_slice(extra);
        echoprune(&args)
    };

    let bad_ratio = with(&["--keep-ratio", "1.5"]);
    assert_eq!(code(&bad_ratio), 2);
    let stderr = String::from_utf8_lossy(&bad_ratio.stderr);
    assert!(stderr.contains("--keep-ratio") && stderr.contains("--help"), "{stderr}");

    for extra in [
        &["--keep-ratio", "0.2", "--budget", "4"][..],
        &["--unknown"],
        &["--keep_ratio", "0.2"],
        &["--window", "4"],
        &["--history", "4"],
        &["--lambda", "1.5"],
        &["--tau", "0"],
        &["--variant", "sideways"],
        &["--budget", "0"],
    ] {
        assert_eq!(code(&with(extra)), 2, "{extra:?}");
    }
    assert_eq!(code(&echoprune(&["prune", "--visual", s(&v)])), 2);
    assert_eq!(code(&echoprune(&["frobnicate"])), 2);
    assert!(!out.exists());
}

#[test]
fn runtime_failures_exit_one() {
    let tmp = TempDir::new().unwrap();
    let scene = gen(tmp.path(), &object_spec(3, 4, 4, 8, 1));
    let out = tmp.path().join("r.json");
    let missing = echoprune(&["prune", "--visual", "/nonexistent/v.ept", "--text", s(&scene.join("text.ept")), "--out", s(&out)]);
    assert_eq!(code(&missing), 1);
    assert!(String::from_utf8_lossy(&missing.stderr).contains("/nonexistent/v.ept"));

    // A budget larger than the grid is a validation failure, not flag misuse.
    let too_big = echoprune(&[
        "prune", "--visual", s(&scene.join("visual.ept")), "--text", s(&scene.join("text.ept")),
        "--budget", "1000", "--out", s(&out),
    ]);
    assert_eq!(code(&too_big), 1);

    // Text tensor passed as visual.
    let swapped = echoprune(&[
        "prune", "--visual", s(&scene.join("text.ept")), "--text", s(&scene.join("text.ept")), "--out", s(&out),
    ]);
    assert_eq!(code(&swapped), 1);

    let bad_spec = tmp.path().join("bad.json");
    fs::write(&bad_spec, "{\"frames\": 2}").unwrap();
    assert_eq!(code(&echoprune(&["gen", "--spec", s(&bad_spec), "--out", s(&tmp.path().join("x"))])), 1);
}

#[test]
fn gen_is_byte_deterministic() {
    let spec = object_spec(4, 6, 6, 16, 42);
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let da = gen(a.path(), &spec);
    let db = gen(b.path(), &spec);
    for file in ["visual.ept", "text.ept", "labels.json"] {
        let (x, y) = (fs::read(da.join(file)).unwrap(), fs::read(db.join(file)).unwrap());
        assert!(!x.is_empty());
        assert_eq!(x, y, "{file}");
    }

    // --seed overrides the spec seed.
    let spec_path = write_spec(a.path(), "spec2.json", &spec);
    let other = a.path().join("other");
    assert_eq!(code(&echoprune(&["gen", "--spec", s(&spec_path), "--out", s(&other), "--seed", "43"])), 0);
    assert_ne!(fs::read(other.join("visual.ept")).unwrap(), fs::read(da.join("visual.ept")).unwrap());
}

#[test]
fn bench_needs_four_sizes() {
    let run = echoprune(&["bench", "--sizes", "2x4x4x8,4x4x4x8", "--window", "3"]);
    assert_eq!(code(&run), 1);
    assert!(String::from_utf8_lossy(&run.stderr).contains("4"));
    assert_eq!(code(&echoprune(&["bench", "--sizes", "2x4x4"])), 2);
    assert_eq!(code(&echoprune(&["bench", "--runs", "2", "--sizes", "1x2x2x2,2x2x2x2,3x2x2x2,4x2x2x2"])), 1);
}

#[test]
fn bench_writes_timing_report() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("bench.json");
    let run = echoprune(&[
        "bench", "--sizes", "2x6x6x16,4x6x6x16,8x6x6x16,16x6x6x16", "--window", "3", "--runs", "3", "--warmups", "1",
        "--out", s(&out),
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let stdout = String::from_utf8(run.stdout).unwrap();
    assert!(stdout.contains("median_ms") && stdout.contains("slope"));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let entries = json["timing"]["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 4);
    assert_eq!(entries[3]["token_count"], 16 * 36);
    assert_eq!(entries[0]["runs"], 3);
    assert!(json["scaling"]["slope"].as_f64().unwrap().is_finite());
}

/// Background panning one column per frame: later frames are shifted
/// duplicates of the first, plus a small novel patch per frame.
fn panning_spec(seed: u64) -> SceneSpec {
    let frames = 6;
    SceneSpec {
        frames,
        rows: 8,
        cols: 8,
        dim: 32,
        background_dirs: 8,
        background_velocity: [0.0, 1.0],
        objects: vec![],
        novelty_events: (1..frames)
            .map(|f| NoveltyEvent {
                frame: f,
                region: Region { row: (f * 3) % 6, col: (f * 5) % 6, height: 2, width: 2 },
                direction_seed: seed * 100 + f as u64,
                duration: 1,
            })
            .collect(),
        noise_sigma: 0.05,
        query_target: QueryTarget::Background(0),
        distractors: 0,
        seed,
    }
}

#[test]
fn ablate_full_keeps_fewer_duplicates_than_corr_only() {
    let tmp = TempDir::new().unwrap();
    let spec_path = write_spec(tmp.path(), "pan.json", &panning_spec(2));
    let out = tmp.path().join("ablate.json");
    let run = echoprune(&["ablate", "--spec", s(&spec_path), "--tau", "0.5", "--window", "full", "--out", s(&out)]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let rows: Vec<serde_json::Value> = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    // 6 variants + uniform + 2 baselines
    assert_eq!(rows.len(), 9);
    let bg = |variant: &str| {
        rows.iter()
            .find(|r| r["method"] == "topk" && r["variant"] == variant)
            .map(|r| r["recall"]["background_after_first"].as_f64().unwrap())
            .unwrap()
    };
    assert!(bg("full") < bg("corr-only"), "{} vs {}", bg("full"), bg("corr-only"));
    let stdout = String::from_utf8(run.stdout).unwrap();
    assert!(stdout.contains("relevance-only") && stdout.contains("uniform"));
}

#[test]
fn ablate_on_tensor_files_has_no_recall() {
    let tmp = TempDir::new().unwrap();
    let scene = gen(tmp.path(), &object_spec(4, 5, 5, 8, 3));
    let out = tmp.path().join("ablate.json");
    let run = echoprune(&[
        "ablate", "--visual", s(&scene.join("visual.ept")), "--text", s(&scene.join("text.ept")), "--out", s(&out),
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let rows: Vec<serde_json::Value> = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(rows.len(), 2 * 2 * 7 + 2);
    assert!(rows.iter().all(|r| r["recall"].is_null()));

    assert_eq!(code(&echoprune(&["ablate"])), 2);
    assert_eq!(code(&echoprune(&["ablate", "--visual", s(&scene.join("visual.ept"))])), 2);
    assert_eq!(code(&echoprune(&["ablate", "--variant", "full", "--spec", "x.json"])), 2);
}
