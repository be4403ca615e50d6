use ropetwin::math::Vec3;
use ropetwin::ParticleState;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn ropetwin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ropetwin")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = ropetwin(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// 40 cm of rope, short enough to fit the oracle cameras' view.
fn straight(dir: &Path) -> PathBuf {
    let path = dir.join("straight.json");
    ParticleState::new((0..100).map(|i| Vec3::new(0.004 * i as f64, 0.0, 0.005)).collect()).unwrap().save(&path).unwrap();
    path
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(ropetwin(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(ropetwin(&["knot"]).status.code(), Some(2));
    assert_eq!(ropetwin(&["simbench", "--particles", "many"]).status.code(), Some(2));
    assert_eq!(ropetwin(&["eval", "x", "--baseline", "oracle", "--train", "y"]).status.code(), Some(2));
}

#[test]
fn module_errors_exit_with_one_and_a_diagnostic() {
    let out = ropetwin(&["knot", "/nonexistent/state.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn straight_rope_is_untangled() {
    let tmp = tempfile::tempdir().unwrap();
    let path = straight(tmp.path());
    assert_eq!(ok(&["knot", s(&path)]).trim(), "crossings=0 untangled=true");
}

#[test]
fn render_then_extract_recovers_the_rope() {
    let tmp = tempfile::tempdir().unwrap();
    let path = straight(tmp.path());
    let scene = tmp.path().join("scene");
    ok(&["render", s(&path), "--views", "2", "-o", s(&scene)]);
    let out = tmp.path().join("extracted.json");
    ok(&["extract", s(&scene), "-o", s(&out)]);
    let (a, b) = (ParticleState::load(&path).unwrap(), ParticleState::load(&out).unwrap());
    let forward: f64 = a.points().iter().zip(b.points()).map(|(p, q)| (p - q).norm()).sum::<f64>() / 100.0;
    let backward: f64 = a.points().iter().zip(b.points().iter().rev()).map(|(p, q)| (p - q).norm()).sum::<f64>() / 100.0;
    assert!(forward.min(backward) < 0.005, "{forward} {backward}");
    assert_eq!(ok(&["knot", s(&out)]).trim(), "crossings=0 untangled=true");
}

#[test]
fn simbench_reports_every_frame() {
    let out = ok(&["simbench", "--particles", "40", "--frames", "5"]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 7);
    assert!(lines[6].starts_with("particles=40 frames=5 median_ms="));
    assert_eq!(lines[1].split(' ').count(), 6);
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    out
}

/// Generates the corpus, replays all of it twice over, exports, evaluates.
#[test]
fn fixture_replay_export_eval_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let fx = root.join("fixture");
    ok(&["fixture", "-o", s(&fx)]);
    assert!(fx.join("knot.json").exists());
    assert!(ok(&["knot", s(&fx.join("knot.json"))]).starts_with("crossings=3 untangled=false"));

    let demos = fx.join("demos");
    let mut ids: Vec<String> = std::fs::read_dir(&demos)
        .unwrap()
        .filter_map(|e| e.unwrap().file_name().to_str().unwrap().strip_suffix(".demo.jsonl").map(String::from))
        .collect();
    ids.sort();
    assert_eq!(ids.len(), 96);

    let mut trajs = Vec::new();
    for id in &ids {
        let out = root.join("traj").join(id);
        let demo = demos.join(format!("{id}.demo.jsonl"));
        let init = demos.join(format!("{id}.init.json"));
        ok(&["replay", s(&demo), "--init", s(&init), "-o", s(&out)]);
        trajs.push(out);
    }
    let again = root.join("again");
    ok(&["replay", s(&demos.join(format!("{}.demo.jsonl", ids[0]))), "--init", s(&demos.join(format!("{}.init.json", ids[0]))), "-o", s(&again)]);
    assert_eq!(files(&trajs[0]), files(&again));

    let dataset = root.join("dataset");
    let mut args = vec!["export"];
    args.extend(trajs.iter().map(|p| s(p)));
    args.extend(["--k", "20", "--held-out", "rope-d", "-o", s(&dataset)]);
    let summary = ok(&args);
    assert!(summary.starts_with("demos train=64 val=15 test=17"), "{summary}");
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(dataset.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["counts"], serde_json::json!({"train": 64, "val": 15, "test": 17}));

    let report = root.join("report.json");
    let line = ok(&["eval", s(&dataset.join("test")), "--baseline", "knn", "--train", s(&dataset.join("train")), "-o", s(&report)]);
    assert!(line.starts_with("baseline=knn chunks="), "{line}");
    let r: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert!(r["aggregate"]["mean"].as_f64().unwrap() >= 0.0);

    // the train split scored against itself retrieves exactly
    let line = ok(&["eval", s(&dataset.join("train")), "--train", s(&dataset.join("train"))]);
    assert!(line.contains("l1_mean=0.000000"), "{line}");
}
