use std::path::Path;
use std::process::{Command, Output};

fn xsreg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xsreg")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL_SPEC: &str = r#"{ "base": { "procedural": { "generator": "room", "points": 6000 } }, "seed": 3 }"#;
const FAST: [&str; 4] = ["--keypoints", "500", "--matching.top_k", "1500"];

fn synth_small(dir: &Path) {
    let spec = dir.join("spec.json");
    std::fs::write(&spec, SMALL_SPEC).unwrap();
    let out = xsreg(&["synth", "--spec", s(&spec), "--out-dir", s(dir)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn synth_then_register_writes_transform_and_viz() {
    let dir = tempfile::tempdir().unwrap();
    synth_small(dir.path());
    let gt: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("ground_truth.json")).unwrap()).unwrap();
    assert_eq!(gt["rotation"].as_array().unwrap().len(), 3);

    let out_json = dir.path().join("t.json");
    let viz = dir.path().join("viz.ply");
    let (src, tgt) = (dir.path().join("source.ply"), dir.path().join("target.ply"));
    let mut args = vec!["register", s(&src), s(&tgt), "--out", s(&out_json), "--viz", s(&viz)];
    args.extend(FAST);
    let out = xsreg(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let t: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out_json).unwrap()).unwrap();
    let rows = t["rotation"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.as_array().unwrap().len() == 3));
    assert_eq!(t["translation"].as_array().unwrap().len(), 3);
    for stage in ["sampling", "description", "matching", "filtering", "estimation"] {
        assert!(t["timings"][stage].as_f64().unwrap() >= 0.0);
    }
    // the estimate lands near the ground truth translation
    let dt: f64 = (0..3)
        .map(|i| (t["translation"][i].as_f64().unwrap() - gt["translation"][i].as_f64().unwrap()).powi(2))
        .sum::<f64>()
        .sqrt();
    assert!(dt < 0.3, "translation off by {dt}");
    assert!(std::fs::read(&viz).unwrap().starts_with(b"ply\n"));
}

#[test]
fn synth_list_writes_one_directory_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("specs.json");
    std::fs::write(
        &spec,
        r#"{ "template": { "base": { "procedural": { "generator": "tabletop", "points": 3000 } } }, "first_seed": 5, "count": 2 }"#,
    )
    .unwrap();
    let out = xsreg(&["synth", "--spec", s(&spec), "--out-dir", s(dir.path()), "--ascii"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for seed in [5, 6] {
        let src = std::fs::read_to_string(dir.path().join(format!("seed_{seed}/source.ply"))).unwrap();
        assert!(src.contains("format ascii 1.0"));
    }
}

#[test]
fn bench_report_uses_cli_over_file_over_default() {
    let dir = tempfile::tempdir().unwrap();
    let specs = dir.path().join("specs.json");
    std::fs::write(&specs, format!("[{SMALL_SPEC}]")).unwrap();
    let config = dir.path().join("pipeline.conf");
    std::fs::write(&config, "seed = 7\nkeypoints = 300\n[matching]\ntop_k = 1200\n").unwrap();
    let report = dir.path().join("report.json");
    let out = xsreg(&[
        "bench",
        "--specs",
        s(&specs),
        "--config",
        s(&config),
        "--report",
        s(&report),
        "--keypoints",
        "350",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["config"]["keypoints"], 350);
    assert_eq!(r["config"]["seed"], 7);
    assert_eq!(r["config"]["top_k"], 1200);
    assert_eq!(r["config"]["temperature"], 0.1);
    assert_eq!(r["records"].as_array().unwrap().len(), 1);
}

#[test]
fn missing_input_exits_3() {
    let out = xsreg(&["register", "/nonexistent/a.ply", "/nonexistent/b.ply"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn malformed_ply_exits_3_with_offset() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.ply");
    std::fs::write(&bad, "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n1 2 3\n").unwrap();
    let out = xsreg(&["register", s(&bad), s(&bad)]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("byte"));
}

#[test]
fn invalid_config_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = dir.path().join("c.ply");
    std::fs::write(&cloud, "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n").unwrap();

    let out = xsreg(&["register", s(&cloud), s(&cloud), "--matching.temperature", "0"]);
    assert_eq!(code(&out), 4);
    let out = xsreg(&["register", s(&cloud), s(&cloud), "--keypoints", "many"]);
    assert_eq!(code(&out), 4);

    let conf = dir.path().join("bad.conf");
    std::fs::write(&conf, "no_such_key = 1\n").unwrap();
    let out = xsreg(&["register", s(&cloud), s(&cloud), "--config", s(&conf)]);
    assert_eq!(code(&out), 4);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}

#[test]
fn unregistrable_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = dir.path().join("tiny.ply");
    std::fs::write(
        &cloud,
        "ply\nformat ascii 1.0\nelement vertex 4\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n",
    )
    .unwrap();
    let out = xsreg(&["register", s(&cloud), s(&cloud)]);
    assert_eq!(code(&out), 2);
}

#[test]
fn over_aggressive_synth_spec_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, r#"{ "base": { "procedural": { "generator": "room", "points": 3000 } }, "overlap": 0.001 }"#).unwrap();
    let out = xsreg(&["synth", "--spec", s(&spec), "--out-dir", s(dir.path())]);
    assert_eq!(code(&out), 4);
}

#[test]
fn help_lists_config_overrides() {
    let out = xsreg(&["register", "--help"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("--filter.keep_ratio"));
    assert!(text.contains("--estimator.method"));
}
