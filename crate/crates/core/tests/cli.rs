use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_planar-mvs"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_pipeline_and_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    let out = dir.path().join("out");
    let o = cli(&["synth", "--kind", "fronto", "--width", "48", "--height", "36", "--views", "3", "--out", s(&scene)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(scene.join("gt.ply").is_file());

    let o = cli(&["pipeline", "--scene", s(&scene), "--out", s(&out), "--threads", "1", "--set", "geo_rounds=1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("cloud.ply").is_file());

    let report = dir.path().join("depth.txt");
    let o = cli(&["eval-depth", "--est", s(&out.join("depth")), "--gt", s(&scene.join("gt")), "--report", s(&report)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&report).unwrap();
    let within: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("within_0.1="))
        .unwrap()
        .parse()
        .unwrap();
    assert!(within > 0.8, "{text}");

    let json = dir.path().join("cloud.json");
    let o = cli(&["eval-cloud", "--est", s(&out.join("cloud.ply")), "--gt", s(&scene.join("gt.ply")), "--tau", "0.05", "--json", s(&json)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert!(v["accuracy"].as_f64().unwrap() > 0.9);

    let fused = dir.path().join("refused.ply");
    let o = cli(&["fuse", "--scene", s(&scene), "--maps", s(&out), "--out", s(&fused)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read(&fused).unwrap(), std::fs::read(out.join("cloud.ply")).unwrap());
}

#[test]
fn invalid_parameters_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    assert!(cli(&["synth", "--kind", "fronto", "--width", "32", "--height", "24", "--views", "2", "--out", s(&scene)]).status.success());
    let o = cli(&["depthmap", "--scene", s(&scene), "--out", s(&dir.path().join("o")), "--set", "alpha=-1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_scene_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(&["depthmap", "--scene", s(&dir.path().join("absent")), "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unwritable_output_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, b"x").unwrap();
    let o = cli(&["synth", "--kind", "fronto", "--width", "32", "--height", "24", "--views", "2", "--out", s(&blocker.join("scene"))]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}
