use std::path::Path;
use std::process::Command;

fn duhamel(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_duhamel")).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stdout).into_owned())
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn verify_preset_passes_and_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let (code, stdout) = duhamel(&["verify", "--preset", "finite-speed-burgers", "--out", out]);
    assert_eq!(code, 0, "{stdout}");
    assert!(stdout.lines().any(|l| l.starts_with("PASS finite_speed")));
    let manifest = json(&dir.path().join("manifest.json"));
    assert!(manifest["files"].as_array().unwrap().iter().any(|f| f == "reports.jsonl"));
}

#[test]
fn bad_config_exits_two_with_failure_record() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "preset = \"linear-duhamel-cauchy\"\nalpha = 3.0\n").unwrap();
    let out = dir.path().join("out");
    let (code, _) = duhamel(&["verify", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 2);
    let failure = json(&out.join("failure.json"));
    assert!(failure.to_string().contains("out of (0,2]"), "{failure}");
}

#[test]
fn unknown_preset_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = duhamel(&["solve", "--preset", "no-such-preset", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 2);
}

#[test]
fn config_and_preset_conflict() {
    let (code, _) = duhamel(&["solve", "--preset", "finite-speed-burgers", "--config", "x.toml"]);
    assert_eq!(code, 2);
}
