use std::path::PathBuf;
use std::process::Command;

fn qmem() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qmem"))
}

fn preset(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../presets").join(name)
}

#[test]
fn fixed_pulse_constants() {
    let out = qmem()
        .args(["pulse-factors", "--xi", "1000", "--pulse-convention", "paper"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let row: Vec<f64> = text.lines().nth(1).unwrap().split(',').map(|c| c.parse().unwrap()).collect();
    assert_eq!(row, vec![3.2, 2.7, 2.7]);
}

#[test]
fn preset_output_is_stable_across_threads() {
    let run = |threads: &str| {
        let out = qmem()
            .args(["--config", preset("reliability_sync.json").to_str().unwrap(), "--threads", threads])
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        out.stdout
    };
    assert_eq!(run("1"), run("4"));
}

#[test]
fn bad_config_exits_with_usage_code() {
    let dir = std::env::temp_dir().join(format!("qmem-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("bad.json");
    std::fs::write(&path, r#"{"subcommand": "fidelity", "bogus": 1}"#).unwrap();
    let out = qmem().args(["--config", path.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn infeasible_tradeoff_exits_with_numerical_code() {
    let out = qmem()
        .args([
            "--n-atoms", "100", "--delta", "1", "--delta-spread", "1", "--g", "1", "--g-spread", "0",
            "--tau-s", "1000", "--tau-d", "1", "--pulse-convention", "paper",
            "tradeoff", "--target-fidelity", "0.9", "--solve-for", "tau_d", "--capacity", "0.7",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
