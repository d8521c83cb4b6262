use std::path::Path;
use std::process::{Command, Output};

fn petri(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_petri"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn dry_run_prints_config_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = petri(&["--dry-run", "--set", "search.k=4", "search", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["search"]["k"], 4);
    assert_eq!(v["profile"], "desk-scale");
    assert!(!out.exists());
}

#[test]
fn profiles_resolve() {
    for p in ["desk-scale", "table2", "table4"] {
        let o = petri(&["--profile", p, "--dry-run", "slope-study", "--out", "x"]);
        assert_eq!(code(&o), 0, "{p}");
    }
}

#[test]
fn configuration_errors_exit_2() {
    for args in [
        &["--set", "search.bogus=1", "--dry-run", "search", "--out", "x"][..],
        &["--profile", "huge", "--dry-run", "search", "--out", "x"],
        &["--set", "search.k=0", "--dry-run", "search", "--out", "x"],
        &["--set", "noequals", "--dry-run", "search", "--out", "x"],
    ] {
        let o = petri(args);
        assert_eq!(code(&o), 2, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn unknown_arm_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = petri(&["search", "--arms", "oracle", "--out", dir.path().join("s").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn config_file_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("c.json");
    std::fs::write(&f, r#"{"search": {"m": 40, "surprise": true}}"#).unwrap();
    let o = petri(&["--config", f.to_str().unwrap(), "--dry-run", "search", "--out", "x"]);
    assert_eq!(code(&o), 2);
    std::fs::write(&f, r#"{"search": {"m": 40}}"#).unwrap();
    let o = petri(&["--config", f.to_str().unwrap(), "--dry-run", "search", "--out", "x"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["search"]["m"], 40);
}

#[test]
fn missing_mnist_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty");
    let o = petri(&[
        "--set",
        &format!("mnist_dir={}", empty.display()),
        "ground-truth",
        "--task",
        "mnist-slope",
        "--slopes",
        "0.5",
        "--out",
        dir.path().join("gt").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
}

fn write_cell_ledger(dir: &Path) -> String {
    let out = dir.join("gt");
    let o = petri(&[
        "--set", "char_lm.steps=3",
        "--set", "char_lm.width=4",
        "--set", "char_lm.valid_windows=4",
        "ground-truth", "--task", "char-lm", "--random-cells", "3",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out.join("ledger.jsonl").to_string_lossy().into_owned()
}

#[test]
fn divergence_exits_3_and_sane_settings_train() {
    let dir = tempfile::tempdir().unwrap();
    let ledger = write_cell_ledger(dir.path());
    let small = ["--set", "search.petri.outer_steps=1", "--set", "search.petri.inner_steps=3"];
    let mut args = small.to_vec();
    args.extend(["--set", "search.petri.init_scale=1e100", "petri", "train", "--ledger", &ledger, "--out"]);
    let bad = dir.path().join("bad");
    args.push(bad.to_str().unwrap());
    assert_eq!(code(&petri(&args)), 3);

    let good = dir.path().join("good");
    let mut args = small.to_vec();
    args.extend(["petri", "train", "--ledger", &ledger, "--out", good.to_str().unwrap()]);
    assert_eq!(code(&petri(&args)), 0);
    assert!(good.join("petri_model.json").exists());

    let inferred = dir.path().join("inf");
    let model = good.join("petri_model.json");
    let o = petri(&[
        "petri", "infer", "--model", model.to_str().unwrap(), "--random-cells", "4",
        "--out", inferred.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let lines = std::fs::read_to_string(inferred.join("predictions.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 4);

    // a cell dish cannot score slopes
    let o = petri(&[
        "petri", "infer", "--model", model.to_str().unwrap(), "--slopes", "0.5,1.0",
        "--out", dir.path().join("mixed").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
}
