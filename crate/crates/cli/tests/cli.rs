use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn peaks(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_peaks"))
        .args(args)
        .env_remove("PEAKS_OUT_DIR")
        .current_dir(dir)
        .output()
        .unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let d = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

#[test]
fn subcritical_exponent_is_rejected() {
    let d = scratch("cli_reject");
    let out = peaks(&d, &["groundstate", "--p", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("\"invalid_parameter\""), "{err}");
    assert!(err.contains("p ≥ 2"), "{err}");
}

#[test]
fn bad_config_file_exits_with_config_code() {
    let d = scratch("cli_config");
    std::fs::write(d.join("run.toml"), "[peaks]\nnot_a_key = 1\n").unwrap();
    let out = peaks(&d, &["--config", "run.toml", "groundstate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("\"config\""));
}

#[test]
fn repeated_runs_are_bit_identical() {
    let d = scratch("cli_repro");
    let args = ["--out-dir", "o", "oracle", "taylor", "--n", "20000"];
    assert!(peaks(&d, &args).status.success());
    let first = std::fs::read(d.join("o/oracle-taylor.json")).unwrap();
    assert!(peaks(&d, &args).status.success());
    let second = std::fs::read(d.join("o/oracle-taylor.json")).unwrap();
    assert_eq!(first, second);
    let text = String::from_utf8(first).unwrap();
    assert!(text.contains("\"config_hash\""));
    assert!(text.contains("\"samples\": 20000"));
}

#[test]
fn env_var_overrides_output_directory() {
    let d = scratch("cli_env");
    let out = Command::new(env!("CARGO_BIN_EXE_peaks"))
        .args(["--out-dir", "ignored", "groundstate", "--dim", "1"])
        .env("PEAKS_OUT_DIR", "chosen")
        .current_dir(&d)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(d.join("chosen/groundstate.json").exists());
    assert!(d.join("chosen/profile.json").exists());
    assert!(!d.join("ignored").exists());
}

#[test]
fn config_file_and_flags_combine() {
    let d = scratch("cli_flags");
    std::fs::write(d.join("run.toml"), "[groundstate]\ndimension = 1\ntol = 1e-9\n").unwrap();
    let out = peaks(&d, &["--config", "run.toml", "--print-config", "groundstate", "--p", "2.0"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("dimension = 1"));
    assert!(text.contains("exponent = 2.0"));
}

#[test]
fn sweep_syntax_is_checked() {
    let d = scratch("cli_sweep");
    let out = peaks(&d, &["ansatz", "--eps-sweep", "0.3:0.2"]);
    assert_eq!(out.status.code(), Some(2));
}
