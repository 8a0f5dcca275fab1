#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn data_args() -> Vec<String> {
    vec![
        "--interactions".into(),
        fixture("interactions.csv").display().to_string(),
        "--wells".into(),
        fixture("wells.csv").display().to_string(),
    ]
}

pub fn wellfm<S: AsRef<str>>(args: &[S]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wellfm"))
        .args(args.iter().map(|a| a.as_ref()))
        .output()
        .expect("binary runs")
}

pub fn path_arg(p: &Path) -> String {
    p.display().to_string()
}

/// Runs `subcommand` on the fixture data with `extra` flags.
pub fn on_fixture(subcommand: &str, extra: &[String]) -> Output {
    let mut args = vec![subcommand.to_string()];
    args.extend(data_args());
    args.extend(extra.iter().cloned());
    wellfm(&args)
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// Trains a model into `dir/name` with seed 7 and, unless `extra` says
/// otherwise, 2 epochs.
pub fn train_model(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let model = dir.join(name);
    let mut args = Vec::new();
    if !extra.contains(&"--epochs") {
        args.extend(["--epochs".to_string(), "2".into()]);
    }
    args.extend([
        "--seed".to_string(),
        "7".into(),
        "--model".into(),
        path_arg(&model),
        "--trace".into(),
        path_arg(&dir.join(format!("{name}.trace.csv"))),
    ]);
    args.extend(extra.iter().map(|s| s.to_string()));
    let out = on_fixture("train", &args);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    model
}
