#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

/// The binary with every `ESCAPADE_*` variable removed from its environment.
pub fn escapade(dir: &Path) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_escapade"));
    cmd.current_dir(dir);
    for (key, _) in std::env::vars_os() {
        if key.to_string_lossy().starts_with("ESCAPADE_") {
            cmd.env_remove(key);
        }
    }
    cmd
}

pub fn run(dir: &Path, args: &[&str]) -> Output {
    escapade(dir).args(args).output().expect("binary runs")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}
