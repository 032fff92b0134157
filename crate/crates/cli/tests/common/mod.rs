#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_isocurv"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn isocurv")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

/// Writes the standard input files into a fresh directory.
pub struct Inputs {
    pub dir: TempDir,
}

impl Inputs {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let files = [
            ("identity.csv", "2,2\n1,0\n0,1\n"),
            ("diag21.csv", "2,2\n2,0\n0,1\n"),
            ("wide.csv", "2,3\n3,0.5,-1\n0.25,2,0.75\n"),
            ("malformed.csv", "2,2\n1,x\n0,1\n"),
            ("quartic.json", r#"{"variant":"quartic","c":1.0}"#),
            ("power.json", r#"{"variant":"power","c":0.5,"alpha":1.0}"#),
            (
                "kink.json",
                r#"{"variant":"kink","A":0.0,"B":400.0,"r_tilde":1.0}"#,
            ),
            (
                "bad_kink.json",
                r#"{"variant":"kink","A":1.0,"B":0.5,"r_tilde":1.0}"#,
            ),
            (
                "linear.json",
                r#"{"variant":"power","c":0.01,"alpha":-1.0}"#,
            ),
            ("pure_power.json", r#"{"oracle":"pure_power","p":4}"#),
            (
                "probe_config.json",
                r#"{"radii":[0.1,0.3,1.0,3.0],"direction_count":300,"fit_window":[0.1,3.0]}"#,
            ),
        ];
        for (name, body) in files {
            std::fs::write(dir.path().join(name), body).unwrap();
        }
        Self { dir }
    }

    pub fn path(&self, name: &str) -> String {
        self.dir.path().join(name).to_string_lossy().into_owned()
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

pub fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}
