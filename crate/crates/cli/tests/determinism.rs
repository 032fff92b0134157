mod common;

use std::collections::BTreeMap;
use std::path::Path;

use common::{bin, Inputs};
use sha2::{Digest, Sha256};

fn digest_dir(dir: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let entry = entry.unwrap();
        let bytes = std::fs::read(entry.path()).unwrap();
        let hash = Sha256::digest(&bytes);
        let hex: String = hash.iter().map(|b| format!("{b:02x}")).collect();
        out.insert(entry.file_name().to_string_lossy().into_owned(), hex);
    }
    out
}

fn runs(inp: &Inputs) -> Vec<(&'static str, Vec<String>)> {
    vec![
        (
            "solve",
            vec![
                "solve".into(),
                "--gradient".into(),
                inp.path("wide.csv"),
                "--curvature".into(),
                inp.path("power.json"),
                "--monte-carlo".into(),
                "--samples".into(),
                "20000".into(),
                "--tol".into(),
                "1e-4".into(),
                "--seed".into(),
                "7".into(),
            ],
        ),
        (
            "probe",
            vec![
                "probe".into(),
                "--oracle".into(),
                inp.path("pure_power.json"),
                "--config".into(),
                inp.path("probe_config.json"),
                "--seed".into(),
                "7".into(),
            ],
        ),
        (
            "compare",
            vec![
                "compare".into(),
                "--gradient".into(),
                inp.path("wide.csv"),
                "--curvature".into(),
                inp.path("power.json"),
                "--seed".into(),
                "7".into(),
            ],
        ),
        (
            "certify",
            vec![
                "certify".into(),
                "--gradient".into(),
                inp.path("diag21.csv"),
                "--curvature".into(),
                inp.path("kink.json"),
                "--samples".into(),
                "20000".into(),
                "--seed".into(),
                "7".into(),
            ],
        ),
    ]
}

fn execute(args: &[String], threads: Option<usize>, out: &Path) {
    let mut cmd = bin();
    if let Some(t) = threads {
        cmd.arg("--threads").arg(t.to_string());
    }
    let res = cmd.args(args).arg("--out-dir").arg(out).output().unwrap();
    assert!(
        res.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&res.stderr)
    );
}

#[test]
fn same_seed_gives_byte_identical_outputs() {
    let inp = Inputs::new();
    for (name, args) in runs(&inp) {
        let (a, b) = (inp.out(&format!("{name}-a")), inp.out(&format!("{name}-b")));
        execute(&args, None, &a);
        execute(&args, None, &b);
        let (da, db) = (digest_dir(&a), digest_dir(&b));
        assert!(da.contains_key("manifest.json"));
        assert_eq!(da, db, "{name} outputs differ between runs");
    }
}

#[test]
fn thread_count_does_not_change_outputs() {
    let inp = Inputs::new();
    for (name, args) in runs(&inp) {
        let (a, b) = (
            inp.out(&format!("{name}-t1")),
            inp.out(&format!("{name}-t4")),
        );
        execute(&args, Some(1), &a);
        execute(&args, Some(4), &b);
        assert_eq!(
            digest_dir(&a),
            digest_dir(&b),
            "{name} depends on thread count"
        );
    }
}

#[test]
fn different_seed_changes_sampled_outputs() {
    let inp = Inputs::new();
    let (_, mut args) = runs(&inp).remove(0);
    let (a, b) = (inp.out("s7"), inp.out("s8"));
    execute(&args, None, &a);
    *args.last_mut().unwrap() = "8".into();
    execute(&args, None, &b);
    let (da, db) = (digest_dir(&a), digest_dir(&b));
    assert_ne!(da["sigma_star.csv"], db["sigma_star.csv"]);
}
