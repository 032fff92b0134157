mod common;

use common::{code, run, Inputs};

#[test]
fn solve_succeeds_with_exit_zero() {
    let inp = Inputs::new();
    let out = inp.out("ok");
    let res = run(&[
        "solve",
        "--gradient",
        &inp.path("identity.csv"),
        "--curvature",
        &inp.path("quartic.json"),
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let text = std::fs::read_to_string(out.join("sigma_star.csv")).unwrap();
    let values: Vec<f64> = text.lines().skip(1).map(|l| l.parse().unwrap()).collect();
    let expected = 0.5f64.cbrt();
    assert_eq!(values.len(), 2);
    for v in values {
        assert!((v - expected).abs() <= 1e-6, "{v}");
    }
    for f in [
        "sigma.csv",
        "q_star.csv",
        "diagnostics.json",
        "manifest.json",
    ] {
        assert!(out.join(f).exists(), "{f} missing");
    }
}

#[test]
fn property_failure_exits_one() {
    let inp = Inputs::new();
    let out = inp.out("check");
    let res = run(&[
        "check",
        "--instances",
        "2",
        "--max-n",
        "3",
        "--samples",
        "2000",
        "--perturb",
        "von_neumann_inequality",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 1, "{}", String::from_utf8_lossy(&res.stderr));
    let report = common::read_json(&out.join("property_report.json"));
    assert_eq!(report["all_pass"], false);
    let failed: Vec<_> = report["properties"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|p| p["pass"] == false)
        .map(|p| p["name"].as_str().unwrap().to_owned())
        .collect();
    assert_eq!(failed, ["von_neumann_inequality"]);
}

#[test]
fn unperturbed_check_passes() {
    let inp = Inputs::new();
    let out = inp.out("check");
    let res = run(&[
        "check",
        "--instances",
        "3",
        "--max-n",
        "4",
        "--samples",
        "5000",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn diverging_solver_exits_two() {
    let inp = Inputs::new();
    let out = inp.out("div");
    let res = run(&[
        "solve",
        "--gradient",
        &inp.path("identity.csv"),
        "--curvature",
        &inp.path("linear.json"),
        "--skip-assumption-check",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 2, "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn malformed_matrix_exits_three() {
    let inp = Inputs::new();
    let out = inp.out("bad");
    let res = run(&[
        "solve",
        "--gradient",
        &inp.path("malformed.csv"),
        "--curvature",
        &inp.path("quartic.json"),
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 3);
    assert!(String::from_utf8_lossy(&res.stderr).contains("line 2"));
}

#[test]
fn invalid_kink_exits_three() {
    let inp = Inputs::new();
    let out = inp.out("bad");
    let res = run(&[
        "solve",
        "--gradient",
        &inp.path("identity.csv"),
        "--curvature",
        &inp.path("bad_kink.json"),
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 3);
}

#[test]
fn failed_growth_check_exits_three() {
    let inp = Inputs::new();
    let out = inp.out("bad");
    let res = run(&[
        "solve",
        "--gradient",
        &inp.path("identity.csv"),
        "--curvature",
        &inp.path("linear.json"),
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 3);
}

#[test]
fn unknown_property_and_bad_flags_exit_three() {
    let inp = Inputs::new();
    let out = inp.out("bad");
    assert_eq!(
        code(&run(&[
            "check",
            "--perturb",
            "no_such_property",
            "--out-dir",
            out.to_str().unwrap()
        ])),
        3
    );
    assert_eq!(code(&run(&["solve", "--bogus-flag"])), 3);
    assert_eq!(code(&run(&["frobnicate"])), 3);
    let missing = inp.path("missing.csv");
    assert_eq!(
        code(&run(&[
            "compare",
            "--gradient",
            &missing,
            "--out-dir",
            out.to_str().unwrap()
        ])),
        3
    );
}
