use std::path::PathBuf;

use clap::Args;
use isocurv_core::solver::SolverOptions;
use isocurv_core::sphere::{SphereSampler, DEFAULT_SAMPLES};
use isocurv_core::{
    alignment_gap, converse_gap, kink_certificate, log_grid, solve, svd_compact, ModelProblem,
};
use serde_json::{json, Value};

use crate::error::CliError;
use crate::output::{path_value, read_curvature, read_matrix, RunOutput};
use crate::Common;

#[derive(Args, Debug)]
pub struct CertifyArgs {
    #[arg(long)]
    gradient: PathBuf,
    #[arg(long)]
    curvature: PathBuf,
    /// Monte Carlo samples for the kink certificate and sampled solver paths.
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    samples: usize,
    /// Solver tolerance used for the alignment check.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Smallest radius of the converse-gap grid.
    #[arg(long, default_value_t = 1e-2)]
    c_min: f64,
    /// Largest radius of the converse-gap grid.
    #[arg(long, default_value_t = 1e2)]
    c_max: f64,
    /// Number of log-spaced grid radii.
    #[arg(long, default_value_t = 100)]
    c_count: usize,
    #[command(flatten)]
    common: Common,
}

pub fn run(args: &CertifyArgs) -> Result<(), CliError> {
    let g = read_matrix(&args.gradient)?;
    let h = read_curvature(&args.curvature)?;
    if !(args.c_min > 0.0 && args.c_max > args.c_min && args.c_count >= 2) {
        return Err(CliError::Input(
            "need 0 < --c-min < --c-max and --c-count >= 2".into(),
        ));
    }
    let sampler = SphereSampler::new(g.cols(), args.samples, args.common.seed)?;
    let sigma = svd_compact(&g)?.sigma;
    let mut notes: Vec<String> = Vec::new();

    let opts = SolverOptions {
        tol: args.tol,
        check_assumption1: false,
        ..SolverOptions::default()
    };
    let alignment =
        match ModelProblem::new(g.clone(), h.clone(), sampler).and_then(|p| solve(&p, &opts)) {
            Ok(sol) => json!({
                "gap": alignment_gap(&g, &sol.q_star)?,
                "solver_path": sol.path.as_str(),
                "sigma_star": sol.sigma_star,
            }),
            Err(e) => {
                notes.push(format!("alignment skipped: {e}"));
                Value::Null
            }
        };

    let kink = match h.as_kink() {
        Some(params) if g.rows() >= g.cols() && sigma.iter().all(|s| *s > 0.0) => {
            let cert = kink_certificate(&sigma, params, &sampler, 1.0)?;
            serde_json::to_value(&cert).expect("certificate serializes")
        }
        Some(_) => {
            notes
                .push("kink certificate unsupported: needs m >= n and a full-rank gradient".into());
            Value::Null
        }
        None => Value::Null,
    };

    let converse = if h.is_differentiable() {
        match converse_gap(&g, &h, &log_grid(args.c_min, args.c_max, args.c_count)) {
            Ok(cg) => json!({ "gap": cg.gap, "c": cg.c }),
            Err(e) => {
                notes.push(format!("converse gap skipped: {e}"));
                Value::Null
            }
        }
    } else {
        Value::Null
    };

    let certificate = json!({
        "curvature": h,
        "sigma": sigma,
        "alignment": alignment,
        "kink_certificate": kink,
        "converse_gap": converse,
        "notes": notes,
    });
    let mut out = RunOutput::new(&args.common.out_dir);
    out.json("certificate.json", &certificate)?;
    out.finish(
        "certify",
        json!({ "gradient": path_value(&args.gradient), "curvature": path_value(&args.curvature) }),
        json!({
            "samples": args.samples,
            "tol": args.tol,
            "c_grid": { "min": args.c_min, "max": args.c_max, "count": args.c_count },
            "curvature": h,
        }),
        args.common.seed,
    )
}
