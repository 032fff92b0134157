use std::path::PathBuf;

use clap::Args;
use isocurv_core::io::{matrix_to_csv, vector_to_csv};
use isocurv_core::solver::{ExpectationMode, SolverOptions};
use isocurv_core::sphere::{SphereSampler, DEFAULT_SAMPLES};
use isocurv_core::{solve, ModelProblem};
use serde_json::json;

use crate::error::CliError;
use crate::output::{json_f64, path_value, read_curvature, read_matrix, RunOutput};
use crate::Common;

#[derive(Args, Debug)]
pub struct SolveArgs {
    /// Gradient matrix (CSV with a `rows,cols` header).
    #[arg(long)]
    gradient: PathBuf,
    /// Curvature function (JSON).
    #[arg(long)]
    curvature: PathBuf,
    /// Monte Carlo samples for sampled paths.
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    samples: usize,
    /// Projected-gradient tolerance of the iterative paths.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Force Monte Carlo expectations on the generic path.
    #[arg(long)]
    monte_carlo: bool,
    /// Solve even when H(sqrt(x)) is not convex.
    #[arg(long)]
    skip_assumption_check: bool,
    #[command(flatten)]
    common: Common,
}

pub fn run(args: &SolveArgs) -> Result<(), CliError> {
    let g = read_matrix(&args.gradient)?;
    let h = read_curvature(&args.curvature)?;
    if args.tol.is_nan() || args.tol <= 0.0 {
        return Err(CliError::Input("--tol must be positive".into()));
    }
    let sampler = SphereSampler::new(g.cols(), args.samples, args.common.seed)?;
    let opts = SolverOptions {
        tol: args.tol,
        expectation: if args.monte_carlo {
            ExpectationMode::MonteCarlo
        } else {
            ExpectationMode::Auto
        },
        check_assumption1: !args.skip_assumption_check,
        ..SolverOptions::default()
    };
    let problem = ModelProblem::new(g, h.clone(), sampler)?;
    let sol = solve(&problem, &opts)?;

    let report = sol.homogenization();
    let pairs: Vec<_> = report
        .pairs
        .iter()
        .map(|p| {
            json!({
                "i": p.i,
                "j": p.j,
                "input_ratio": json_f64(p.input_ratio),
                "output_ratio": json_f64(p.output_ratio),
                "pass": p.pass,
            })
        })
        .collect();
    let diagnostics = json!({
        "path": sol.path.as_str(),
        "iterations": sol.iterations,
        "objective": sol.objective,
        "stationarity_residual": sol.stationarity_residual,
        "gradient_std_err": sol.gradient_std_err,
        "shape": [problem.gradient().rows(), problem.gradient().cols()],
        "curvature": h,
        "homogenization_report": {
            "all_pass": report.all_pass,
            "worst_margin": json_f64(report.worst_margin),
            "pairs": pairs,
        },
        "kink_certificate": sol.certificate,
    });

    let mut out = RunOutput::new(&args.common.out_dir);
    out.text("sigma.csv", vector_to_csv("sigma", &sol.sigma));
    out.text(
        "sigma_star.csv",
        vector_to_csv("sigma_star", &sol.sigma_star),
    );
    out.text("q_star.csv", matrix_to_csv(&sol.q_star));
    out.json("diagnostics.json", &diagnostics)?;
    out.finish(
        "solve",
        json!({ "gradient": path_value(&args.gradient), "curvature": path_value(&args.curvature) }),
        json!({ "samples": args.samples, "tol": args.tol, "solver": opts, "curvature": h }),
        args.common.seed,
    )
}
