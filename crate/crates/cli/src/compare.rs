use std::path::PathBuf;

use clap::Args;
use isocurv_core::io::format_f64;
use isocurv_core::muon::{default_gamma_grid, SyntheticLoss};
use isocurv_core::solver::SolverOptions;
use isocurv_core::sphere::{SphereSampler, DEFAULT_SAMPLES};
use isocurv_core::{compare_one_step, CurvatureSpec, NsConfig};
use serde_json::json;

use crate::error::CliError;
use crate::output::{path_value, read_curvature, read_json, read_matrix, RunOutput};
use crate::Common;

#[derive(Args, Debug)]
pub struct CompareArgs {
    #[arg(long)]
    gradient: PathBuf,
    /// Curvature of the synthetic loss and the model (default: quartic, c = 1).
    #[arg(long)]
    curvature: Option<PathBuf>,
    /// Newton-Schulz settings (JSON); defaults apply to omitted fields.
    #[arg(long)]
    ns_config: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    samples: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[command(flatten)]
    common: Common,
}

pub fn run(args: &CompareArgs) -> Result<(), CliError> {
    let g = read_matrix(&args.gradient)?;
    let h = match &args.curvature {
        Some(p) => read_curvature(p)?,
        None => CurvatureSpec::quartic(1.0)?,
    };
    let ns: NsConfig = match &args.ns_config {
        Some(p) => read_json(p)?,
        None => NsConfig::default(),
    };
    let sampler = SphereSampler::new(g.cols(), args.samples, args.common.seed)?;
    let opts = SolverOptions {
        tol: args.tol,
        ..SolverOptions::default()
    };
    let loss = SyntheticLoss::new(g, &h)?;
    let grid = default_gamma_grid();
    let result = compare_one_step(&loss, &h, &grid, &ns, &sampler, &opts)?;

    let mut csv = String::from("rule,gamma,realized_decrease\n");
    for o in &result.outcomes {
        for (gamma, dec) in &o.scan {
            csv.push_str(&format!(
                "{},{},{}\n",
                o.rule.as_str(),
                format_f64(*gamma),
                format_f64(*dec)
            ));
        }
    }
    let best: Vec<_> = result
        .outcomes
        .iter()
        .map(|o| {
            json!({
                "rule": o.rule.as_str(),
                "best_gamma": o.best_gamma,
                "best_decrease": o.best_decrease,
                "refined_gamma": o.refined_gamma,
                "refined_decrease": o.refined_decrease,
                "model_predicted_decrease": o.model_predicted_decrease,
            })
        })
        .collect();
    let summary = json!({
        "curvature": h,
        "sigma": result.sigma,
        "ns_spectrum": result.ns_spectrum,
        "ns_order_inversions": result.ns_order_inversions,
        "best_per_rule": best,
    });

    let mut inputs = json!({ "gradient": path_value(&args.gradient) });
    if let Some(p) = &args.curvature {
        inputs["curvature"] = path_value(p);
    }
    if let Some(p) = &args.ns_config {
        inputs["ns_config"] = path_value(p);
    }
    let mut out = RunOutput::new(&args.common.out_dir);
    out.text("compare.csv", csv);
    out.json("summary.json", &summary)?;
    out.finish(
        "compare",
        inputs,
        json!({ "samples": args.samples, "tol": args.tol, "curvature": h, "ns": ns, "gamma_grid": grid }),
        args.common.seed,
    )
}
