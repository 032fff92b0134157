use std::path::PathBuf;

use clap::Args;
use isocurv_core::io::format_f64;
use isocurv_core::{probe_oracle, OracleSpec, ProbeConfig};
use serde_json::json;

use crate::error::CliError;
use crate::output::{path_value, read_json, RunOutput};
use crate::Common;

#[derive(Args, Debug)]
pub struct ProbeArgs {
    /// Oracle description (JSON), e.g. `{"oracle": "pure_power", "p": 4}`.
    #[arg(long)]
    oracle: PathBuf,
    /// Probe configuration (JSON); omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

pub fn run(args: &ProbeArgs) -> Result<(), CliError> {
    let oracle: OracleSpec = read_json(&args.oracle)?;
    let mut config: ProbeConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => ProbeConfig::default(),
    };
    config.seed = args.common.seed;
    let report = probe_oracle(&oracle, &config)?;

    let mut csv = String::from("radius,mean_remainder_over_r2,q10,q50,q90,n_samples\n");
    for i in 0..report.radii.len() {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            format_f64(report.radii[i]),
            format_f64(report.mean_remainder_over_r2[i]),
            format_f64(report.q10[i]),
            format_f64(report.q50[i]),
            format_f64(report.q90[i]),
            report.samples_per_radius
        ));
    }
    let summary = json!({
        "oracle": oracle,
        "fitted_exponent": report.fitted_exponent,
        "fit_r_squared": report.fit_r_squared,
        "fit_window": [report.fit_window.0, report.fit_window.1],
        "nonpositive_mean_in_window": report.nonpositive_mean_in_window,
        "samples_per_radius": report.samples_per_radius,
        "negative_fraction": report.negative_fraction,
        "std_err": report.std_err,
    });
    let mut inputs = json!({ "oracle": path_value(&args.oracle) });
    if let Some(p) = &args.config {
        inputs["config"] = path_value(p);
    }
    let mut out = RunOutput::new(&args.common.out_dir);
    out.text("probe.csv", csv);
    out.json("summary.json", &summary)?;
    out.finish(
        "probe",
        inputs,
        json!({ "oracle": oracle, "probe": config }),
        args.common.seed,
    )
}
