//! Randomized property suite across all modules.

use clap::Args;
use isocurv_core::curvature::{log_grid, CurvatureSpec, KinkParams};
use isocurv_core::linalg::{random_gaussian, random_orthogonal, singular_values};
use isocurv_core::solver::{homogenization_report, ordering_violations, SolverOptions};
use isocurv_core::sphere::{quartic_expectation, SphereSampler};
use isocurv_core::{
    alignment_gap, kink_certificate, msgn_exact, msgn_newton_schulz, solve, svd_compact,
    von_neumann_bound, ModelProblem, NsConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::error::CliError;
use crate::output::RunOutput;
use crate::Common;

#[derive(Args, Debug)]
pub struct CheckArgs {
    /// Largest matrix dimension drawn.
    #[arg(long, default_value_t = 8)]
    max_n: usize,
    /// Random instances per property.
    #[arg(long, default_value_t = 20)]
    instances: usize,
    /// Monte Carlo samples for sampled properties.
    #[arg(long, default_value_t = 20_000)]
    samples: usize,
    /// Test hook: shift every margin of the named property below zero.
    #[arg(long)]
    perturb: Option<String>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Serialize)]
struct PropertyResult {
    name: &'static str,
    checked: usize,
    failures: usize,
    /// Smallest `threshold - error` seen; negative means a failure.
    worst_margin: f64,
    pass: bool,
}

type Check = fn(&mut ChaCha8Rng, &Settings) -> Result<f64, CliError>;

struct Settings {
    max_n: usize,
    samples: usize,
    seed: u64,
}

const PROPERTIES: [(&str, Check); 12] = [
    ("svd_reconstruction", svd_reconstruction),
    ("polar_idempotence", polar_idempotence),
    ("rotational_invariance", rotational_invariance),
    ("von_neumann_inequality", von_neumann),
    ("quartic_mc_consistency", quartic_mc_consistency),
    ("subdifferential_monotone", subdifferential_monotone),
    ("ordering_preservation", ordering_preservation),
    ("ratio_homogenization", ratio_homogenization),
    ("objective_sanity", objective_sanity),
    ("solver_alignment", solver_alignment),
    ("ns_rotational_equivariance", ns_equivariance),
    ("kink_requires_kink", kink_requires_kink),
];

pub fn run(args: &CheckArgs) -> Result<(), CliError> {
    if args.max_n < 2 || args.instances == 0 || args.samples < 2 {
        return Err(CliError::Input(
            "need --max-n >= 2, --instances >= 1, --samples >= 2".into(),
        ));
    }
    if let Some(p) = &args.perturb {
        if !PROPERTIES.iter().any(|(name, _)| name == p) {
            return Err(CliError::Input(format!("unknown property `{p}`")));
        }
    }
    let settings = Settings {
        max_n: args.max_n,
        samples: args.samples,
        seed: args.common.seed,
    };
    let mut results = Vec::new();
    for (idx, (name, check)) in PROPERTIES.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(args.common.seed);
        rng.set_stream(idx as u64);
        let perturbed = args.perturb.as_deref() == Some(*name);
        let mut failures = 0;
        let mut worst = f64::INFINITY;
        for _ in 0..args.instances {
            let mut margin = check(&mut rng, &settings)?;
            if perturbed {
                margin -= 1.0 + margin.abs();
            }
            // a NaN margin counts as a failure
            if margin.is_nan() || margin < 0.0 {
                failures += 1;
            }
            worst = worst.min(margin);
        }
        results.push(PropertyResult {
            name,
            checked: args.instances,
            failures,
            worst_margin: worst,
            pass: failures == 0,
        });
    }
    let all_pass = results.iter().all(|r| r.pass);
    let report = json!({
        "seed": args.common.seed,
        "max_n": args.max_n,
        "instances": args.instances,
        "samples": args.samples,
        "perturbed": args.perturb,
        "all_pass": all_pass,
        "properties": results,
    });
    let mut out = RunOutput::new(&args.common.out_dir);
    out.json("property_report.json", &report)?;
    out.finish(
        "check",
        json!({}),
        json!({ "max_n": args.max_n, "instances": args.instances, "samples": args.samples, "perturb": args.perturb }),
        args.common.seed,
    )?;
    if all_pass {
        Ok(())
    } else {
        let failed: Vec<&str> = results.iter().filter(|r| !r.pass).map(|r| r.name).collect();
        Err(CliError::PropertyFailure(format!(
            "properties failed: {}",
            failed.join(", ")
        )))
    }
}

fn dims(rng: &mut ChaCha8Rng, s: &Settings) -> (usize, usize) {
    (rng.random_range(1..=s.max_n), rng.random_range(1..=s.max_n))
}

fn svd_reconstruction(rng: &mut ChaCha8Rng, s: &Settings) -> Result<f64, CliError> {
    let (m, n) = dims(rng, s);
    let a = random_gaussian(m, n, rng);
    let svd = svd_compact(&a)?;
    let err = svd.reconstruct().sub(&a)?.frobenius_norm() / a.frobenius_norm();
    Ok(1e-10 - err)
}

fn polar_idempotence(rng: &mut ChaCha8Rng, s: &Settings) -> Result<f64, CliError> {
    let (m, n) = dims(rng, s);
    let p = msgn_exact(&random_gaussian(m, n, rng))?;
    Ok(1e-10 - msgn_exact(&p)?.sub(&p)?.max_abs())
}

fn rotational_invariance(rng: &mut ChaCha8Rng, s: &Settings) -> Result<f64, CliError> {
    let (m, n) = dims(rng, s);
    let a = random_gaussian(m, n, rng);
    let rotated = random_orthogonal(m, rng)
        .matmul(&a)?
        .matmul(&random_orthogonal(n, rng))?;
    let (sa, sr) = (singular_values(&a)?, singular_values(&rotated)?);
    let err = sa
        .iter()
        .zip(&sr)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    Ok(1e-10 * sa[0].max(1.0) - err)
}

fn von_neumann(rng: &mut ChaCha8Rng, s: &Settings) -> Result<f64, CliError> {
    let (m, n) = dims(rng, s);
    let b = von_neumann_bound(&random_gaussian(m, n, rng), &random_gaussian(m, n, rng))?;
    Ok(b.rhs + 1e-10 * b.rhs - b.lhs)
}

fn quartic_mc_consistency(rng: &mut ChaCha8Rng, s: &Settings) -> Result<f64, CliError> {
    let n = rng.random_range(1..=s.max_n);
    let k = rng.random_range(1..=n);
    let sigma: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..3.0)).collect();
    let exact = quartic_expectation(&sigma, n, 1.0)?;
    let sampler = SphereSampler::new(n, s.samples, rng.random())?;
    let est =
        isocurv_core::sphere::mc_expectation(&sigma, &CurvatureSpec::quartic(1.0)?, &sampler)?;
    Ok(4.0 * est.std_err + 1e-12 * exact.max(1.0) - (est.mean - exact).abs())
}

fn random_spec(rng: &mut ChaCha8Rng) -> Result<CurvatureSpec, CliError> {
    Ok(match rng.random_range(0..4) {
        0 => CurvatureSpec::quadratic(rng.random_range(0.1..3.0))?,
        1 => CurvatureSpec::quartic(rng.random_range(0.1..3.0))?,
        2 => CurvatureSpec::power(rng.random_range(0.1..3.0), rng.random_range(0.0..2.0))?,
        _ => {
            let a = rng.random_range(0.0..2.0);
            CurvatureSpec::kink(
                a,
                a + rng.random_range(0.1..10.0),
                rng.random_range(0.1..3.0),
            )?
        }
    })
}

fn subdifferential_monotone(rng: &mut ChaCha8Rng, _: &Settings) -> Result<f64, CliError> {
    let h = random_spec(rng)?;
    let mut grid = log_grid(1e-3, 1e3, 200);
    if let Some(k) = h.as_kink() {
        grid.push(k.r_tilde);
        grid.sort_by(f64::total_cmp);
    }
    let mut margin = f64::INFINITY;
    for w in grid.windows(2) {
        margin = margin.min(h.value(w[1]) - h.value(w[0]));
        let (_, hi) = h.subdiff(w[0]);
        let (lo, _) = h.subdiff(w[1]);
        margin = margin.min(lo - hi + 1e-12 * hi.abs().max(1.0));
    }
    Ok(margin)
}

/// A gradient with a random spectrum and a curvature function with a deterministic path.
fn random_problem(rng: &mut ChaCha8Rng, s: &Settings) -> Result<ModelProblem, CliError> {
    let (m, n) = dims(rng, s);
    let g = random_gaussian(m, n, rng);
    let h = match rng.random_range(0..3) {
        0 => CurvatureSpec::quadratic(rng.random_range(0.1..3.0))?,
        1 => CurvatureSpec::quartic(rng.random_range(0.1..3.0))?,
        _ => CurvatureSpec::power(
            rng.random_range(0.1..3.0),
            [0.2, 0.39, 1.0][rng.random_range(0..3)],
        )?,
    };
    Ok(ModelProblem::new(
        g,
        h,
        SphereSampler::new(n, s.samples, s.seed)?,
    )?)
}

fn tight() -> SolverOptions {
    SolverOptions {
        tol: 1e-11,
        ..SolverOptions::default()
    }
}

fn ordering_preservation(rng: &mut ChaCha8Rng, s: &Settings) -> Result<f64, CliError> {
    let sol = solve(&random_problem(rng, s)?, &tight())?;
    let v = ordering_violations(&sol.sigma, &sol.sigma_star, 1e-9);
    Ok(if v.is_empty() { 0.0 } else { -(v.len() as f64) })
}

fn ratio_homogenization(rng: &mut ChaCha8Rng, s: &Settings) -> Result<f64, CliError> {
    let sol = solve(&random_problem(rng, s)?, &tight())?;
    let r = homogenization_report(&sol.sigma, &sol.sigma_star);
    Ok(if r.all_pass {
        r.worst_margin.max(0.0)
    } else {
        r.worst_margin.min(-f64::MIN_POSITIVE)
    })
}

fn objective_sanity(rng: &mut ChaCha8Rng, s: &Settings) -> Result<f64, CliError> {
    let sol = solve(&random_problem(rng, s)?, &tight())?;
    Ok(1e-12 - sol.objective)
}

fn solver_alignment(rng: &mut ChaCha8Rng, s: &Settings) -> Result<f64, CliError> {
    let p = random_problem(rng, s)?;
    let sol = solve(&p, &tight())?;
    Ok(1e-8 - alignment_gap(p.gradient(), &sol.q_star)?.abs())
}

fn ns_equivariance(rng: &mut ChaCha8Rng, s: &Settings) -> Result<f64, CliError> {
    let (m, n) = dims(rng, s);
    let g = random_gaussian(m, n, rng);
    let (o1, o2) = (random_orthogonal(m, rng), random_orthogonal(n, rng));
    let cfg = NsConfig::default();
    let lhs = msgn_newton_schulz(&o1.matmul(&g)?.matmul(&o2)?, &cfg)?;
    let rhs = o1.matmul(&msgn_newton_schulz(&g, &cfg)?)?.matmul(&o2)?;
    Ok(1e-9 - lhs.sub(&rhs)?.max_abs())
}

fn kink_requires_kink(rng: &mut ChaCha8Rng, s: &Settings) -> Result<f64, CliError> {
    let n = rng.random_range(2..=s.max_n.min(4));
    let mut sigma: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
    sigma[0] += 0.5;
    let slope = rng.random_range(0.5..5.0);
    let kink = KinkParams {
        a: slope,
        b: slope * (1.0 + 1e-12),
        r_tilde: 1.0,
    };
    let sampler = SphereSampler::new(n, s.samples, rng.random())?;
    let cert = kink_certificate(&sigma, kink, &sampler, 1.0)?;
    // margin: how far the residual sits above the feasibility threshold
    Ok(cert.moment_residual - cert.threshold)
}
