//! Solvers for the isotropic curvature model
//! `min_Q -Tr(Q G^T) + E_ζ H(‖Qζ‖)`.
//!
//! The optimal `Q` shares its singular vectors with `G`, so every path works on
//! the singular values alone: it minimizes `-Σ σᵢ σ̃ᵢ + E H(√(Σ σ̃ᵢ² ζᵢ²))` over
//! `σ̃ ≥ 0` and then rebuilds `Q* = U diag(σ*) V^T`.

use serde::{Deserialize, Serialize};

use crate::curvature::{assumption1_holds, log_grid, CurvatureSpec, KinkParams};
use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, svd_compact, DenseMatrix};
use crate::sphere::{ExactExpectation, MonteCarloExpectation, SphereExpectation, SphereSampler};
use crate::theorem_checks::{kink_certificate, KinkCertificate};

/// Iterates above this magnitude are treated as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e8;
/// Iteration cap of the quartic fixed point.
pub const QUARTIC_MAX_ITERATIONS: usize = 10_000;
/// Tolerance added to ratio comparisons in [`homogenization_report`].
pub const HOMOGENIZATION_TOLERANCE: f64 = 1e-9;

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

/// Which algorithm produced a solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverPath {
    QuadraticClosedForm,
    QuarticFixedPoint,
    GenericProjectedGradient,
    KinkParametric,
}

impl SolverPath {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::QuadraticClosedForm => "quadratic-closed-form",
            Self::QuarticFixedPoint => "quartic-fixed-point",
            Self::GenericProjectedGradient => "generic-projected-gradient",
            Self::KinkParametric => "kink-parametric",
        }
    }
}

/// How the generic path evaluates the sphere expectation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpectationMode {
    /// Closed form or quadrature when available, Monte Carlo otherwise.
    #[default]
    Auto,
    /// Always Monte Carlo.
    MonteCarlo,
}

/// Knobs shared by the iterative paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Projected-gradient tolerance (the MC noise floor may dominate it).
    pub tol: f64,
    pub max_iterations: usize,
    pub expectation: ExpectationMode,
    /// Refuse curvature for which `H(√x)` is not convex.
    pub check_assumption1: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iterations: 10_000,
            expectation: ExpectationMode::Auto,
            check_assumption1: true,
        }
    }
}

/// A gradient, a curvature function and the sampler for Monte Carlo paths.
#[derive(Debug, Clone)]
pub struct ModelProblem {
    gradient: DenseMatrix,
    curvature: CurvatureSpec,
    sampler: SphereSampler,
}

impl ModelProblem {
    pub fn new(
        gradient: DenseMatrix,
        curvature: CurvatureSpec,
        sampler: SphereSampler,
    ) -> Result<Self> {
        if sampler.dim() != gradient.cols() {
            return Err(invalid(format!(
                "sampler dimension {} does not match the {} gradient columns",
                sampler.dim(),
                gradient.cols()
            )));
        }
        if gradient.rows() == 0 || gradient.cols() == 0 {
            return Err(invalid("gradient must be non-empty"));
        }
        Ok(Self {
            gradient,
            curvature,
            sampler,
        })
    }

    /// Uses the default sample count with the given seed.
    pub fn with_seed(gradient: DenseMatrix, curvature: CurvatureSpec, seed: u64) -> Result<Self> {
        let n = gradient.cols();
        let sampler = SphereSampler::new(n.max(1), crate::sphere::DEFAULT_SAMPLES, seed)?;
        Self::new(gradient, curvature, sampler)
    }

    pub fn gradient(&self) -> &DenseMatrix {
        &self.gradient
    }

    pub fn curvature(&self) -> &CurvatureSpec {
        &self.curvature
    }

    pub fn sampler(&self) -> &SphereSampler {
        &self.sampler
    }
}

/// Optimal singular values for a given gradient spectrum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReducedSolution {
    pub sigma_star: Vec<f64>,
    pub objective: f64,
    /// Sup-norm of the projected first-order condition.
    pub stationarity_residual: f64,
    /// Largest standard error of the gradient estimate (0 on exact paths).
    pub gradient_std_err: f64,
    pub iterations: usize,
    pub path: SolverPath,
    /// Present on the kink path.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<KinkCertificate>,
}

/// Full solution of a [`ModelProblem`].
#[derive(Debug, Clone)]
pub struct SpectrumSolution {
    pub sigma: Vec<f64>,
    pub sigma_star: Vec<f64>,
    pub q_star: DenseMatrix,
    pub objective: f64,
    pub stationarity_residual: f64,
    pub gradient_std_err: f64,
    pub iterations: usize,
    pub path: SolverPath,
    pub certificate: Option<KinkCertificate>,
}

impl SpectrumSolution {
    pub fn homogenization(&self) -> HomogenizationReport {
        homogenization_report(&self.sigma, &self.sigma_star)
    }
}

/// Solves the model for `problem`, choosing the path from the curvature variant.
pub fn solve(problem: &ModelProblem, opts: &SolverOptions) -> Result<SpectrumSolution> {
    let g = &problem.gradient;
    let (m, n) = g.shape();
    let svd = svd_compact(g)?;
    let sigma = svd.sigma.clone();
    let h = &problem.curvature;

    let reduced = if g.is_zero() {
        ReducedSolution {
            sigma_star: vec![0.0; sigma.len()],
            objective: 0.0,
            stationarity_residual: 0.0,
            gradient_std_err: 0.0,
            iterations: 0,
            path: default_path(h),
            certificate: None,
        }
    } else {
        match *h {
            CurvatureSpec::Quadratic { c } => solve_quadratic(&sigma, n, c)?,
            CurvatureSpec::Power { c, alpha: 0.0 } => solve_quadratic(&sigma, n, c)?,
            CurvatureSpec::Quartic { c } => quartic_solution(&sigma, n, c)?,
            CurvatureSpec::Power { c, alpha: 2.0 } => quartic_solution(&sigma, n, c)?,
            CurvatureSpec::Kink { a, b, r_tilde } => solve_kink(
                &sigma,
                m,
                KinkParams { a, b, r_tilde },
                &problem.sampler,
                opts,
            )?,
            _ => solve_generic(&sigma, h, &problem.sampler, opts)?,
        }
    };
    let q_star = svd.compose(&reduced.sigma_star);
    Ok(SpectrumSolution {
        sigma,
        sigma_star: reduced.sigma_star,
        q_star,
        objective: reduced.objective,
        stationarity_residual: reduced.stationarity_residual,
        gradient_std_err: reduced.gradient_std_err,
        iterations: reduced.iterations,
        path: reduced.path,
        certificate: reduced.certificate,
    })
}

fn default_path(h: &CurvatureSpec) -> SolverPath {
    match *h {
        CurvatureSpec::Quadratic { .. } => SolverPath::QuadraticClosedForm,
        CurvatureSpec::Power { alpha: 0.0, .. } => SolverPath::QuadraticClosedForm,
        CurvatureSpec::Quartic { .. } => SolverPath::QuarticFixedPoint,
        CurvatureSpec::Power { alpha: 2.0, .. } => SolverPath::QuarticFixedPoint,
        CurvatureSpec::Kink { .. } => SolverPath::KinkParametric,
        _ => SolverPath::GenericProjectedGradient,
    }
}

fn check_sigma(sigma: &[f64], n: usize) -> Result<()> {
    if sigma.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(invalid("singular values must be finite and nonnegative"));
    }
    if sigma.len() > n {
        return Err(invalid(format!(
            "{} singular values exceed the column dimension {n}",
            sigma.len()
        )));
    }
    Ok(())
}

/// `σ*ⱼ = n σⱼ / (2c)`, the minimizer for `H(r) = c r²`.
pub fn solve_quadratic(sigma: &[f64], n: usize, c: f64) -> Result<ReducedSolution> {
    check_sigma(sigma, n)?;
    if !(c > 0.0) {
        return Err(invalid("quadratic coefficient must be positive"));
    }
    let nf = n as f64;
    let sigma_star: Vec<f64> = sigma.iter().map(|s| nf * s / (2.0 * c)).collect();
    let objective = -dot(sigma, &sigma_star) + c * dot(&sigma_star, &sigma_star) / nf;
    let residual = sigma
        .iter()
        .zip(&sigma_star)
        .map(|(s, t)| (2.0 * c * t / nf - s).abs())
        .fold(0.0, f64::max);
    Ok(ReducedSolution {
        sigma_star,
        objective,
        stationarity_residual: residual,
        gradient_std_err: 0.0,
        iterations: 0,
        path: SolverPath::QuadraticClosedForm,
        certificate: None,
    })
}

/// Output of [`solve_quartic_fixed_point`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuarticFixedPoint {
    pub sigma_star: Vec<f64>,
    /// `D = ½ Σ (σ*ᵢ)²`.
    pub d: f64,
    pub iterations: usize,
    /// `max_j |t_j³ + D t_j - n(n+2)σⱼ/(8c)|` at the returned point.
    pub residual: f64,
}

/// Solves `t³ + D t = n(n+2)σⱼ/(8c)` for all `j` with `D = ½ Σ t²`, the stationarity
/// system for `H(r) = c r⁴`.
///
/// Given `D`, each cubic has a unique nonnegative root, found by Newton from the
/// right. `D` is then relaxed halfway toward `½ Σ t²`.
pub fn solve_quartic_fixed_point(sigma: &[f64], n: usize, c: f64) -> Result<QuarticFixedPoint> {
    check_sigma(sigma, n)?;
    if !(c > 0.0) {
        return Err(invalid("quartic coefficient must be positive"));
    }
    let nf = n as f64;
    let rhs: Vec<f64> = sigma
        .iter()
        .map(|s| nf * (nf + 2.0) * s / (8.0 * c))
        .collect();
    let scale = rhs.iter().fold(1.0f64, |a, b| a.max(*b));
    let tol = 1e-13 * scale;
    let mut t = vec![0.0; rhs.len()];
    let mut d = 0.0;
    let mut last_residual = f64::INFINITY;
    for it in 1..=QUARTIC_MAX_ITERATIONS {
        for (tj, &b) in t.iter_mut().zip(&rhs) {
            *tj = cubic_root(d, b);
        }
        let target = 0.5 * dot(&t, &t);
        let residual = cubic_residual(&t, &rhs);
        if residual <= tol || (target == d && residual >= last_residual) {
            return Ok(QuarticFixedPoint {
                d: target,
                sigma_star: t.clone(),
                iterations: it,
                residual: cubic_residual(&t, &rhs),
            });
        }
        last_residual = residual;
        d = 0.5 * d + 0.5 * target;
    }
    Err(Error::NonConvergence {
        what: "quartic fixed point",
        iterations: QUARTIC_MAX_ITERATIONS,
        residual: cubic_residual(&t, &rhs),
    })
}

fn cubic_residual(t: &[f64], rhs: &[f64]) -> f64 {
    let d = 0.5 * dot(t, t);
    t.iter()
        .zip(rhs)
        .map(|(x, b)| (x * x * x + d * x - b).abs())
        .fold(0.0, f64::max)
}

/// Nonnegative root of `t³ + d t = b` for `d, b ≥ 0`.
fn cubic_root(d: f64, b: f64) -> f64 {
    if b == 0.0 {
        return 0.0;
    }
    // f is convex and increasing on t ≥ 0 and f(t₀) ≥ 0, so Newton decreases monotonically.
    let mut t = b.max(1.0).cbrt();
    for _ in 0..200 {
        let f = t * t * t + d * t - b;
        let step = f / (3.0 * t * t + d);
        let next = t - step;
        if !(next < t) || next <= 0.0 {
            break;
        }
        t = next;
        if step <= 4.0 * f64::EPSILON * t {
            break;
        }
    }
    t
}

fn quartic_solution(sigma: &[f64], n: usize, c: f64) -> Result<ReducedSolution> {
    let fp = solve_quartic_fixed_point(sigma, n, c)?;
    let eval = ExactExpectation::Quartic { c, n };
    let (value, grad) = eval.value_and_gradient(&fp.sigma_star);
    let objective = value.mean - dot(sigma, &fp.sigma_star);
    let residual = projected_residual(
        &fp.sigma_star,
        &grad
            .iter()
            .zip(sigma)
            .map(|(g, s)| g.mean - s)
            .collect::<Vec<_>>(),
    );
    Ok(ReducedSolution {
        sigma_star: fp.sigma_star,
        objective,
        stationarity_residual: residual,
        gradient_std_err: 0.0,
        iterations: fp.iterations,
        path: SolverPath::QuarticFixedPoint,
        certificate: None,
    })
}

/// Projected-gradient minimization for an arbitrary curvature function.
///
/// The expectation is evaluated in closed form or by quadrature when `H` allows it
/// (unless `opts.expectation` forces Monte Carlo), otherwise on one fixed bank of
/// samples from `sampler` so every iterate sees the same random numbers.
pub fn solve_generic(
    sigma: &[f64],
    h: &CurvatureSpec,
    sampler: &SphereSampler,
    opts: &SolverOptions,
) -> Result<ReducedSolution> {
    let n = sampler.dim();
    check_sigma(sigma, n)?;
    if opts.check_assumption1 && !assumption1_holds(h, &log_grid(1e-3, 1e3, 61)) {
        return Err(invalid(format!(
            "{} curvature fails the convexity of H(sqrt(x)); disable the check to solve anyway",
            h.name()
        )));
    }
    match (opts.expectation, ExactExpectation::for_curvature(h, n)) {
        (ExpectationMode::Auto, Some(exact)) => solve_generic_with(sigma, &exact, opts),
        _ => {
            let mc = MonteCarloExpectation::from_sampler(h.clone(), sampler, sigma.len());
            solve_generic_with(sigma, &mc, opts)
        }
    }
}

/// Projected gradient with Barzilai-Borwein steps and Armijo backtracking on
/// `-σ·σ̃ + E H`, using the supplied expectation oracle.
pub fn solve_generic_with(
    sigma: &[f64],
    oracle: &dyn SphereExpectation,
    opts: &SolverOptions,
) -> Result<ReducedSolution> {
    check_sigma(sigma, oracle.dim())?;
    let smax = sigma.iter().fold(0.0f64, |a, b| a.max(*b));
    if smax == 0.0 {
        return Ok(ReducedSolution {
            sigma_star: vec![0.0; sigma.len()],
            objective: 0.0,
            stationarity_residual: 0.0,
            gradient_std_err: 0.0,
            iterations: 0,
            path: SolverPath::GenericProjectedGradient,
            certificate: None,
        });
    }

    let evaluate = |x: &[f64]| -> (f64, Vec<f64>, f64) {
        let (v, g) = oracle.value_and_gradient(x);
        let se = g.iter().fold(0.0f64, |a, e| a.max(e.std_err));
        let grad = g.iter().zip(sigma).map(|(e, s)| e.mean - s).collect();
        (v.mean - dot(sigma, x), grad, se)
    };

    let mut x: Vec<f64> = sigma.iter().map(|s| s / smax).collect();
    let (mut f, mut g, mut se) = evaluate(&x);
    let mut step = 1.0;
    for it in 0..opts.max_iterations {
        let residual = projected_residual(&x, &g);
        if residual <= opts.tol.max(3.0 * se) {
            return Ok(ReducedSolution {
                sigma_star: x,
                objective: f,
                stationarity_residual: residual,
                gradient_std_err: se,
                iterations: it,
                path: SolverPath::GenericProjectedGradient,
                certificate: None,
            });
        }

        let slack = 16.0 * f64::EPSILON * (f.abs() + 1.0);
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial: Vec<f64> = x
                .iter()
                .zip(&g)
                .map(|(xi, gi)| (xi - step * gi).max(0.0))
                .collect();
            let moved: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
            if moved.iter().all(|d| *d == 0.0) {
                break;
            }
            let magnitude = trial.iter().fold(0.0f64, |a, b| a.max(*b));
            if magnitude > DIVERGENCE_LIMIT {
                return Err(Error::Divergence { magnitude });
            }
            let (ft, gt, set) = evaluate(&trial);
            if ft <= f + ARMIJO * dot(&g, &moved) + slack {
                accepted = Some((trial, moved, ft, gt, set));
                break;
            }
            step *= 0.5;
        }
        let Some((trial, moved, ft, gt, set)) = accepted else {
            return Err(Error::NonConvergence {
                what: "projected gradient line search",
                iterations: it,
                residual,
            });
        };

        let dg: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&moved, &dg);
        step = if sy > 0.0 {
            (dot(&moved, &moved) / sy).clamp(1e-12, 1e12)
        } else {
            (step * 2.0).min(1e12)
        };
        x = trial;
        f = ft;
        g = gt;
        se = set;
    }
    Err(Error::NonConvergence {
        what: "projected gradient",
        iterations: opts.max_iterations,
        residual: projected_residual(&x, &g),
    })
}

/// Sup-norm of the projected gradient on the nonnegative orthant.
fn projected_residual(x: &[f64], g: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .map(|(xi, gi)| if *xi > 0.0 { gi.abs() } else { (-gi).max(0.0) })
        .fold(0.0, f64::max)
}

/// Kink curvature: returns `σ* = (r̃, …, r̃)` when a kink certificate exists,
/// otherwise falls back to Monte Carlo projected (sub)gradient descent.
///
/// `rows` is the row count `m` of the gradient; `m < n` is rejected.
pub fn solve_kink(
    sigma: &[f64],
    rows: usize,
    kink: KinkParams,
    sampler: &SphereSampler,
    opts: &SolverOptions,
) -> Result<ReducedSolution> {
    let n = sampler.dim();
    check_sigma(sigma, n)?;
    if rows < n || sigma.len() != n {
        return Err(Error::Unsupported(format!(
            "kink path needs m >= n with n singular values (m = {rows}, n = {n}, k = {})",
            sigma.len()
        )));
    }
    if sigma.iter().any(|s| *s <= 0.0) {
        return Err(invalid("kink path needs a full-rank gradient"));
    }
    let cert = kink_certificate(sigma, kink, sampler, 1.0)?;
    let spec = CurvatureSpec::from(kink);
    if cert.feasible {
        let sigma_star = vec![kink.r_tilde; n];
        // ‖Qζ‖ = r̃ for every unit ζ when Q = r̃ U V^T with square V.
        let objective = -kink.r_tilde * sigma.iter().sum::<f64>() + spec.value(kink.r_tilde);
        return Ok(ReducedSolution {
            sigma_star,
            objective,
            stationarity_residual: cert.moment_residual,
            gradient_std_err: 0.0,
            iterations: cert.iterations,
            path: SolverPath::KinkParametric,
            certificate: Some(cert),
        });
    }
    let mc = MonteCarloExpectation::from_sampler(spec, sampler, n);
    let mut fallback = solve_generic_with(sigma, &mc, opts)?;
    fallback.certificate = Some(cert);
    Ok(fallback)
}

/// Pairwise ratio comparison between a gradient spectrum and an update spectrum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairCheck {
    pub i: usize,
    pub j: usize,
    pub input_ratio: f64,
    pub output_ratio: f64,
    pub pass: bool,
}

/// Result of [`homogenization_report`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HomogenizationReport {
    pub pairs: Vec<PairCheck>,
    pub all_pass: bool,
    /// Smallest `input_ratio - output_ratio` over all pairs (`∞ - ∞` counts as 0).
    pub worst_margin: f64,
}

/// `max(a, b) / min(a, b)` with `0/0 = 1` and `x/0 = ∞`.
pub fn spread_ratio(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == 0.0 {
        1.0
    } else if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Checks that every pair of update singular values is at most as spread out as
/// the corresponding pair of gradient singular values.
pub fn homogenization_report(sigma: &[f64], sigma_star: &[f64]) -> HomogenizationReport {
    assert_eq!(
        sigma.len(),
        sigma_star.len(),
        "spectra must have equal length"
    );
    let mut pairs = Vec::new();
    let mut worst = f64::INFINITY;
    for i in 0..sigma.len() {
        for j in i + 1..sigma.len() {
            let input_ratio = spread_ratio(sigma[i], sigma[j]);
            let output_ratio = spread_ratio(sigma_star[i], sigma_star[j]);
            let pass = output_ratio <= input_ratio + HOMOGENIZATION_TOLERANCE;
            let margin = if input_ratio.is_infinite() && output_ratio.is_infinite() {
                0.0
            } else {
                input_ratio - output_ratio
            };
            worst = worst.min(margin);
            pairs.push(PairCheck {
                i,
                j,
                input_ratio,
                output_ratio,
                pass,
            });
        }
    }
    HomogenizationReport {
        all_pass: pairs.iter().all(|p| p.pass),
        pairs,
        worst_margin: if worst.is_finite() { worst } else { 0.0 },
    }
}

/// Pairs `(i, j)` where `σᵢ > σⱼ` but `σ*ᵢ < σ*ⱼ - tol`.
pub fn ordering_violations(sigma: &[f64], sigma_star: &[f64], tol: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..sigma.len() {
        for j in 0..sigma.len() {
            if sigma[i] >= sigma[j] && sigma_star[i] < sigma_star[j] - tol {
                out.push((i, j));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;

    fn quartic_grid_search(sigma: &[f64; 2], n: usize, c: f64) -> [f64; 2] {
        let mut best = (f64::INFINITY, [0.0, 0.0]);
        for i in 0..=2000 {
            for j in 0..=2000 {
                let x = [i as f64 * 1e-3, j as f64 * 1e-3];
                let f = crate::sphere::quartic_expectation(&x, n, c).unwrap()
                    - sigma[0] * x[0]
                    - sigma[1] * x[1];
                if f < best.0 {
                    best = (f, x);
                }
            }
        }
        best.1
    }

    #[test]
    fn quadratic_closed_form() {
        let s = solve_quadratic(&[3.0, 1.0, 0.0], 4, 2.0).unwrap();
        assert_eq!(s.sigma_star, vec![3.0, 1.0, 0.0]);
        assert!(s.stationarity_residual < 1e-15);
        let doubled = solve_quadratic(&[3.0, 1.0, 0.0], 4, 4.0).unwrap();
        for (a, b) in s.sigma_star.iter().zip(&doubled.sigma_star) {
            assert_eq!(*a, 2.0 * b);
        }
    }

    #[test]
    fn quartic_symmetric_identity() {
        let fp = solve_quartic_fixed_point(&[1.0, 1.0], 2, 1.0).unwrap();
        let s = 0.5f64.cbrt();
        for v in &fp.sigma_star {
            assert!((v - s).abs() < 1e-12, "{v}");
        }
        assert!(fp.residual <= 1e-10);
        let grid = quartic_grid_search(&[1.0, 1.0], 2, 1.0);
        assert!(
            (grid[0] - s).abs() <= 1e-3 && (grid[1] - s).abs() <= 1e-3,
            "{grid:?}"
        );
    }

    #[test]
    fn quartic_zero_and_ratio() {
        let fp = solve_quartic_fixed_point(&[0.0, 0.0, 0.0], 3, 1.0).unwrap();
        assert_eq!(fp.sigma_star, vec![0.0; 3]);
        assert_eq!(fp.d, 0.0);

        let fp = solve_quartic_fixed_point(&[2.0, 1.0], 2, 1.0).unwrap();
        let ratio = fp.sigma_star[0] / fp.sigma_star[1];
        assert!(ratio > 1.0 && ratio < 2.0, "{ratio}");
        assert!(fp.residual <= 1e-10);
        let grid = quartic_grid_search(&[2.0, 1.0], 2, 1.0);
        for (a, b) in fp.sigma_star.iter().zip(&grid) {
            assert!((a - b).abs() <= 1e-3, "{fp:?} vs {grid:?}");
        }
    }

    #[test]
    fn quartic_zero_entries_stay_zero() {
        let fp = solve_quartic_fixed_point(&[2.5, 0.0, 1.0], 5, 0.7).unwrap();
        assert_eq!(fp.sigma_star[1], 0.0);
        assert!(fp.sigma_star[0] > 0.0 && fp.sigma_star[2] > 0.0);
    }

    #[test]
    fn generic_matches_quartic_fixed_point() {
        let sigma = [2.7, 1.2, 0.4, 0.0];
        let h = CurvatureSpec::quartic(1.3).unwrap();
        let sampler = SphereSampler::new(6, 1000, 0).unwrap();
        let opts = SolverOptions {
            tol: 1e-12,
            ..SolverOptions::default()
        };
        let generic = solve_generic(&sigma, &h, &sampler, &opts).unwrap();
        let fp = solve_quartic_fixed_point(&sigma, 6, 1.3).unwrap();
        for (a, b) in generic.sigma_star.iter().zip(&fp.sigma_star) {
            assert!((a - b).abs() <= 1e-9 * b.max(1.0), "{generic:?} vs {fp:?}");
        }
        assert_eq!(generic.sigma_star[3], 0.0);
    }

    #[test]
    fn generic_monte_carlo_quadratic() {
        let sigma = [1.5, 0.5];
        let h = CurvatureSpec::quadratic(1.0).unwrap();
        let sampler = SphereSampler::new(2, 200_000, 4).unwrap();
        let opts = SolverOptions {
            expectation: ExpectationMode::MonteCarlo,
            ..SolverOptions::default()
        };
        let s = solve_generic(&sigma, &h, &sampler, &opts).unwrap();
        assert!(s.gradient_std_err > 0.0);
        // closed form σ* = σ; the MC solution carries O(std err) relative error
        for (a, b) in s.sigma_star.iter().zip(&sigma) {
            assert!((a - b).abs() < 0.02, "{s:?}");
        }
    }

    #[test]
    fn solve_dispatch_and_alignment() {
        let g = DenseMatrix::from_rows(&[vec![2.0, 0.5, 0.0], vec![0.3, 1.0, 0.2]]).unwrap();
        let problem =
            ModelProblem::with_seed(g.clone(), CurvatureSpec::quartic(1.0).unwrap(), 0).unwrap();
        let sol = solve(&problem, &SolverOptions::default()).unwrap();
        assert_eq!(sol.path, SolverPath::QuarticFixedPoint);
        assert!(sol.objective < 0.0);
        assert!(sol.homogenization().all_pass);
        let gap = crate::theorem_checks::alignment_gap(&g, &sol.q_star).unwrap();
        assert!(gap.abs() < 1e-10, "{gap}");
    }

    #[test]
    fn zero_gradient_short_circuits() {
        let g = DenseMatrix::zeros(3, 2);
        let problem =
            ModelProblem::with_seed(g, CurvatureSpec::kink(0.0, 1.0, 1.0).unwrap(), 0).unwrap();
        let sol = solve(&problem, &SolverOptions::default()).unwrap();
        assert!(sol.q_star.is_zero());
        assert_eq!(sol.iterations, 0);
    }

    #[test]
    fn non_coercive_curvature_diverges() {
        // linear H with slope below the gradient scale: the objective is unbounded below
        let h = CurvatureSpec::power(0.01, -1.0).unwrap();
        let sampler = SphereSampler::new(2, 2000, 0).unwrap();
        let opts = SolverOptions {
            check_assumption1: false,
            ..SolverOptions::default()
        };
        let err = solve_generic(&[2.0, 1.0], &h, &sampler, &opts).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }), "{err:?}");
        assert!(solve_generic(&[2.0, 1.0], &h, &sampler, &SolverOptions::default()).is_err());
    }

    #[test]
    fn kink_orthogonalizes() {
        let sigma = [2.0, 1.0];
        let kink = KinkParams {
            a: 0.0,
            b: 100.0 * 2.0 * 2.0,
            r_tilde: 1.0,
        };
        let sampler = SphereSampler::new(2, 200_000, 0).unwrap();
        let sol = solve_kink(&sigma, 2, kink, &sampler, &SolverOptions::default()).unwrap();
        assert_eq!(sol.path, SolverPath::KinkParametric);
        assert_eq!(sol.sigma_star, vec![1.0, 1.0]);
        assert!(sol.certificate.unwrap().feasible);
        assert!(solve_kink(
            &sigma,
            1,
            kink,
            &SphereSampler::new(2, 1000, 0).unwrap(),
            &SolverOptions::default()
        )
        .is_err());
    }

    #[test]
    fn narrow_kink_falls_back() {
        let sigma = [2.0, 1.0];
        let kink = KinkParams {
            a: 0.0,
            b: 3.5,
            r_tilde: 1.0,
        };
        let sampler = SphereSampler::new(2, 20_000, 0).unwrap();
        let sol = solve_kink(&sigma, 2, kink, &sampler, &SolverOptions::default()).unwrap();
        assert_eq!(sol.path, SolverPath::GenericProjectedGradient);
        assert!(!sol.certificate.as_ref().unwrap().feasible);
        assert!(sol.sigma_star[0] >= sol.sigma_star[1]);
    }

    #[test]
    fn homogenization_conventions() {
        let r = homogenization_report(&[1.0, 1.0], &[0.5, 0.5]);
        assert!(r.all_pass);
        let r = homogenization_report(&[1.0, 0.0], &[0.8, 0.0]);
        assert!(r.all_pass && r.pairs[0].input_ratio.is_infinite());
        let r = homogenization_report(&[2.0, 1.0], &[3.0, 1.0]);
        assert!(!r.all_pass);
        assert!((r.worst_margin + 1.0).abs() < 1e-15);
        assert_eq!(spread_ratio(0.0, 0.0), 1.0);
        assert_eq!(
            ordering_violations(&[2.0, 1.0], &[1.0, 1.5], 1e-9),
            vec![(0, 1)]
        );
    }
}
