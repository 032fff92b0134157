//! Orthogonalized-gradient primitives: a Newton-Schulz approximation of the polar
//! factor and a one-step comparison of update rules on synthetic losses.

use serde::{Deserialize, Serialize};

use crate::curvature::{log_grid, CurvatureSpec};
use crate::error::{invalid, Error, Result};
use crate::linalg::{msgn_exact, singular_values, svd_compact, trace_inner, DenseMatrix};
use crate::solver::{solve, ModelProblem, SolverOptions};
use crate::sphere::{ExactExpectation, SphereExpectation, SphereSampler};

/// Iterate norms above this are reported as divergence.
pub const NS_DIVERGENCE_LIMIT: f64 = 1e6;

/// Coefficients of the odd quintic `p(x) = a x + b x³ + c x⁵` applied to singular values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NsCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl NsCoefficients {
    /// `p(1) = 1` and `p'(1) = 0`, so unit singular values are a superattracting fixed point.
    pub const DEFAULT: Self = Self {
        a: 2.5,
        b: -2.5,
        c: 1.0,
    };
    /// The widely used tuned triple. It moves small singular values up fast but
    /// settles in a band around 1 rather than at 1.
    pub const JORDAN: Self = Self {
        a: 3.4445,
        b: -4.7750,
        c: 2.0315,
    };
    /// Classic cubic iteration `1.5 x - 0.5 x³`.
    pub const CUBIC: Self = Self {
        a: 1.5,
        b: -0.5,
        c: 0.0,
    };

    /// The scalar map applied to each singular value per iteration.
    pub fn apply(&self, x: f64) -> f64 {
        let x2 = x * x;
        x * (self.a + x2 * (self.b + self.c * x2))
    }
}

impl Default for NsCoefficients {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// How the input is scaled before iterating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NsNormalization {
    /// Divide by the Frobenius norm, which bounds the spectral norm.
    #[default]
    Frobenius,
    /// Divide by a power-iteration estimate of the spectral norm.
    SpectralEstimate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NsConfig {
    pub iterations: usize,
    pub coefficients: NsCoefficients,
    pub normalization: NsNormalization,
}

impl Default for NsConfig {
    fn default() -> Self {
        Self {
            iterations: 8,
            coefficients: NsCoefficients::DEFAULT,
            normalization: NsNormalization::Frobenius,
        }
    }
}

/// Spectral norm estimate from 30 power iterations on `G^T G`, inflated by 1%.
fn spectral_estimate(g: &DenseMatrix) -> f64 {
    let n = g.cols();
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut est = 0.0;
    for _ in 0..30 {
        let gv = g.mul_vec(&v).expect("shape");
        let mut w = g.transpose().mul_vec(&gv).expect("shape");
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            // start vector orthogonal to the row space; fall back to a safe bound
            return g.frobenius_norm();
        }
        w.iter_mut().for_each(|x| *x /= norm);
        est = norm.sqrt();
        v = w;
    }
    1.01 * est
}

/// Approximates `msgn(G)` by iterating `X ← aX + b(XX^T)X + c(XX^T)²X`.
pub fn msgn_newton_schulz(g: &DenseMatrix, cfg: &NsConfig) -> Result<DenseMatrix> {
    if cfg.iterations == 0 {
        return Err(invalid("Newton-Schulz needs at least one iteration"));
    }
    if g.is_zero() {
        return Err(invalid("Newton-Schulz input must be nonzero"));
    }
    let scale = match cfg.normalization {
        NsNormalization::Frobenius => g.frobenius_norm(),
        NsNormalization::SpectralEstimate => spectral_estimate(g),
    };
    // iterate on the wide orientation so the Gram matrix is the smaller one
    let tall = g.rows() > g.cols();
    let mut x = if tall { g.transpose() } else { g.clone() }.scale(1.0 / scale);
    let NsCoefficients { a, b, c } = cfg.coefficients;
    for _ in 0..cfg.iterations {
        let gram = x.matmul(&x.transpose())?;
        let poly = gram.scale(b).add_scaled(&gram.matmul(&gram)?, c)?;
        x = x.scale(a).add_scaled(&poly.matmul(&x)?, 1.0)?;
        let norm = x.frobenius_norm();
        if !(norm <= NS_DIVERGENCE_LIMIT) {
            return Err(Error::Divergence { magnitude: norm });
        }
    }
    Ok(if tall { x.transpose() } else { x })
}

/// Update rules compared by [`compare_one_step`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateRule {
    Raw,
    MsgnExact,
    MsgnNs,
    ModelOptimal,
}

impl UpdateRule {
    pub const ALL: [Self; 4] = [Self::Raw, Self::MsgnExact, Self::MsgnNs, Self::ModelOptimal];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Raw => "raw",
            Self::MsgnExact => "msgn-exact",
            Self::MsgnNs => "msgn-ns",
            Self::ModelOptimal => "model-optimal",
        }
    }
}

/// `ℓ(Q) = -Tr(Q G^T) + E H(‖Qζ‖)`: the loss change when stepping by `-Q` from a
/// point with gradient `G`, for curvature with a deterministic sphere expectation.
#[derive(Debug, Clone)]
pub struct SyntheticLoss {
    gradient: DenseMatrix,
    expectation: ExactExpectation,
}

impl SyntheticLoss {
    pub fn new(gradient: DenseMatrix, curvature: &CurvatureSpec) -> Result<Self> {
        let expectation =
            ExactExpectation::for_curvature(curvature, gradient.cols()).ok_or_else(|| {
                Error::Unsupported(format!(
                    "{} curvature has no deterministic expectation for the synthetic loss",
                    curvature.name()
                ))
            })?;
        Ok(Self {
            gradient,
            expectation,
        })
    }

    pub fn gradient(&self) -> &DenseMatrix {
        &self.gradient
    }

    /// `ℓ(Q)`; the realized decrease of the step is `-ℓ(Q)`.
    pub fn value(&self, q: &DenseMatrix) -> Result<f64> {
        let linear = trace_inner(q, &self.gradient)?;
        let curvature = match self.expectation {
            // E (ζ^T A ζ)² = (tr(A)² + 2 tr(A²)) / (n(n+2)) with A = Q^T Q
            ExactExpectation::Quartic { c, n } => {
                let a = q.transpose().matmul(q)?;
                let tr: f64 = (0..n).map(|i| a[(i, i)]).sum();
                let tr2: f64 = a.as_slice().iter().map(|x| x * x).sum();
                let nf = n as f64;
                c * (tr * tr + 2.0 * tr2) / (nf * (nf + 2.0))
            }
            ExactExpectation::Quadratic { c, n } => c * q.frobenius_norm().powi(2) / n as f64,
            ref e @ ExactExpectation::Power { .. } => e.value(&singular_values(q)?).mean,
        };
        Ok(curvature - linear)
    }
}

/// Outcome for one rule.
#[derive(Debug, Clone, Serialize)]
pub struct RuleOutcome {
    pub rule: UpdateRule,
    /// Step direction `D`; the update is `-γ D`.
    #[serde(skip)]
    pub direction: DenseMatrix,
    /// `(γ, realized decrease)` over the shared grid, plus `γ = 1` for the model-optimal rule.
    pub scan: Vec<(f64, f64)>,
    pub best_gamma: f64,
    pub best_decrease: f64,
    /// Best step along the ray after golden-section refinement around the grid optimum.
    pub refined_gamma: f64,
    pub refined_decrease: f64,
    /// Decrease predicted by the model at `best_gamma`.
    pub model_predicted_decrease: f64,
}

/// Result of [`compare_one_step`].
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonResult {
    pub gamma_grid: Vec<f64>,
    pub outcomes: Vec<RuleOutcome>,
    /// Singular values of `G` and the diagonal of `U^T msgn_ns(G) V`.
    pub sigma: Vec<f64>,
    pub ns_spectrum: Vec<f64>,
    /// Pairs with `σᵢ > σⱼ` whose Newton-Schulz images are strictly reversed.
    pub ns_order_inversions: usize,
}

impl ComparisonResult {
    pub fn outcome(&self, rule: UpdateRule) -> &RuleOutcome {
        self.outcomes
            .iter()
            .find(|o| o.rule == rule)
            .expect("all rules present")
    }
}

/// 25 log-spaced step sizes in `[1e-4, 1e1]`.
pub fn default_gamma_grid() -> Vec<f64> {
    log_grid(1e-4, 1e1, 25)
}

/// Compares the best realized one-step decrease of raw, orthogonalized and
/// model-optimal updates on `loss`. The model-optimal direction solves the model
/// with `model` curvature; it already carries a step scale, so `γ = 1` is scanned
/// in addition to the grid.
pub fn compare_one_step(
    loss: &SyntheticLoss,
    model: &CurvatureSpec,
    gamma_grid: &[f64],
    ns: &NsConfig,
    sampler: &SphereSampler,
    opts: &SolverOptions,
) -> Result<ComparisonResult> {
    if gamma_grid.is_empty() || gamma_grid.iter().any(|g| !(*g > 0.0)) {
        return Err(invalid("step grid must be non-empty and positive"));
    }
    let g = loss.gradient();
    let problem = ModelProblem::new(g.clone(), model.clone(), *sampler)?;
    let solution = solve(&problem, opts)?;
    let model_loss = SyntheticLoss::new(g.clone(), model).ok();

    let ns_out = msgn_newton_schulz(g, ns)?;
    let svd = svd_compact(g)?;
    let ns_spectrum: Vec<f64> = (0..svd.sigma.len())
        .map(|l| {
            (0..g.rows())
                .map(|i| {
                    (0..g.cols())
                        .map(|j| svd.u[(i, l)] * ns_out[(i, j)] * svd.v[(j, l)])
                        .sum::<f64>()
                })
                .sum()
        })
        .collect();
    let mut inversions = 0;
    for i in 0..svd.sigma.len() {
        for j in i + 1..svd.sigma.len() {
            if svd.sigma[i] > svd.sigma[j] && ns_spectrum[i] < ns_spectrum[j] {
                inversions += 1;
            }
        }
    }

    let mut outcomes = Vec::new();
    for rule in UpdateRule::ALL {
        let direction = match rule {
            UpdateRule::Raw => g.clone(),
            UpdateRule::MsgnExact => msgn_exact(g)?,
            UpdateRule::MsgnNs => ns_out.clone(),
            UpdateRule::ModelOptimal => solution.q_star.clone(),
        };
        let decrease = |gamma: f64| -> Result<f64> { Ok(-loss.value(&direction.scale(gamma))?) };
        let mut scan = Vec::with_capacity(gamma_grid.len() + 1);
        for &gamma in gamma_grid {
            scan.push((gamma, decrease(gamma)?));
        }
        if rule == UpdateRule::ModelOptimal {
            scan.push((1.0, decrease(1.0)?));
        }
        let (best_gamma, best_decrease) = scan.iter().cloned().fold(
            (0.0, f64::NEG_INFINITY),
            |acc, p| if p.1 > acc.1 { p } else { acc },
        );

        // the decrease is concave in γ, so golden section on the neighbouring bracket is exact
        let mut sorted: Vec<f64> = scan.iter().map(|p| p.0).collect();
        sorted.sort_by(f64::total_cmp);
        let pos = sorted.iter().position(|g| *g == best_gamma).unwrap_or(0);
        let lo = if pos == 0 { 0.0 } else { sorted[pos - 1] };
        let hi = if pos + 1 == sorted.len() {
            sorted[pos] * 2.0
        } else {
            sorted[pos + 1]
        };
        let (mut refined_gamma, mut refined_decrease) = golden_max(&decrease, lo, hi)?;
        if refined_decrease < best_decrease {
            refined_gamma = best_gamma;
            refined_decrease = best_decrease;
        }
        let model_predicted_decrease = match &model_loss {
            Some(m) => -m.value(&direction.scale(best_gamma))?,
            None => f64::NAN,
        };
        outcomes.push(RuleOutcome {
            rule,
            direction,
            scan,
            best_gamma,
            best_decrease,
            refined_gamma,
            refined_decrease,
            model_predicted_decrease,
        });
    }
    Ok(ComparisonResult {
        gamma_grid: gamma_grid.to_vec(),
        outcomes,
        sigma: svd.sigma,
        ns_spectrum,
        ns_order_inversions: inversions,
    })
}

fn golden_max(f: &dyn Fn(f64) -> Result<f64>, mut a: f64, mut b: f64) -> Result<(f64, f64)> {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let (mut f1, mut f2) = (f(x1)?, f(x2)?);
    for _ in 0..200 {
        if (b - a) <= 1e-15 * b.abs().max(1e-300) {
            break;
        }
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2)?;
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1)?;
        }
    }
    Ok(if f1 >= f2 { (x1, f1) } else { (x2, f2) })
}
