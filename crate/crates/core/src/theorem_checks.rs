//! Numerical certificates for the structural results of the model: singular-space
//! alignment, the kink certificate for orthogonal updates, and the converse gap for
//! smooth curvature.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curvature::{CurvatureSpec, KinkParams};
use crate::error::{invalid, Error, Result};
use crate::linalg::{singular_values, trace_inner, DenseMatrix};
use crate::sphere::{SphereSampler, BLOCK_SIZE};

/// Ridge weights used by the continuation in [`kink_certificate`].
const RIDGE_SCHEDULE: [f64; 7] = [1.0, 1e-2, 1e-4, 1e-6, 1e-8, 1e-10, 1e-12];
const NEWTON_STEPS_PER_STAGE: usize = 50;

/// `Σ σᵢ(Q) σᵢ(G) - Tr(Q G^T)`; nonnegative by von Neumann and zero when the
/// singular spaces of `Q` and `G` are aligned.
pub fn alignment_gap(g: &DenseMatrix, q: &DenseMatrix) -> Result<f64> {
    let inner = trace_inner(q, g)?;
    let sg = singular_values(g)?;
    let sq = singular_values(q)?;
    let bound: f64 = sg.iter().zip(&sq).map(|(a, b)| a * b).sum();
    Ok(bound - inner)
}

/// A bounded random variable `η(ζ) ∈ [A, B]` on a Monte Carlo sample with
/// `E[η ζ ζ^T] ≈ diag(σ) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinkCertificate {
    /// One value per sample.
    #[serde(skip)]
    pub eta: Vec<f64>,
    /// Sup-norm of `(1/S) Σ ηₛ ζₛζₛ^T - diag(σ)/scale` over all entries.
    pub moment_residual: f64,
    /// `3 √(n/S) B`.
    pub threshold: f64,
    pub feasible: bool,
    /// Total Newton steps taken.
    pub iterations: usize,
    pub samples: usize,
    pub eta_min: f64,
    pub eta_max: f64,
    pub eta_mean: f64,
}

/// Searches for `ηₛ ∈ [A, B]` with `(1/S) Σ ηₛ ζₛζₛ^T = diag(σ)/scale`.
///
/// The moment equations are solved through the dual of
/// `min (1/S) Σ ½(ηₛ - η₀)²` subject to them and the box, with a small ridge
/// on the multipliers that is driven toward zero. The primal iterate is
/// `ηₛ = clip(η₀ + φₛ^T λ, A, B)` where `φₛ` stacks the distinct entries of
/// `ζₛζₛ^T`, so the box holds exactly at every step. When the equations are
/// infeasible the multipliers are held back by the ridge and the residual
/// reports how far the best found `η` is from satisfying them.
pub fn kink_certificate(
    sigma: &[f64],
    kink: KinkParams,
    sampler: &SphereSampler,
    scale: f64,
) -> Result<KinkCertificate> {
    let n = sampler.dim();
    if sigma.len() != n {
        return Err(Error::Unsupported(format!(
            "kink certificate needs one singular value per column ({} given, n = {n})",
            sigma.len()
        )));
    }
    if sigma.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(invalid("kink certificate needs positive singular values"));
    }
    if !(scale > 0.0) {
        return Err(invalid("certificate scale must be positive"));
    }
    let KinkParams { a, b, .. } = kink;
    let bank = sampler.draw(n);
    let samples = bank.len();

    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let d = pairs.len();
    let target: Vec<f64> = pairs
        .iter()
        .map(|&(i, j)| if i == j { sigma[i] / scale } else { 0.0 })
        .collect();
    let mut features = vec![0.0; samples * d];
    for (s, row) in features.chunks_mut(d).enumerate() {
        let z = bank.sample(s);
        for (f, &(i, j)) in row.iter_mut().zip(&pairs) {
            *f = z[i] * z[j];
        }
    }

    let mean_sigma = sigma.iter().sum::<f64>() / n as f64;
    let eta0 = (n as f64 * mean_sigma / scale).clamp(a, b);
    let problem = DualProblem {
        features: &features,
        target: &target,
        d,
        a,
        b,
        eta0,
    };

    let mut lambda = vec![0.0; d];
    let mut iterations = 0;
    if b > a {
        for &rho in RIDGE_SCHEDULE.iter() {
            iterations += problem.newton(&mut lambda, rho);
        }
    }

    let eta: Vec<f64> = features
        .chunks(d)
        .map(|phi| problem.eta(phi, &lambda))
        .collect();
    let moments = problem.moments(&lambda);
    let moment_residual = moments
        .iter()
        .zip(&target)
        .map(|(m, t)| (m - t).abs())
        .fold(0.0, f64::max);
    let threshold = 3.0 * (n as f64 / samples as f64).sqrt() * b;
    let eta_min = eta.iter().cloned().fold(f64::INFINITY, f64::min);
    let eta_max = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let eta_mean = eta.iter().sum::<f64>() / samples as f64;
    Ok(KinkCertificate {
        eta,
        moment_residual,
        threshold,
        feasible: moment_residual <= threshold,
        iterations,
        samples,
        eta_min,
        eta_max,
        eta_mean,
    })
}

struct DualProblem<'a> {
    features: &'a [f64],
    target: &'a [f64],
    d: usize,
    a: f64,
    b: f64,
    eta0: f64,
}

/// Per-block partial sums, merged in block order for determinism.
struct Partial {
    value: f64,
    grad: Vec<f64>,
    hess: Vec<f64>,
}

impl DualProblem<'_> {
    fn eta(&self, phi: &[f64], lambda: &[f64]) -> f64 {
        (self.eta0 + dot(phi, lambda)).clamp(self.a, self.b)
    }

    /// Antiderivative of `clip(·, A, B)` vanishing at 0 (valid for `A ≥ 0`).
    fn psi(&self, u: f64) -> f64 {
        let (a, b) = (self.a, self.b);
        if u <= a {
            a * u
        } else if u <= b {
            0.5 * (u * u + a * a)
        } else {
            0.5 * (b * b + a * a) + b * (u - b)
        }
    }

    fn moments(&self, lambda: &[f64]) -> Vec<f64> {
        self.accumulate(lambda, false).grad
    }

    /// Sums `ψ(uₛ)`, `ηₛ φₛ` and, if requested, `φₛφₛ^T` over unclipped samples, averaged.
    fn accumulate(&self, lambda: &[f64], hessian: bool) -> Partial {
        let d = self.d;
        let samples = self.features.len() / d;
        let parts: Vec<Partial> = self
            .features
            .par_chunks(BLOCK_SIZE * d)
            .map(|block| {
                let mut p = Partial {
                    value: 0.0,
                    grad: vec![0.0; d],
                    hess: vec![0.0; if hessian { d * d } else { 0 }],
                };
                for phi in block.chunks(d) {
                    let u = self.eta0 + dot(phi, lambda);
                    p.value += self.psi(u);
                    let eta = u.clamp(self.a, self.b);
                    for (g, f) in p.grad.iter_mut().zip(phi) {
                        *g += eta * f;
                    }
                    if hessian && u > self.a && u < self.b {
                        for i in 0..d {
                            for j in i..d {
                                p.hess[i * d + j] += phi[i] * phi[j];
                            }
                        }
                    }
                }
                p
            })
            .collect();
        let mut total = Partial {
            value: 0.0,
            grad: vec![0.0; d],
            hess: vec![0.0; if hessian { d * d } else { 0 }],
        };
        for p in parts {
            total.value += p.value;
            total
                .grad
                .iter_mut()
                .zip(&p.grad)
                .for_each(|(x, y)| *x += y);
            total
                .hess
                .iter_mut()
                .zip(&p.hess)
                .for_each(|(x, y)| *x += y);
        }
        let inv = 1.0 / samples as f64;
        total.value *= inv;
        total.grad.iter_mut().for_each(|g| *g *= inv);
        total.hess.iter_mut().for_each(|h| *h *= inv);
        if hessian {
            for i in 0..d {
                for j in 0..i {
                    total.hess[i * d + j] = total.hess[j * d + i];
                }
            }
        }
        total
    }

    /// Dual objective, gradient and generalized Hessian at `lambda` with ridge `rho`.
    fn dual(&self, lambda: &[f64], rho: f64, hessian: bool) -> Partial {
        let mut p = self.accumulate(lambda, hessian);
        p.value += -dot(self.target, lambda) + 0.5 * rho * dot(lambda, lambda);
        #[allow(clippy::needless_range_loop)]
        for i in 0..self.d {
            p.grad[i] += -self.target[i] + rho * lambda[i];
            if hessian {
                p.hess[i * self.d + i] += rho;
            }
        }
        p
    }

    /// Damped semismooth Newton on the ridge-regularized dual; returns steps taken.
    fn newton(&self, lambda: &mut Vec<f64>, rho: f64) -> usize {
        let d = self.d;
        for step in 0..NEWTON_STEPS_PER_STAGE {
            let cur = self.dual(lambda, rho, true);
            let gnorm = cur.grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
            if gnorm <= 1e-13 * (1.0 + self.b) {
                return step;
            }
            let Some(dir) = cholesky_solve(&cur.hess, &cur.grad, d) else {
                return step;
            };
            let slope = -dot(&cur.grad, &dir);
            let mut t = 1.0;
            let mut moved = false;
            for _ in 0..40 {
                let trial: Vec<f64> = lambda.iter().zip(&dir).map(|(l, s)| l - t * s).collect();
                let next = self.dual(&trial, rho, false);
                if next.value <= cur.value - 1e-4 * t * slope.abs() + 1e-15 * cur.value.abs() {
                    *lambda = trial;
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
            if !moved {
                return step;
            }
        }
        NEWTON_STEPS_PER_STAGE
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `H x = g` for symmetric positive definite `H` (row-major `d x d`).
fn cholesky_solve(h: &[f64], g: &[f64], d: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = h[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    let mut y = vec![0.0; d];
    for i in 0..d {
        let s: f64 = (0..i).map(|k| l[i * d + k] * y[k]).sum();
        y[i] = (g[i] - s) / l[i * d + i];
    }
    let mut x = vec![0.0; d];
    for i in (0..d).rev() {
        let s: f64 = (i + 1..d).map(|k| l[k * d + i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i * d + i];
    }
    Some(x)
}

/// Best match of `Σ` by `(H'(c)/n) I`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConverseGap {
    /// `min_c ‖Σ - (H'(c)/n) I‖_∞ / ‖Σ‖_∞`.
    pub gap: f64,
    /// Minimizing radius.
    pub c: f64,
}

/// How far `c·msgn(G)` is from stationarity for smooth `H`: the stationarity
/// condition would force `Σ = (H'(c)/n) I`.
///
/// The grid is scanned, then the minimizer is refined by bisection on
/// `H'(c)/n = (σ_max + σ_min)/2` inside the grid's range.
pub fn converse_gap(g: &DenseMatrix, h: &CurvatureSpec, c_grid: &[f64]) -> Result<ConverseGap> {
    if !h.is_differentiable() {
        return Err(invalid(format!(
            "{} curvature is not differentiable",
            h.name()
        )));
    }
    if c_grid.is_empty() || c_grid.iter().any(|c| !(*c > 0.0)) {
        return Err(invalid("c grid must be non-empty and positive"));
    }
    let sigma = singular_values(g)?;
    let smax = sigma[0];
    let smin = *sigma.last().expect("non-empty spectrum");
    if !(smin > crate::linalg::RANK_TOLERANCE * smax) {
        return Err(Error::RankDeficient {
            ratio: if smax > 0.0 { smin / smax } else { 0.0 },
        });
    }
    let n = g.cols() as f64;
    let gap_at = |c: f64| {
        let level = h.derivative(c) / n;
        (smax - level).abs().max((smin - level).abs()) / smax
    };
    let mut best = ConverseGap {
        gap: f64::INFINITY,
        c: c_grid[0],
    };
    for &c in c_grid {
        let v = gap_at(c);
        if v < best.gap {
            best = ConverseGap { gap: v, c };
        }
    }

    let (lo, hi) = c_grid.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), c| {
        (lo.min(*c), hi.max(*c))
    });
    let level = 0.5 * (smax + smin);
    let f = |c: f64| h.derivative(c) / n - level;
    if f(lo) <= 0.0 && f(hi) >= 0.0 {
        let (mut a, mut b) = (lo, hi);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            if f(mid) < 0.0 {
                a = mid;
            } else {
                b = mid;
            }
        }
        for c in [a, b] {
            let v = gap_at(c);
            if v < best.gap {
                best = ConverseGap { gap: v, c };
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curvature::log_grid;

    #[test]
    fn alignment_examples() {
        let g = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![0.5, -1.0], vec![3.0, 0.0]]).unwrap();
        assert!(alignment_gap(&g, &g.scale(2.0)).unwrap().abs() < 1e-10);
        let g = DenseMatrix::diag(2, 2, &[2.0, 1.0]);
        let q = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!((alignment_gap(&g, &q).unwrap() - 3.0).abs() < 1e-12);
        assert!(alignment_gap(&g, &DenseMatrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn constant_sigma_certificate() {
        let sampler = SphereSampler::new(3, 50_000, 1).unwrap();
        let kink = KinkParams {
            a: 0.5,
            b: 5.0,
            r_tilde: 1.0,
        };
        let cert = kink_certificate(&[1.0, 1.0, 1.0], kink, &sampler, 1.0).unwrap();
        assert!(cert.feasible, "{cert:?}");
        assert!(cert.eta.iter().all(|e| (0.5..=5.0).contains(e)));
        assert!((cert.eta_mean - 3.0).abs() < 0.05, "{cert:?}");
    }

    #[test]
    fn no_kink_means_no_certificate() {
        let sampler = SphereSampler::new(2, 20_000, 1).unwrap();
        let kink = KinkParams {
            a: 1.0,
            b: 1.0 + 1e-12,
            r_tilde: 1.0,
        };
        let cert = kink_certificate(&[2.0, 1.0], kink, &sampler, 1.0).unwrap();
        assert!(!cert.feasible);
        let cert = kink_certificate(&[0.5, 0.5], kink, &sampler, 1.0).unwrap();
        assert!(cert.feasible, "{cert:?}");
    }

    #[test]
    fn wide_interval_certificate() {
        let sampler = SphereSampler::new(3, 200_000, 0).unwrap();
        let kink = KinkParams {
            a: 0.0,
            b: 50.0,
            r_tilde: 1.0,
        };
        let cert = kink_certificate(&[3.0, 2.0, 1.0], kink, &sampler, 1.0).unwrap();
        assert!(cert.feasible && cert.moment_residual <= 0.02, "{cert:?}");
    }

    #[test]
    fn certificate_rejects_wide_gradients() {
        let sampler = SphereSampler::new(3, 1000, 0).unwrap();
        let kink = KinkParams {
            a: 0.0,
            b: 5.0,
            r_tilde: 1.0,
        };
        assert!(matches!(
            kink_certificate(&[1.0, 1.0], kink, &sampler, 1.0),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn converse_examples() {
        let h = CurvatureSpec::quartic(1.0).unwrap();
        let grid = log_grid(1e-2, 1e2, 100);
        let g = DenseMatrix::diag(2, 2, &[2.0, 1.0]);
        let cg = converse_gap(&g, &h, &grid).unwrap();
        assert!((cg.gap - 0.25).abs() < 1e-9, "{cg:?}");
        let o = DenseMatrix::from_rows(&[vec![0.6, -0.8], vec![0.8, 0.6]])
            .unwrap()
            .scale(1.5);
        let cg = converse_gap(&o, &h, &grid).unwrap();
        assert!(cg.gap <= 1e-8, "{cg:?}");
        // H'(c) = 4c³ = n s = 3
        assert!((cg.c - 0.75f64.cbrt()).abs() < 1e-8);
        let kink = CurvatureSpec::kink(0.0, 1.0, 1.0).unwrap();
        assert!(converse_gap(&g, &kink, &grid).is_err());
    }
}
