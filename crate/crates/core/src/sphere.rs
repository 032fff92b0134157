//! Expectations over the uniform unit sphere of functions of `‖Qζ‖`.
//!
//! After the spectral reduction `‖Qζ‖² = Σ σ̃ᵢ² ζᵢ²`, where only the first
//! `k = min(m, n)` coordinates of the `n`-dimensional `ζ` carry weight. This
//! module evaluates `E H(‖Qζ‖)` and its gradient in `σ̃` three ways:
//!
//! * closed forms for quadratic and quartic `H`,
//! * a one-dimensional Laplace-transform integral for `H(r) = c r^(2+α)` with
//!   `0 < α < 2` (deterministic and exactly symmetric in the coordinates),
//! * seeded Monte Carlo for everything else.
//!
//! Monte Carlo streams are split into fixed blocks, each seeded from
//! `(seed, block)`, so results are bit-identical regardless of thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use statrs::function::gamma::{gamma, ln_gamma};

use crate::curvature::CurvatureSpec;
use crate::error::{invalid, Result};
use crate::numeric::{Estimate, Moments, GAUSS_LEGENDRE_8};

/// Default number of Monte Carlo samples.
pub const DEFAULT_SAMPLES: usize = 100_000;
/// Samples per independently seeded block.
pub const BLOCK_SIZE: usize = 1024;

/// Seeded sampler of uniform directions on the unit sphere in `R^n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SphereSampler {
    dim: usize,
    samples: usize,
    seed: u64,
}

impl SphereSampler {
    pub fn new(dim: usize, samples: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("sphere dimension must be at least 1"));
        }
        if samples < 2 {
            return Err(invalid("at least two Monte Carlo samples are required"));
        }
        Ok(Self { dim, samples, seed })
    }

    pub fn with_defaults(dim: usize) -> Self {
        Self {
            dim,
            samples: DEFAULT_SAMPLES,
            seed: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_samples(self, samples: usize) -> Self {
        Self { samples, ..self }
    }

    /// Draws the whole stream and keeps the first `width` coordinates of each direction.
    pub fn draw(&self, width: usize) -> SampleBank {
        assert!(
            width <= self.dim,
            "cannot keep more coordinates than the dimension"
        );
        let mut coords = vec![0.0; self.samples * width];
        if width > 0 {
            coords
                .par_chunks_mut(BLOCK_SIZE * width)
                .enumerate()
                .for_each(|(block, out)| self.fill_block(block as u64, width, out));
        }
        SampleBank {
            dim: self.dim,
            width,
            samples: self.samples,
            coords,
        }
    }

    fn fill_block(&self, block: u64, width: usize, out: &mut [f64]) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(block);
        let mut g = vec![0.0; self.dim];
        for row in out.chunks_mut(width) {
            let norm = loop {
                for v in g.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                let nrm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                if nrm > 0.0 {
                    break nrm;
                }
            };
            for (o, v) in row.iter_mut().zip(&g) {
                *o = v / norm;
            }
        }
    }
}

/// A materialized stream of sphere samples (leading coordinates only).
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBank {
    dim: usize,
    width: usize,
    samples: usize,
    coords: Vec<f64>,
}

impl SampleBank {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.samples
    }

    pub fn is_empty(&self) -> bool {
        self.samples == 0
    }

    pub fn sample(&self, s: usize) -> &[f64] {
        &self.coords[s * self.width..(s + 1) * self.width]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks(self.width.max(1)).take(self.samples)
    }

    /// Per-block reduction in parallel, merged in block order.
    pub(crate) fn reduce_blocks<T, F, M>(
        &self,
        init: impl Fn() -> T + Sync + Send,
        fold: F,
        merge: M,
    ) -> T
    where
        T: Send,
        F: Fn(&mut T, &[f64]) + Sync + Send,
        M: Fn(&mut T, T),
    {
        let width = self.width.max(1);
        let parts: Vec<T> = self
            .coords
            .par_chunks(BLOCK_SIZE * width)
            .map(|block| {
                let mut acc = init();
                for zeta in block.chunks(width) {
                    fold(&mut acc, zeta);
                }
                acc
            })
            .collect();
        let mut total = init();
        for p in parts {
            merge(&mut total, p);
        }
        total
    }
}

/// The vector `(ζ₁², …, ζₙ²)` of a unit direction.
#[derive(Debug, Clone, PartialEq)]
pub struct SquaredCoordWeights(Vec<f64>);

impl SquaredCoordWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(invalid("squared-coordinate weights must be nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid(format!(
                "squared-coordinate weights sum to {total}, not 1"
            )));
        }
        Ok(Self(weights))
    }

    pub fn from_direction(zeta: &[f64]) -> Result<Self> {
        Self::new(zeta.iter().map(|z| z * z).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// `Σ aᵢ wᵢ`.
    pub fn weighted_sum(&self, a: &[f64]) -> f64 {
        self.0.iter().zip(a).map(|(w, x)| w * x).sum()
    }
}

/// `E ζᵢ²` on the unit sphere in `R^n`.
pub fn second_moment(n: usize) -> f64 {
    1.0 / n as f64
}

/// Closed form of `E c‖Qζ‖²` for singular values `σ̃`.
pub fn quadratic_expectation(sigma_tilde: &[f64], n: usize, c: f64) -> Result<f64> {
    check_len(sigma_tilde, n)?;
    Ok(c * sigma_tilde.iter().map(|s| s * s).sum::<f64>() / n as f64)
}

/// Closed form of `E c‖Qζ‖⁴`: `c/(n(n+2)) [(Σσ̃²)² + 2Σσ̃⁴]`.
pub fn quartic_expectation(sigma_tilde: &[f64], n: usize, c: f64) -> Result<f64> {
    check_len(sigma_tilde, n)?;
    let s2: f64 = sigma_tilde.iter().map(|s| s * s).sum();
    let s4: f64 = sigma_tilde.iter().map(|s| (s * s) * (s * s)).sum();
    let nf = n as f64;
    Ok(c / (nf * (nf + 2.0)) * (s2 * s2 + 2.0 * s4))
}

fn check_len(sigma_tilde: &[f64], n: usize) -> Result<()> {
    if sigma_tilde.len() > n {
        return Err(invalid(format!(
            "{} singular values exceed the sphere dimension {n}",
            sigma_tilde.len()
        )));
    }
    Ok(())
}

/// Monte Carlo estimate of `E H(‖Qζ‖)`.
pub fn mc_expectation(
    sigma_tilde: &[f64],
    h: &CurvatureSpec,
    sampler: &SphereSampler,
) -> Result<Estimate> {
    check_len(sigma_tilde, sampler.dim())?;
    let bank = sampler.draw(sigma_tilde.len());
    Ok(MonteCarloExpectation::new(h.clone(), bank).value(sigma_tilde))
}

/// Monte Carlo estimate of the gradient `2 E[q'(Σσ̃²ζ²) ζᵢ²] σ̃ᵢ`, `q(x) = H(√x)`,
/// on the same samples as [`mc_expectation`].
pub fn mc_weighted_grad(
    sigma_tilde: &[f64],
    h: &CurvatureSpec,
    sampler: &SphereSampler,
) -> Result<Vec<Estimate>> {
    check_len(sigma_tilde, sampler.dim())?;
    let bank = sampler.draw(sigma_tilde.len());
    Ok(MonteCarloExpectation::new(h.clone(), bank).gradient(sigma_tilde))
}

/// An evaluator of `E H(‖Qζ‖)` as a function of the singular values `σ̃`.
pub trait SphereExpectation: Sync {
    /// Ambient dimension `n` of `ζ`.
    fn dim(&self) -> usize;
    fn value(&self, sigma_tilde: &[f64]) -> Estimate;
    fn gradient(&self, sigma_tilde: &[f64]) -> Vec<Estimate>;
    /// Value and gradient together; evaluators may share work.
    fn value_and_gradient(&self, sigma_tilde: &[f64]) -> (Estimate, Vec<Estimate>) {
        (self.value(sigma_tilde), self.gradient(sigma_tilde))
    }
    /// True when the evaluator has no sampling error.
    fn is_exact(&self) -> bool;
}

/// Deterministic evaluators for polynomial and power-law curvature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExactExpectation {
    Quadratic {
        c: f64,
        n: usize,
    },
    Quartic {
        c: f64,
        n: usize,
    },
    /// `c r^(2+α)` with `0 < α < 2`, through [`power_moment`].
    Power {
        c: f64,
        alpha: f64,
        n: usize,
    },
}

impl ExactExpectation {
    /// The deterministic evaluator for `h`, if one exists.
    pub fn for_curvature(h: &CurvatureSpec, n: usize) -> Option<Self> {
        match *h {
            CurvatureSpec::Quadratic { c } => Some(Self::Quadratic { c, n }),
            CurvatureSpec::Quartic { c } => Some(Self::Quartic { c, n }),
            CurvatureSpec::Power { c, alpha: 0.0 } => Some(Self::Quadratic { c, n }),
            CurvatureSpec::Power { c, alpha: 2.0 } => Some(Self::Quartic { c, n }),
            CurvatureSpec::Power { c, alpha } if alpha > 0.0 && alpha < 2.0 => {
                Some(Self::Power { c, alpha, n })
            }
            _ => None,
        }
    }
}

impl SphereExpectation for ExactExpectation {
    fn dim(&self) -> usize {
        match *self {
            Self::Quadratic { n, .. } | Self::Quartic { n, .. } | Self::Power { n, .. } => n,
        }
    }

    fn value(&self, s: &[f64]) -> Estimate {
        let v = match *self {
            Self::Quadratic { c, n } => c * s.iter().map(|x| x * x).sum::<f64>() / n as f64,
            Self::Quartic { c, n } => quartic_expectation(s, n, c).expect("checked by caller"),
            Self::Power { c, alpha, n } => {
                let a: Vec<f64> = s.iter().map(|x| x * x).collect();
                c * power_moment(&a, n, 1.0 + alpha / 2.0).0
            }
        };
        Estimate::exact(v)
    }

    fn gradient(&self, s: &[f64]) -> Vec<Estimate> {
        self.value_and_gradient(s).1
    }

    fn value_and_gradient(&self, s: &[f64]) -> (Estimate, Vec<Estimate>) {
        match *self {
            Self::Quadratic { c, n } => {
                let nf = n as f64;
                let v = c * s.iter().map(|x| x * x).sum::<f64>() / nf;
                let g = s
                    .iter()
                    .map(|x| Estimate::exact(2.0 * c * x / nf))
                    .collect();
                (Estimate::exact(v), g)
            }
            Self::Quartic { c, n } => {
                let nf = n as f64;
                let k = c / (nf * (nf + 2.0));
                let s2: f64 = s.iter().map(|x| x * x).sum();
                let s4: f64 = s.iter().map(|x| (x * x) * (x * x)).sum();
                let g = s
                    .iter()
                    .map(|x| Estimate::exact(k * (4.0 * s2 * x + 8.0 * x * x * x)))
                    .collect();
                (Estimate::exact(k * (s2 * s2 + 2.0 * s4)), g)
            }
            Self::Power { c, alpha, n } => {
                let a: Vec<f64> = s.iter().map(|x| x * x).collect();
                let (v, da) = power_moment(&a, n, 1.0 + alpha / 2.0);
                let g = da
                    .iter()
                    .zip(s)
                    .map(|(d, x)| Estimate::exact(c * d * 2.0 * x))
                    .collect();
                (Estimate::exact(c * v), g)
            }
        }
    }

    fn is_exact(&self) -> bool {
        true
    }
}

/// `E_ζ[x^p]` and `∂/∂aᵢ E_ζ[x^p]` for `x = Σ aᵢ ζᵢ²`, `ζ` uniform on the sphere in `R^n`,
/// `aᵢ ≥ 0` and `1 < p < 2`.
///
/// Writes `Y = Σ aᵢ gᵢ² = R² x` with Gaussian `g`, `R² ~ χ²ₙ` independent of `x`, and
/// evaluates `E Y^p = β/Γ(1-β) ∫₀^∞ (E Y - E[Y e^{-tY}]) t^{-β-1} dt` (`β = p - 1`)
/// using the Laplace transform `E e^{-tY} = Π (1 + 2 t aᵢ)^{-1/2}`. The integral is
/// taken in `log t` with Gauss-Legendre panels and analytic tails.
pub fn power_moment(a: &[f64], n: usize, p: f64) -> (f64, Vec<f64>) {
    assert!(p > 1.0 && p < 2.0, "power_moment needs 1 < p < 2");
    assert!(a.len() <= n);
    let beta = p - 1.0;
    let mu: f64 = a.iter().sum();
    if mu <= 0.0 {
        return (0.0, vec![0.0; a.len()]);
    }
    let ah: Vec<f64> = a.iter().map(|x| x / mu).collect();

    const S_LO: f64 = -36.0;
    const S_HI: f64 = 50.0;
    const PANEL: f64 = 0.5;
    let panels = ((S_HI - S_LO) / PANEL) as usize;

    let k = ah.len();
    let mut value = 0.0;
    let mut grad = vec![0.0; k];
    let mut scratch = vec![0.0; k];
    let mut eval = |tau: f64, g: &mut [f64]| -> f64 {
        // ln L = -1/2 Σ ln(1 + 2τâⱼ)
        let mut ln_l = 0.0;
        let mut s_sum = 0.0;
        let mut d_sum = 0.0;
        for (j, &x) in ah.iter().enumerate() {
            let u = 2.0 * tau * x;
            let l1p = u.ln_1p();
            scratch[j] = l1p;
            ln_l -= 0.5 * l1p;
            s_sum += x / (1.0 + u);
            d_sum += x * u / (1.0 + u);
        }
        let l = ln_l.exp();
        let one_minus_l = -ln_l.exp_m1();
        for (j, gj) in g.iter_mut().enumerate() {
            let u = 2.0 * tau * ah[j];
            *gj = -(ln_l - 2.0 * scratch[j]).exp_m1() + tau * l * s_sum / (1.0 + u);
        }
        one_minus_l + l * d_sum
    };

    let mut gbuf = vec![0.0; k];
    for panel in 0..panels {
        let mid = S_LO + (panel as f64 + 0.5) * PANEL;
        for &(x, w) in GAUSS_LEGENDRE_8.iter() {
            let s = mid + 0.5 * PANEL * x;
            let tau = s.exp();
            let weight = 0.5 * PANEL * w * tau.powf(-beta);
            value += weight * eval(tau, &mut gbuf);
            for (acc, gi) in grad.iter_mut().zip(&gbuf) {
                *acc += weight * gi;
            }
        }
    }

    // left tail: integrand ∝ τ near 0
    let tau_lo = S_LO.exp();
    let f_lo = eval(tau_lo, &mut gbuf);
    let left = tau_lo.powf(-beta) / (1.0 - beta);
    value += f_lo * left;
    for (acc, gi) in grad.iter_mut().zip(&gbuf) {
        *acc += gi * left;
    }
    // right tail: integrand -> 1
    let right = S_HI.exp().powf(-beta) / beta;
    value += right;
    for acc in grad.iter_mut() {
        *acc += right;
    }

    let scale = beta / gamma(1.0 - beta);
    let nh = n as f64 / 2.0;
    let radial = (p * std::f64::consts::LN_2 + ln_gamma(nh + p) - ln_gamma(nh)).exp();
    let value = scale * value * mu.powf(p) / radial;
    let gscale = scale * mu.powf(p - 1.0) / radial;
    (value, grad.into_iter().map(|g| g * gscale).collect())
}

/// Monte Carlo evaluator over a fixed sample bank (common random numbers).
#[derive(Debug, Clone)]
pub struct MonteCarloExpectation {
    curvature: CurvatureSpec,
    bank: SampleBank,
}

impl MonteCarloExpectation {
    pub fn new(curvature: CurvatureSpec, bank: SampleBank) -> Self {
        Self { curvature, bank }
    }

    pub fn from_sampler(curvature: CurvatureSpec, sampler: &SphereSampler, width: usize) -> Self {
        Self::new(curvature, sampler.draw(width))
    }

    pub fn bank(&self) -> &SampleBank {
        &self.bank
    }

    fn radius(sigma_tilde: &[f64], zeta: &[f64]) -> f64 {
        sigma_tilde
            .iter()
            .zip(zeta)
            .map(|(s, z)| s * s * z * z)
            .sum::<f64>()
            .sqrt()
    }
}

impl SphereExpectation for MonteCarloExpectation {
    fn dim(&self) -> usize {
        self.bank.dim()
    }

    fn value(&self, s: &[f64]) -> Estimate {
        debug_assert_eq!(s.len(), self.bank.width());
        let h = &self.curvature;
        self.bank
            .reduce_blocks(
                Moments::default,
                |m, zeta| m.push(h.value(Self::radius(s, zeta))),
                |a, b| a.merge(&b),
            )
            .estimate()
    }

    fn gradient(&self, s: &[f64]) -> Vec<Estimate> {
        self.value_and_gradient(s).1
    }

    fn value_and_gradient(&self, s: &[f64]) -> (Estimate, Vec<Estimate>) {
        debug_assert_eq!(s.len(), self.bank.width());
        let k = s.len();
        let h = &self.curvature;
        let all = self.bank.reduce_blocks(
            || vec![Moments::default(); k + 1],
            |m, zeta| {
                let r = Self::radius(s, zeta);
                m[0].push(h.value(r));
                let w = if r > 0.0 { h.slope_over_radius(r) } else { 0.0 };
                for i in 0..k {
                    let term = if s[i] == 0.0 || r == 0.0 {
                        0.0
                    } else {
                        w * zeta[i] * zeta[i] * s[i]
                    };
                    m[i + 1].push(term);
                }
            },
            |a, b| a.iter_mut().zip(&b).for_each(|(x, y)| x.merge(y)),
        );
        let value = all[0].estimate();
        (value, all[1..].iter().map(Moments::estimate).collect())
    }

    fn is_exact(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_are_unit_and_reproducible() {
        let sampler = SphereSampler::new(5, 3000, 42).unwrap();
        let bank = sampler.draw(5);
        for z in bank.iter() {
            let n: f64 = z.iter().map(|v| v * v).sum();
            assert!((n - 1.0).abs() < 1e-12);
            SquaredCoordWeights::from_direction(z).unwrap();
        }
        assert_eq!(bank, sampler.draw(5));
        let other = SphereSampler::new(5, 3000, 43).unwrap().draw(5);
        assert_ne!(bank, other);
        // the leading coordinates do not depend on how many are kept
        let narrow = sampler.draw(2);
        for s in 0..bank.len() {
            assert_eq!(&bank.sample(s)[..2], narrow.sample(s));
        }
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let sampler = SphereSampler::new(4, 20_000, 7).unwrap();
        let h = CurvatureSpec::kink(0.2, 3.0, 0.4).unwrap();
        let sigma = [1.0, 0.5, 0.25];
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| mc_weighted_grad(&sigma, &h, &sampler).unwrap());
        let many = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| mc_weighted_grad(&sigma, &h, &sampler).unwrap());
        assert_eq!(single, many);
    }

    #[test]
    fn squared_weights_validation() {
        assert!(SquaredCoordWeights::new(vec![0.5, 0.5]).is_ok());
        assert!(SquaredCoordWeights::new(vec![0.5, 0.6]).is_err());
        assert!(SquaredCoordWeights::new(vec![1.5, -0.5]).is_err());
        let w = SquaredCoordWeights::new(vec![0.25, 0.75]).unwrap();
        assert_eq!(w.weighted_sum(&[4.0, 8.0]), 7.0);
    }

    #[test]
    fn second_moment_values() {
        assert_eq!(second_moment(2), 0.5);
        assert_eq!(second_moment(1), 1.0);
        let sampler = SphereSampler::new(10, 1_000_000, 1).unwrap();
        let bank = sampler.draw(1);
        let mut m = Moments::default();
        bank.iter().for_each(|z| m.push(z[0] * z[0]));
        assert!(m.estimate().within(0.1, 3.0, 0.0), "{:?}", m.estimate());
    }

    #[test]
    fn quartic_closed_form_examples() {
        assert_eq!(quartic_expectation(&[1.0], 1, 1.0).unwrap(), 1.0);
        assert_eq!(quartic_expectation(&[1.0, 1.0], 2, 1.0).unwrap(), 1.0);
        assert_eq!(quartic_expectation(&[2.0, 1.0], 2, 1.0).unwrap(), 7.375);
        assert!(quartic_expectation(&[1.0, 1.0, 1.0], 2, 1.0).is_err());
    }

    #[test]
    fn mc_matches_quartic_closed_form() {
        let h = CurvatureSpec::quartic(1.0).unwrap();
        let sampler = SphereSampler::new(2, 1_000_000, 3).unwrap();
        let est = mc_expectation(&[2.0, 1.0], &h, &sampler).unwrap();
        assert!(est.within(7.375, 3.0, 0.0), "{est:?}");
    }

    #[test]
    fn mc_constant_radius_is_exact() {
        let h = CurvatureSpec::quadratic(1.0).unwrap();
        let sampler = SphereSampler::new(3, 5000, 0).unwrap();
        let est = mc_expectation(&[1.0, 1.0, 1.0], &h, &sampler).unwrap();
        assert!((est.mean - 1.0).abs() < 1e-12);
        assert!(est.std_err < 1e-12);
    }

    #[test]
    fn mc_quadratic_second_moment() {
        let h = CurvatureSpec::quadratic(1.0).unwrap();
        let sampler = SphereSampler::new(2, 200_000, 5).unwrap();
        let (a, b) = (1.7, 0.4);
        let est = mc_expectation(&[a, b], &h, &sampler).unwrap();
        assert!(est.within((a * a + b * b) / 2.0, 3.0, 0.0), "{est:?}");
        let g = mc_weighted_grad(&[a, b], &h, &sampler).unwrap();
        assert!(g[0].within(2.0 * a / 2.0, 3.0, 1e-12), "{g:?}");
        assert!(g[1].within(2.0 * b / 2.0, 3.0, 1e-12), "{g:?}");
    }

    #[test]
    fn mc_gradient_zero_at_origin() {
        let h = CurvatureSpec::kink(0.5, 2.0, 1.0).unwrap();
        let sampler = SphereSampler::new(3, 1000, 0).unwrap();
        let g = mc_weighted_grad(&[0.0, 0.0], &h, &sampler).unwrap();
        assert!(g.iter().all(|e| e.mean == 0.0 && e.std_err == 0.0));
    }

    fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], i: usize, step: f64) -> f64 {
        let mut hi = x.to_vec();
        let mut lo = x.to_vec();
        hi[i] += step;
        lo[i] -= step;
        (f(&hi) - f(&lo)) / (2.0 * step)
    }

    #[test]
    fn mc_gradient_matches_quartic_finite_differences() {
        let h = CurvatureSpec::quartic(1.0).unwrap();
        let sampler = SphereSampler::new(2, 1_000_000, 11).unwrap();
        let g = mc_weighted_grad(&[2.0, 1.0], &h, &sampler).unwrap();
        for i in 0..2 {
            let fd = central_difference(
                |x| quartic_expectation(x, 2, 1.0).unwrap(),
                &[2.0, 1.0],
                i,
                1e-5,
            );
            // relative 1e-3 agreement, well inside 3 standard errors at this sample size
            assert!(
                (g[i].mean - fd).abs() <= 1e-3 * fd.abs().max(1.0) + 3.0 * g[i].std_err,
                "{i}: {g:?} vs {fd}"
            );
        }
    }

    #[test]
    fn exact_gradients_match_finite_differences() {
        let sigma = [1.3, 0.7, 0.2, 0.0];
        for eval in [
            ExactExpectation::Quadratic { c: 0.7, n: 5 },
            ExactExpectation::Quartic { c: 1.3, n: 5 },
            ExactExpectation::Power {
                c: 2.0,
                alpha: 0.39,
                n: 5,
            },
            ExactExpectation::Power {
                c: 1.0,
                alpha: 1.5,
                n: 4,
            },
        ] {
            let g = eval.gradient(&sigma);
            for (i, gi) in g.iter().enumerate() {
                let fd = central_difference(|x| eval.value(x).mean, &sigma, i, 1e-6);
                assert!(
                    (gi.mean - fd).abs() < 1e-7,
                    "{eval:?} {i}: {} vs {fd}",
                    gi.mean
                );
            }
        }
    }

    #[test]
    fn power_moment_limits() {
        // p -> 1 recovers E x = Σa / n, p -> 2 recovers the quartic moment
        let a = [2.0, 0.5, 1.0];
        let n = 4;
        let lin = a.iter().sum::<f64>() / n as f64;
        let (v, _) = power_moment(&a, n, 1.0 + 1e-7);
        assert!((v - lin).abs() < 1e-5 * lin, "{v} vs {lin}");
        let s: Vec<f64> = a.iter().map(|x: &f64| x.sqrt()).collect();
        let quart = quartic_expectation(&s, n, 1.0).unwrap();
        let (v, _) = power_moment(&a, n, 2.0 - 1e-7);
        assert!((v - quart).abs() < 1e-5 * quart, "{v} vs {quart}");
        // a single unit weight in one dimension: x == 1 always
        let (v, _) = power_moment(&[1.0], 1, 1.37);
        assert!((v - 1.0).abs() < 1e-10, "{v}");
        // equal weights over the full sphere: x == 1 always
        let (v, g) = power_moment(&[0.5; 3], 3, 1.6);
        assert!((v - 0.5f64.powf(1.6)).abs() < 1e-10, "{v}");
        assert!((g[0] - g[2]).abs() < 1e-14);
    }

    #[test]
    fn power_moment_matches_monte_carlo() {
        let sigma = [1.8, 1.1, 0.3];
        let h = CurvatureSpec::power(1.5, 0.39).unwrap();
        let exact = ExactExpectation::for_curvature(&h, 5).unwrap();
        let sampler = SphereSampler::new(5, 400_000, 9).unwrap();
        let mc = MonteCarloExpectation::from_sampler(h, &sampler, 3);
        let (ev, eg) = exact.value_and_gradient(&sigma);
        let (mv, mg) = mc.value_and_gradient(&sigma);
        assert!(mv.within(ev.mean, 4.0, 0.0), "{mv:?} vs {ev:?}");
        for (m, e) in mg.iter().zip(&eg) {
            assert!(m.within(e.mean, 4.0, 0.0), "{m:?} vs {e:?}");
        }
    }

    #[test]
    fn power_moment_is_symmetric() {
        let (v1, g1) = power_moment(&[3.0, 1.0, 0.2], 6, 1.3);
        let (v2, g2) = power_moment(&[0.2, 3.0, 1.0], 6, 1.3);
        assert!((v1 - v2).abs() <= 1e-14 * v1);
        assert!((g1[0] - g2[1]).abs() <= 1e-14 * g1[0]);
        assert!((g1[2] - g2[0]).abs() <= 1e-14 * g1[2].abs().max(1.0));
    }
}
