//! Curvature probing from Taylor remainders.
//!
//! A layer with weights `W` feeds a loss `L` of its output. For a random weight
//! perturbation `δW` and an input `u`, the output moves along `d = δW u`; after
//! rescaling `d` to norm `r` the second-order-and-higher part of the loss is
//! `L(Wu + d) - L(Wu) - ⟨∇L(Wu), d⟩`. Averaging it over directions and inputs
//! estimates the curvature function `H(r)`, and a log-log fit over a window of
//! radii gives its growth exponent.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curvature::log_grid;
use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, DenseMatrix};
use crate::numeric::{ols, pairwise_sum, quantile, Moments};

/// Probe settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    /// Ascending positive radii.
    pub radii: Vec<f64>,
    pub direction_count: usize,
    pub input_count: usize,
    pub seed: u64,
    /// Inclusive `(r_lo, r_hi)` range used by the exponent fit.
    pub fit_window: (f64, f64),
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            radii: log_grid(10f64.powf(-1.5), 10.0, 24),
            direction_count: 100,
            input_count: 300,
            seed: 0,
            fit_window: (10f64.powf(0.5), 10.0),
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.radii.is_empty() || self.radii.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(invalid("radii must be positive and finite"));
        }
        if self.radii.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(invalid("radii must be strictly ascending"));
        }
        if self.direction_count == 0 || self.input_count == 0 {
            return Err(invalid("direction_count and input_count must be positive"));
        }
        let (lo, hi) = self.fit_window;
        let (first, last) = (self.radii[0], *self.radii.last().unwrap());
        if !(lo < hi) || lo < first * (1.0 - 1e-12) || hi > last * (1.0 + 1e-12) {
            return Err(invalid(format!(
                "fit window [{lo}, {hi}] must lie inside the radii range [{first}, {last}]"
            )));
        }
        if window_indices(&self.radii, self.fit_window).len() < 3 {
            return Err(invalid("fit window must contain at least three radii"));
        }
        Ok(())
    }
}

fn window_indices(radii: &[f64], (lo, hi): (f64, f64)) -> Vec<usize> {
    radii
        .iter()
        .enumerate()
        .filter(|(_, r)| **r >= lo * (1.0 - 1e-12) && **r <= hi * (1.0 + 1e-12))
        .map(|(i, _)| i)
        .collect()
}

/// Per-radius aggregates of `remainder / r²` and the fitted growth exponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub radii: Vec<f64>,
    pub mean_remainder_over_r2: Vec<f64>,
    pub std_err: Vec<f64>,
    pub q10: Vec<f64>,
    pub q50: Vec<f64>,
    pub q90: Vec<f64>,
    /// Fraction of negative remainders at each radius.
    pub negative_fraction: Vec<f64>,
    pub samples_per_radius: usize,
    /// Slope of `log(mean remainder)` against `log r` over the window; absent when
    /// some mean in the window is not positive.
    pub fitted_exponent: Option<f64>,
    pub fit_r_squared: Option<f64>,
    pub fit_window: (f64, f64),
    pub nonpositive_mean_in_window: bool,
}

/// A loss written as a function of one layer's output, one instance per input.
pub trait LayerLoss: Sync {
    fn output_dim(&self) -> usize;
    fn loss(&self, input: usize, v: &[f64]) -> f64;
    fn grad(&self, input: usize, v: &[f64]) -> Vec<f64>;
}

/// `L(v) = ½ v^T M v`.
#[derive(Debug, Clone)]
pub struct QuadraticLoss {
    m: DenseMatrix,
}

impl QuadraticLoss {
    /// Requires a symmetric matrix; positive semidefiniteness is the caller's concern.
    pub fn new(m: DenseMatrix) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(invalid("quadratic oracle matrix must be square"));
        }
        let asym = m.sub(&m.transpose())?.max_abs();
        if asym > 1e-12 * m.max_abs().max(1.0) {
            return Err(invalid("quadratic oracle matrix must be symmetric"));
        }
        Ok(Self { m })
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.m
    }
}

impl LayerLoss for QuadraticLoss {
    fn output_dim(&self) -> usize {
        self.m.rows()
    }

    fn loss(&self, _: usize, v: &[f64]) -> f64 {
        0.5 * dot(v, &self.m.mul_vec(v).expect("dimension checked"))
    }

    fn grad(&self, _: usize, v: &[f64]) -> Vec<f64> {
        self.m.mul_vec(v).expect("dimension checked")
    }
}

/// `L(v) = Σ |vᵢ|^p`, `p ≥ 2`.
#[derive(Debug, Clone, Copy)]
pub struct PurePowerLoss {
    pub dim: usize,
    pub p: f64,
}

impl LayerLoss for PurePowerLoss {
    fn output_dim(&self) -> usize {
        self.dim
    }

    fn loss(&self, _: usize, v: &[f64]) -> f64 {
        v.iter().map(|x| x.abs().powf(self.p)).sum()
    }

    fn grad(&self, _: usize, v: &[f64]) -> Vec<f64> {
        v.iter()
            .map(|x| self.p * x.signum() * x.abs().powf(self.p - 1.0))
            .collect()
    }
}

const GELU_K: f64 = 0.797_884_560_802_865_4;
const GELU_C: f64 = 0.044_715;

fn gelu(z: f64) -> f64 {
    0.5 * z * (1.0 + (GELU_K * (z + GELU_C * z * z * z)).tanh())
}

fn gelu_prime(z: f64) -> f64 {
    let t = (GELU_K * (z + GELU_C * z * z * z)).tanh();
    0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * GELU_K * (1.0 + 3.0 * GELU_C * z * z)
}

/// Cross-entropy of `logits` against class `label` and its gradient.
fn softmax_ce(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - mx).exp()).collect();
    let total: f64 = exps.iter().sum();
    let loss = total.ln() - (logits[label] - mx);
    let mut g: Vec<f64> = exps.iter().map(|e| e / total).collect();
    g[label] -= 1.0;
    (loss, g)
}

/// Layer sizes of the probe network.
pub const MLP_SIZES: [usize; 4] = [8, 16, 16, 10];

/// A small GELU network with a softmax cross-entropy head.
#[derive(Debug, Clone)]
pub struct TinyMlp {
    weights: Vec<DenseMatrix>,
    biases: Vec<Vec<f64>>,
}

impl TinyMlp {
    /// Weights drawn from `N(0, 1/fan_in)`, zero biases.
    pub fn random(rng: &mut impl Rng) -> Self {
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in MLP_SIZES.windows(2) {
            let scale = 1.0 / (w[0] as f64).sqrt();
            weights.push(DenseMatrix::from_fn(w[1], w[0], |_, _| {
                rng.sample::<f64, _>(StandardNormal) * scale
            }));
            biases.push(vec![0.0; w[1]]);
        }
        Self { weights, biases }
    }

    pub fn layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weight(&self, layer: usize) -> &DenseMatrix {
        &self.weights[layer]
    }

    /// Pre-activations of every layer for one input.
    fn forward(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut pre = Vec::with_capacity(self.layers());
        let mut a = x.to_vec();
        for l in 0..self.layers() {
            let mut z = self.weights[l].mul_vec(&a).expect("layer sizes match");
            z.iter_mut().zip(&self.biases[l]).for_each(|(z, b)| *z += b);
            a = if l + 1 < self.layers() {
                z.iter().map(|v| gelu(*v)).collect()
            } else {
                z.clone()
            };
            pre.push(z);
        }
        pre
    }

    /// Input to `layer` (the activation of the previous layer, or `x` itself).
    pub fn layer_input(&self, layer: usize, x: &[f64]) -> Vec<f64> {
        if layer == 0 {
            return x.to_vec();
        }
        self.forward(x)[layer - 1]
            .iter()
            .map(|v| gelu(*v))
            .collect()
    }

    /// Mean cross-entropy over a labelled set.
    pub fn mean_loss(&self, xs: &[Vec<f64>], labels: &[usize]) -> f64 {
        let losses: Vec<f64> = xs
            .iter()
            .zip(labels)
            .map(|(x, &y)| softmax_ce(self.forward(x).last().unwrap(), y).0)
            .collect();
        pairwise_sum(&losses) / xs.len() as f64
    }

    /// Full-batch gradient descent on the mean cross-entropy.
    pub fn train(&mut self, xs: &[Vec<f64>], labels: &[usize], steps: usize, lr: f64) {
        let layers = self.layers();
        let inv = 1.0 / xs.len() as f64;
        for _ in 0..steps {
            let mut gw_data: Vec<Vec<f64>> = self
                .weights
                .iter()
                .map(|w| vec![0.0; w.rows() * w.cols()])
                .collect();
            let mut gb: Vec<Vec<f64>> = self.biases.iter().map(|b| vec![0.0; b.len()]).collect();
            for (x, &y) in xs.iter().zip(labels) {
                let pre = self.forward(x);
                let (_, mut delta) = softmax_ce(&pre[layers - 1], y);
                for l in (0..layers).rev() {
                    let input: Vec<f64> = if l == 0 {
                        x.clone()
                    } else {
                        pre[l - 1].iter().map(|v| gelu(*v)).collect()
                    };
                    let cols = input.len();
                    for (i, d) in delta.iter().enumerate() {
                        gb[l][i] += d * inv;
                        for (j, a) in input.iter().enumerate() {
                            gw_data[l][i * cols + j] += d * a * inv;
                        }
                    }
                    if l > 0 {
                        let w = &self.weights[l];
                        delta = (0..cols)
                            .map(|j| {
                                (0..w.rows()).map(|i| w[(i, j)] * delta[i]).sum::<f64>()
                                    * gelu_prime(pre[l - 1][j])
                            })
                            .collect();
                    }
                }
            }
            for l in 0..layers {
                let w = &self.weights[l];
                let updated: Vec<f64> = w
                    .as_slice()
                    .iter()
                    .zip(&gw_data[l])
                    .map(|(a, g)| a - lr * g)
                    .collect();
                self.weights[l] =
                    DenseMatrix::new(w.rows(), w.cols(), updated).expect("finite update");
                self.biases[l]
                    .iter_mut()
                    .zip(&gb[l])
                    .for_each(|(b, g)| *b -= lr * g);
            }
        }
    }

    /// The loss of each labelled input as a function of the output of `layer`
    /// (bias included).
    pub fn tail(&self, layer: usize, labels: Vec<usize>) -> MlpTail<'_> {
        assert!(layer < self.layers());
        MlpTail {
            net: self,
            layer,
            labels,
        }
    }
}

/// The part of a [`TinyMlp`] after a given layer, with one label per input.
#[derive(Debug, Clone)]
pub struct MlpTail<'a> {
    net: &'a TinyMlp,
    layer: usize,
    labels: Vec<usize>,
}

impl MlpTail<'_> {
    fn pre_activations(&self, v: &[f64]) -> Vec<Vec<f64>> {
        let net = self.net;
        let mut pre = vec![v.to_vec()];
        for l in self.layer + 1..net.layers() {
            let a: Vec<f64> = pre.last().unwrap().iter().map(|z| gelu(*z)).collect();
            let mut z = net.weights[l].mul_vec(&a).expect("layer sizes match");
            z.iter_mut().zip(&net.biases[l]).for_each(|(z, b)| *z += b);
            pre.push(z);
        }
        pre
    }
}

impl LayerLoss for MlpTail<'_> {
    fn output_dim(&self) -> usize {
        MLP_SIZES[self.layer + 1]
    }

    fn loss(&self, input: usize, v: &[f64]) -> f64 {
        softmax_ce(self.pre_activations(v).last().unwrap(), self.labels[input]).0
    }

    fn grad(&self, input: usize, v: &[f64]) -> Vec<f64> {
        let pre = self.pre_activations(v);
        let (_, mut delta) = softmax_ce(pre.last().unwrap(), self.labels[input]);
        for k in (1..pre.len()).rev() {
            let w = &self.net.weights[self.layer + k];
            delta = (0..w.cols())
                .map(|j| {
                    (0..w.rows()).map(|i| w[(i, j)] * delta[i]).sum::<f64>()
                        * gelu_prime(pre[k - 1][j])
                })
                .collect();
        }
        delta
    }
}

/// Oracle description accepted by [`probe_oracle`] and the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "oracle", rename_all = "snake_case", deny_unknown_fields)]
pub enum OracleSpec {
    /// `½ v^T M v` at a random base layer. Without `matrix`, `M = A A^T / dim`
    /// for a seeded Gaussian `A`.
    Quadratic {
        #[serde(default)]
        matrix: Option<Vec<Vec<f64>>>,
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default = "default_dim")]
        input_dim: usize,
    },
    /// `Σ |vᵢ|^p` probed at `W = 0`.
    PurePower {
        p: f64,
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default = "default_dim")]
        input_dim: usize,
    },
    /// A trained [`TinyMlp`], probed at one of its layers.
    TinyMlp {
        #[serde(default = "default_mlp_layer")]
        layer: usize,
        #[serde(default = "default_train_steps")]
        train_steps: usize,
        #[serde(default = "default_learning_rate")]
        learning_rate: f64,
    },
}

fn default_dim() -> usize {
    8
}
fn default_mlp_layer() -> usize {
    1
}
fn default_train_steps() -> usize {
    200
}
fn default_learning_rate() -> f64 {
    0.5
}

/// Seed stream used for the oracle, base layer and inputs; directions use their own streams.
const SETUP_STREAM: u64 = u64::MAX;

fn gaussian_vec(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

/// Builds the oracle described by `spec` and probes it.
pub fn probe_oracle(spec: &OracleSpec, config: &ProbeConfig) -> Result<ProbeReport> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(SETUP_STREAM);
    match *spec {
        OracleSpec::Quadratic {
            ref matrix,
            dim,
            input_dim,
        } => {
            let m = match matrix {
                Some(rows) => DenseMatrix::from_rows(rows)?,
                None => {
                    let a = DenseMatrix::from_fn(dim, dim, |_, _| rng.sample(StandardNormal));
                    a.matmul(&a.transpose())?.scale(1.0 / dim as f64)
                }
            };
            let loss = QuadraticLoss::new(m)?;
            let out = loss.output_dim();
            let layer = DenseMatrix::from_fn(out, input_dim, |_, _| {
                rng.sample::<f64, _>(StandardNormal) / (input_dim as f64).sqrt()
            });
            let inputs: Vec<Vec<f64>> = (0..config.input_count)
                .map(|_| gaussian_vec(&mut rng, input_dim))
                .collect();
            probe(&loss, &layer, None, &inputs, config)
        }
        OracleSpec::PurePower { p, dim, input_dim } => {
            if !(p >= 2.0) {
                return Err(invalid("pure-power oracle needs p >= 2"));
            }
            let loss = PurePowerLoss { dim, p };
            let layer = DenseMatrix::zeros(dim, input_dim);
            let inputs: Vec<Vec<f64>> = (0..config.input_count)
                .map(|_| gaussian_vec(&mut rng, input_dim))
                .collect();
            probe(&loss, &layer, None, &inputs, config)
        }
        OracleSpec::TinyMlp {
            layer,
            train_steps,
            learning_rate,
        } => {
            if layer >= MLP_SIZES.len() - 1 {
                return Err(invalid(format!("TinyMLP has no layer {layer}")));
            }
            let mut net = TinyMlp::random(&mut rng);
            let xs: Vec<Vec<f64>> = (0..config.input_count)
                .map(|_| gaussian_vec(&mut rng, MLP_SIZES[0]))
                .collect();
            let teacher = DenseMatrix::from_fn(MLP_SIZES[3], MLP_SIZES[0], |_, _| {
                rng.sample(StandardNormal)
            });
            let labels: Vec<usize> = xs
                .iter()
                .map(|x| {
                    let s = teacher.mul_vec(x).expect("teacher shape");
                    (0..s.len()).fold(0, |best, i| if s[i] > s[best] { i } else { best })
                })
                .collect();
            net.train(&xs, &labels, train_steps, learning_rate);
            let inputs: Vec<Vec<f64>> = xs.iter().map(|x| net.layer_input(layer, x)).collect();
            let w = net.weight(layer).clone();
            let bias = net.biases[layer].clone();
            let tail = net.tail(layer, labels);
            probe(&tail, &w, Some(&bias), &inputs, config)
        }
    }
}

/// Taylor-remainder probe of `loss` around the layer outputs `W uᵢ (+ bias)`.
///
/// Direction `k` draws `δW` with i.i.d. standard normal entries from its own
/// seeded stream; the same unit directions `δW uᵢ / ‖δW uᵢ‖` are reused at
/// every radius.
pub fn probe(
    loss: &dyn LayerLoss,
    layer: &DenseMatrix,
    bias: Option<&[f64]>,
    inputs: &[Vec<f64>],
    config: &ProbeConfig,
) -> Result<ProbeReport> {
    config.validate()?;
    if layer.rows() != loss.output_dim() {
        return Err(invalid(format!(
            "layer has {} outputs but the loss expects {}",
            layer.rows(),
            loss.output_dim()
        )));
    }
    if inputs.is_empty() {
        return Err(invalid("at least one input is required"));
    }
    for (i, u) in inputs.iter().enumerate() {
        if u.len() != layer.cols() {
            return Err(invalid(format!(
                "input {i} has length {}, expected {}",
                u.len(),
                layer.cols()
            )));
        }
        if u.iter().all(|x| *x == 0.0) {
            return Err(invalid(format!("input {i} is zero")));
        }
    }

    let base: Vec<(Vec<f64>, f64, Vec<f64>)> = inputs
        .iter()
        .enumerate()
        .map(|(i, u)| {
            let mut z = layer.mul_vec(u).expect("checked");
            if let Some(b) = bias {
                z.iter_mut().zip(b).for_each(|(z, b)| *z += b);
            }
            let l0 = loss.loss(i, &z);
            let g0 = loss.grad(i, &z);
            (z, l0, g0)
        })
        .collect();

    let radii = &config.radii;
    let nr = radii.len();
    let (rows, cols) = layer.shape();
    // per direction: rows of length nr for each input, laid out input-major
    let per_direction: Vec<Result<Vec<f64>>> = (0..config.direction_count)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(k as u64);
            let dw = DenseMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal));
            let mut out = Vec::with_capacity(inputs.len() * nr);
            for (i, u) in inputs.iter().enumerate() {
                let d = dw.mul_vec(u).expect("checked");
                let norm = dot(&d, &d).sqrt();
                if !(norm > 0.0) {
                    return Err(Error::DegenerateDirection {
                        direction: k,
                        input: i,
                    });
                }
                let unit: Vec<f64> = d.iter().map(|x| x / norm).collect();
                let (z, l0, g0) = &base[i];
                let slope = dot(g0, &unit);
                let mut moved = vec![0.0; z.len()];
                for &r in radii {
                    moved
                        .iter_mut()
                        .zip(z.iter().zip(&unit))
                        .for_each(|(m, (z, e))| *m = z + r * e);
                    let rem = loss.loss(i, &moved) - l0 - r * slope;
                    out.push(rem / (r * r));
                }
            }
            Ok(out)
        })
        .collect();
    let per_direction: Vec<Vec<f64>> = per_direction.into_iter().collect::<Result<_>>()?;

    let samples = config.direction_count * inputs.len();
    let mut means = Vec::with_capacity(nr);
    let mut std_err = Vec::with_capacity(nr);
    let (mut q10, mut q50, mut q90) = (Vec::new(), Vec::new(), Vec::new());
    let mut negative_fraction = Vec::new();
    let mut column = Vec::with_capacity(samples);
    for j in 0..nr {
        column.clear();
        for dir in &per_direction {
            column.extend(dir.iter().skip(j).step_by(nr));
        }
        let mean = pairwise_sum(&column) / samples as f64;
        let mut m = Moments::default();
        column.iter().for_each(|x| m.push(*x));
        std_err.push(m.estimate().std_err);
        negative_fraction.push(column.iter().filter(|x| **x < 0.0).count() as f64 / samples as f64);
        column.sort_by(f64::total_cmp);
        q10.push(quantile(&column, 0.1));
        q50.push(quantile(&column, 0.5));
        q90.push(quantile(&column, 0.9));
        means.push(mean);
    }

    let remainders: Vec<f64> = means.iter().zip(radii).map(|(m, r)| m * r * r).collect();
    let (fitted_exponent, fit_r_squared, nonpositive) =
        match fit_exponent(radii, &remainders, config.fit_window) {
            Ok((e, r2)) => (Some(e), Some(r2), false),
            Err(Error::NonPositiveMean { .. }) => (None, None, true),
            Err(e) => return Err(e),
        };
    Ok(ProbeReport {
        radii: radii.clone(),
        mean_remainder_over_r2: means,
        std_err,
        q10,
        q50,
        q90,
        negative_fraction,
        samples_per_radius: samples,
        fitted_exponent,
        fit_r_squared,
        fit_window: config.fit_window,
        nonpositive_mean_in_window: nonpositive,
    })
}

/// Least-squares slope of `log means` on `log radii` over the radii inside `window`,
/// with the fit's R².
pub fn fit_exponent(radii: &[f64], means: &[f64], window: (f64, f64)) -> Result<(f64, f64)> {
    if radii.len() != means.len() {
        return Err(invalid("radii and means must have equal length"));
    }
    let idx = window_indices(radii, window);
    if idx.len() < 3 {
        return Err(invalid("fit window must contain at least three radii"));
    }
    if let Some(&i) = idx.iter().find(|&&i| !(means[i] > 0.0)) {
        return Err(Error::NonPositiveMean {
            radius: radii[i],
            value: means[i],
        });
    }
    let x: Vec<f64> = idx.iter().map(|&i| radii[i].ln()).collect();
    let y: Vec<f64> = idx.iter().map(|&i| means[i].ln()).collect();
    let (slope, _, r2) = ols(&x, &y);
    Ok((slope, r2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_exponent_examples() {
        let radii = log_grid(1.0, 10.0, 10);
        let sq: Vec<f64> = radii.iter().map(|r| r * r).collect();
        let (e, r2) = fit_exponent(&radii, &sq, (1.0, 10.0)).unwrap();
        assert!((e - 2.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
        let p: Vec<f64> = radii.iter().map(|r| 3.0 * r.powf(2.39)).collect();
        let (e, _) = fit_exponent(&radii, &p, (1.0, 10.0)).unwrap();
        assert!((e - 2.39).abs() < 1e-10);
        let mut bumped = p.clone();
        bumped[4] *= 1.1;
        let (e, _) = fit_exponent(&radii, &bumped, (1.0, 10.0)).unwrap();
        assert!((e - 2.39).abs() <= 0.1);
        let mut bad = sq.clone();
        bad[3] = -1.0;
        assert!(matches!(
            fit_exponent(&radii, &bad, (1.0, 10.0)),
            Err(Error::NonPositiveMean { .. })
        ));
        assert!(fit_exponent(&radii, &sq, (5.0, 5.5)).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(ProbeConfig::default().validate().is_ok());
        let mut c = ProbeConfig {
            fit_window: (20.0, 30.0),
            ..ProbeConfig::default()
        };
        assert!(c.validate().is_err());
        c.fit_window = (1.0, 10.0);
        c.radii = vec![1.0, 0.5];
        assert!(c.validate().is_err());
    }

    fn small_config() -> ProbeConfig {
        ProbeConfig {
            direction_count: 10,
            input_count: 20,
            ..ProbeConfig::default()
        }
    }

    #[test]
    fn quadratic_remainder_is_exact() {
        let spec = OracleSpec::Quadratic {
            matrix: None,
            dim: 6,
            input_dim: 5,
        };
        let report = probe_oracle(&spec, &small_config()).unwrap();
        assert!((report.fitted_exponent.unwrap() - 2.0).abs() < 1e-6);
        let first = report.mean_remainder_over_r2[0];
        for (m, q) in report.mean_remainder_over_r2.iter().zip(&report.q10) {
            assert!((m - first).abs() <= 1e-8 * first);
            assert!(*q >= -1e-10);
        }
    }

    #[test]
    fn pure_power_remainder() {
        let spec = OracleSpec::PurePower {
            p: 4.0,
            dim: 8,
            input_dim: 8,
        };
        let report = probe_oracle(&spec, &small_config()).unwrap();
        assert!((report.fitted_exponent.unwrap() - 4.0).abs() < 1e-6);
        assert!(report.negative_fraction.iter().all(|f| *f == 0.0));
    }

    #[test]
    fn probe_is_deterministic() {
        let spec = OracleSpec::TinyMlp {
            layer: 1,
            train_steps: 5,
            learning_rate: 0.5,
        };
        let a = probe_oracle(&spec, &small_config()).unwrap();
        let b = probe_oracle(&spec, &small_config()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_input_is_rejected() {
        let loss = PurePowerLoss { dim: 2, p: 2.0 };
        let layer = DenseMatrix::zeros(2, 2);
        let cfg = ProbeConfig {
            direction_count: 1,
            input_count: 1,
            ..ProbeConfig::default()
        };
        // the zero input is rejected up front
        assert!(probe(&loss, &layer, None, &[vec![0.0, 0.0]], &cfg).is_err());
    }

    #[test]
    fn mlp_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = TinyMlp::random(&mut rng);
        let xs: Vec<Vec<f64>> = (0..16).map(|_| gaussian_vec(&mut rng, 8)).collect();
        let labels: Vec<usize> = (0..16).map(|i| i % 10).collect();
        let before = net.mean_loss(&xs, &labels);
        net.train(&xs, &labels, 20, 0.5);
        assert!(net.mean_loss(&xs, &labels) < before);
        for layer in 0..3 {
            let tail = net.tail(layer, labels.clone());
            let v = gaussian_vec(&mut rng, tail.output_dim());
            let g = tail.grad(2, &v);
            for j in 0..v.len() {
                let mut hi = v.clone();
                let mut lo = v.clone();
                hi[j] += 1e-6;
                lo[j] -= 1e-6;
                let fd = (tail.loss(2, &hi) - tail.loss(2, &lo)) / 2e-6;
                assert!(
                    (fd - g[j]).abs() < 1e-7,
                    "layer {layer} coord {j}: {fd} vs {}",
                    g[j]
                );
            }
        }
    }

    #[test]
    fn oracle_json_round_trip() {
        let spec: OracleSpec = serde_json::from_str(r#"{"oracle": "pure_power", "p": 4}"#).unwrap();
        assert_eq!(
            spec,
            OracleSpec::PurePower {
                p: 4.0,
                dim: 8,
                input_dim: 8
            }
        );
        assert!(serde_json::from_str::<OracleSpec>(r#"{"oracle": "cubic"}"#).is_err());
        let cfg: ProbeConfig = serde_json::from_str(r#"{"direction_count": 3}"#).unwrap();
        assert_eq!(cfg.input_count, 300);
    }
}
