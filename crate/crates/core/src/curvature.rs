//! Curvature functions `H`: values, derivative selections and subdifferentials.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Tolerance on second divided differences used by the convexity checks.
pub const CONVEXITY_TOLERANCE: f64 = 1e-9;

/// A univariate nondecreasing convex curvature function.
///
/// Build one through [`CurvatureSpec::quadratic`] and friends, or by
/// deserializing the JSON form; both paths validate the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CurvatureJson", into = "CurvatureJson")]
pub enum CurvatureSpec {
    /// `H(r) = c r^2`
    Quadratic { c: f64 },
    /// `H(r) = c r^(2 + alpha)`
    Power { c: f64, alpha: f64 },
    /// `H(r) = c r^4`
    Quartic { c: f64 },
    /// Piecewise linear with slope `a` below `r_tilde` and `b` above.
    Kink { a: f64, b: f64, r_tilde: f64 },
    /// Convex piecewise-linear curve through the origin and a projected table.
    Tabulated(TabulatedCurve),
}

/// Wire format for [`CurvatureSpec`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase", deny_unknown_fields)]
pub enum CurvatureJson {
    Quadratic {
        c: f64,
    },
    Power {
        c: f64,
        alpha: f64,
    },
    Quartic {
        c: f64,
    },
    Kink {
        #[serde(rename = "A")]
        a: f64,
        #[serde(rename = "B")]
        b: f64,
        r_tilde: f64,
    },
    Tabulated {
        radii: Vec<f64>,
        values: Vec<f64>,
    },
}

impl TryFrom<CurvatureJson> for CurvatureSpec {
    type Error = crate::Error;

    fn try_from(raw: CurvatureJson) -> Result<Self> {
        match raw {
            CurvatureJson::Quadratic { c } => Self::quadratic(c),
            CurvatureJson::Power { c, alpha } => Self::power(c, alpha),
            CurvatureJson::Quartic { c } => Self::quartic(c),
            CurvatureJson::Kink { a, b, r_tilde } => Self::kink(a, b, r_tilde),
            CurvatureJson::Tabulated { radii, values } => {
                Ok(Self::Tabulated(TabulatedCurve::new(radii, values)?))
            }
        }
    }
}

impl From<CurvatureSpec> for CurvatureJson {
    fn from(spec: CurvatureSpec) -> Self {
        match spec {
            CurvatureSpec::Quadratic { c } => Self::Quadratic { c },
            CurvatureSpec::Power { c, alpha } => Self::Power { c, alpha },
            CurvatureSpec::Quartic { c } => Self::Quartic { c },
            CurvatureSpec::Kink { a, b, r_tilde } => Self::Kink { a, b, r_tilde },
            CurvatureSpec::Tabulated(t) => Self::Tabulated {
                radii: t.radii,
                values: t.raw_values,
            },
        }
    }
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(invalid(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

impl CurvatureSpec {
    pub fn quadratic(c: f64) -> Result<Self> {
        Ok(Self::Quadratic {
            c: positive("c", c)?,
        })
    }

    /// `alpha >= -1` keeps `H` convex; convexity of `H(sqrt(x))` needs `alpha >= 0`.
    pub fn power(c: f64, alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= -1.0) {
            return Err(invalid(format!("alpha must be >= -1, got {alpha}")));
        }
        Ok(Self::Power {
            c: positive("c", c)?,
            alpha,
        })
    }

    pub fn quartic(c: f64) -> Result<Self> {
        Ok(Self::Quartic {
            c: positive("c", c)?,
        })
    }

    pub fn kink(a: f64, b: f64, r_tilde: f64) -> Result<Self> {
        if !(a.is_finite() && a >= 0.0) {
            return Err(invalid(format!("kink slope A must be >= 0, got {a}")));
        }
        if !(b.is_finite() && b > a) {
            return Err(invalid(format!(
                "kink slope B must exceed A, got A={a}, B={b}"
            )));
        }
        Ok(Self::Kink {
            a,
            b,
            r_tilde: positive("r_tilde", r_tilde)?,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Quadratic { .. } => "quadratic",
            Self::Power { .. } => "power",
            Self::Quartic { .. } => "quartic",
            Self::Kink { .. } => "kink",
            Self::Tabulated(_) => "tabulated",
        }
    }

    /// `H(r)`.
    pub fn value(&self, r: f64) -> f64 {
        debug_assert!(r >= 0.0);
        match *self {
            Self::Quadratic { c } => c * r * r,
            Self::Power { c, alpha } => c * r.powf(2.0 + alpha),
            Self::Quartic { c } => c * (r * r) * (r * r),
            Self::Kink { a, b, r_tilde } => {
                if r <= r_tilde {
                    a * r
                } else {
                    a * r_tilde + b * (r - r_tilde)
                }
            }
            Self::Tabulated(ref t) => t.value(r),
        }
    }

    /// Subdifferential `[lo, hi]` of `H` at `r`; a point interval where `H` is differentiable.
    pub fn subdiff(&self, r: f64) -> (f64, f64) {
        match *self {
            Self::Kink { a, b, r_tilde } => {
                if r < r_tilde {
                    (a, a)
                } else if r > r_tilde {
                    (b, b)
                } else {
                    (a, b)
                }
            }
            Self::Tabulated(ref t) => t.subdiff(r),
            _ => {
                let d = self.derivative(r);
                (d, d)
            }
        }
    }

    /// A derivative selection: the left derivative, or the right derivative at 0.
    pub fn derivative(&self, r: f64) -> f64 {
        match *self {
            Self::Quadratic { c } => 2.0 * c * r,
            Self::Power { c, alpha } => {
                let e = 1.0 + alpha;
                if r == 0.0 {
                    if e == 0.0 {
                        c * (2.0 + alpha)
                    } else {
                        0.0
                    }
                } else {
                    c * (2.0 + alpha) * r.powf(e)
                }
            }
            Self::Quartic { c } => 4.0 * c * r * r * r,
            Self::Kink { a, b, r_tilde } => {
                if r <= r_tilde {
                    a
                } else {
                    b
                }
            }
            Self::Tabulated(ref t) => t.subdiff(r).0,
        }
    }

    /// `H'(r) / r` for `r > 0`, the weight that appears in the spectral gradient.
    pub(crate) fn slope_over_radius(&self, r: f64) -> f64 {
        match *self {
            Self::Quadratic { c } => 2.0 * c,
            Self::Quartic { c } => 4.0 * c * r * r,
            Self::Power { c, alpha } => c * (2.0 + alpha) * r.powf(alpha),
            _ => self.derivative(r) / r,
        }
    }

    /// True if `H` has a single-valued derivative everywhere on `(0, inf)`.
    pub fn is_differentiable(&self) -> bool {
        match self {
            Self::Kink { .. } => false,
            Self::Tabulated(t) => t.is_linear(),
            _ => true,
        }
    }

    pub fn as_kink(&self) -> Option<KinkParams> {
        match *self {
            Self::Kink { a, b, r_tilde } => Some(KinkParams { a, b, r_tilde }),
            _ => None,
        }
    }
}

/// Parameters of the kink curvature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinkParams {
    pub a: f64,
    pub b: f64,
    pub r_tilde: f64,
}

impl From<KinkParams> for CurvatureSpec {
    fn from(k: KinkParams) -> Self {
        CurvatureSpec::Kink {
            a: k.a,
            b: k.b,
            r_tilde: k.r_tilde,
        }
    }
}

/// Checks that `x -> H(sqrt(x))` is convex and `H` strictly increasing on an ascending grid of radii.
pub fn assumption1_holds(spec: &CurvatureSpec, grid: &[f64]) -> bool {
    if grid.windows(2).any(|w| !(w[0] < w[1])) || grid.iter().any(|&r| !(r > 0.0)) {
        return false;
    }
    let xs: Vec<f64> = grid.iter().map(|r| r * r).collect();
    let ys: Vec<f64> = grid.iter().map(|&r| spec.value(r)).collect();
    if ys.windows(2).any(|w| !(w[1] > w[0])) {
        return false;
    }
    convex_on(&xs, &ys)
}

/// Second divided differences of `(xs, ys)` are at least `-CONVEXITY_TOLERANCE`.
/// A slope drop within relative rounding of the slopes themselves is accepted.
pub(crate) fn convex_on(xs: &[f64], ys: &[f64]) -> bool {
    let slopes: Vec<f64> = xs
        .windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| (y[1] - y[0]) / (x[1] - x[0]))
        .collect();
    slopes.windows(2).enumerate().all(|(i, s)| {
        let dd = (s[1] - s[0]) / (xs[i + 2] - xs[i]);
        dd >= -CONVEXITY_TOLERANCE || s[0] - s[1] <= 1e-12 * s[0].abs().max(s[1].abs())
    })
}

/// Convex, nondecreasing piecewise-linear curve anchored at `H(0) = 0`.
///
/// Slopes of the raw table are projected onto nondecreasing nonnegative
/// sequences (weighted isotonic regression), so noisy probe output still
/// yields a valid curvature.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedCurve {
    radii: Vec<f64>,
    raw_values: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
    projection_distance: f64,
}

impl TabulatedCurve {
    pub fn new(radii: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if radii.is_empty() || radii.len() != values.len() {
            return Err(invalid(
                "tabulated curvature needs equally long, nonempty radii and values",
            ));
        }
        if radii.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(invalid("tabulated curvature entries must be finite"));
        }
        if !(radii[0] > 0.0) || radii.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(invalid(
                "tabulated radii must be positive and strictly ascending",
            ));
        }

        let mut knots = Vec::with_capacity(radii.len() + 1);
        knots.push(0.0);
        knots.extend_from_slice(&radii);
        let mut prev = (0.0, 0.0);
        let mut raw_slopes = Vec::with_capacity(radii.len());
        let mut weights = Vec::with_capacity(radii.len());
        for (&r, &v) in radii.iter().zip(&values) {
            raw_slopes.push((v - prev.1) / (r - prev.0));
            weights.push(r - prev.0);
            prev = (r, v);
        }
        let slopes: Vec<f64> = isotonic_nondecreasing(&raw_slopes, &weights)
            .into_iter()
            .map(|s| s.max(0.0))
            .collect();

        let mut projected = Vec::with_capacity(radii.len());
        let mut acc = 0.0;
        for (s, w) in slopes.iter().zip(&weights) {
            acc += s * w;
            projected.push(acc);
        }
        let projection_distance = projected
            .iter()
            .zip(&values)
            .fold(0.0f64, |m, (p, v)| m.max((p - v).abs()));

        Ok(Self {
            radii,
            raw_values: values,
            values: projected,
            slopes,
            projection_distance,
        })
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    /// Values after the convexity projection.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Largest absolute change the projection made to a tabulated value.
    pub fn projection_distance(&self) -> f64 {
        self.projection_distance
    }

    fn is_linear(&self) -> bool {
        self.slopes.windows(2).all(|w| w[0] == w[1])
    }

    /// Index of the segment containing `r`: segment `i` spans `[radii[i-1], radii[i]]`
    /// with `radii[-1] = 0`; the last segment extends to infinity.
    fn segment(&self, r: f64) -> usize {
        self.radii
            .partition_point(|&k| k < r)
            .min(self.radii.len() - 1)
    }

    fn value(&self, r: f64) -> f64 {
        let i = self.segment(r);
        let (r0, v0) = if i == 0 {
            (0.0, 0.0)
        } else {
            (self.radii[i - 1], self.values[i - 1])
        };
        v0 + self.slopes[i] * (r - r0)
    }

    fn subdiff(&self, r: f64) -> (f64, f64) {
        let last = self.radii.len() - 1;
        match self.radii.binary_search_by(|k| k.total_cmp(&r)) {
            Ok(i) if i < last => (self.slopes[i], self.slopes[i + 1]),
            Ok(i) => (self.slopes[i], self.slopes[i]),
            Err(_) => {
                let s = self.slopes[self.segment(r)];
                (s, s)
            }
        }
    }
}

/// Weighted pool-adjacent-violators for a nondecreasing fit.
fn isotonic_nondecreasing(y: &[f64], w: &[f64]) -> Vec<f64> {
    // blocks of (weighted mean, weight, count)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(y.len());
    for (&yi, &wi) in y.iter().zip(w) {
        blocks.push((yi, wi, 1));
        while blocks.len() > 1 {
            let n = blocks.len();
            if blocks[n - 2].0 <= blocks[n - 1].0 {
                break;
            }
            let (m2, w2, c2) = blocks.pop().unwrap();
            let (m1, w1, c1) = blocks.pop().unwrap();
            let wt = w1 + w2;
            blocks.push(((m1 * w1 + m2 * w2) / wt, wt, c1 + c2));
        }
    }
    blocks
        .into_iter()
        .flat_map(|(m, _, c)| std::iter::repeat_n(m, c))
        .collect()
}

/// `count` log-spaced points between `lo` and `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(count >= 2 && lo > 0.0 && hi > lo);
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| {
            if i + 1 == count {
                hi
            } else {
                (a + (b - a) * i as f64 / (count - 1) as f64).exp()
            }
        })
        .collect()
}
