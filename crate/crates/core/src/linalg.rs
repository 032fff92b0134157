//! Dense real linear algebra: matrices, compact SVD via one-sided Jacobi,
//! the orthogonal polar factor and trace inner products.
//!
//! Everything here is deterministic. Singular values come out descending and
//! singular vectors are sign-canonicalized (the first significant entry of each
//! left singular vector is nonnegative), so repeated runs and golden files agree.

use std::fmt;
use std::ops::{Index, IndexMut};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};

/// Maximum number of Jacobi sweeps before giving up.
pub const SVD_MAX_SWEEPS: usize = 100;
/// Relative off-diagonal threshold for the Jacobi rotations.
pub const SVD_TOLERANCE: f64 = 1e-12;
/// Relative threshold below which a matrix counts as rank deficient for `msgn_exact`.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Entries below this magnitude are skipped when choosing the sign of a singular vector.
const SIGN_EPS: f64 = 1e-12;

/// Real `rows x cols` matrix stored row-major.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    /// Builds a matrix from row-major entries, rejecting bad lengths and non-finite values.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::InvalidShape {
                rows,
                cols,
                len: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / cols.max(1),
                col: pos % cols.max(1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    /// Rectangular diagonal matrix with `diag` on the main diagonal.
    pub fn diag(rows: usize, cols: usize, diag: &[f64]) -> Self {
        let mut out = Self::zeros(rows, cols);
        for (i, &d) in diag.iter().enumerate().take(rows.min(cols)) {
            out[(i, i)] = d;
        }
        out
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from a slice of equally sized rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(invalid("ragged rows"));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns(rows: usize, columns: &[Vec<f64>]) -> Self {
        Self::from_fn(rows, columns.len(), |i, j| columns[j][i])
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// Matrix product `self * rhs`.
    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::ShapeMismatch {
                left: self.shape(),
                right: rhs.shape(),
            });
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(rhs.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Matrix-vector product.
    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::ShapeMismatch {
                left: self.shape(),
                right: (v.len(), 1),
            });
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, other: &Self, s: f64) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + s * b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add_scaled(other, -1.0)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

/// Compact SVD `A = U diag(sigma) V^T` with `k = min(m, n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    /// `m x k`, orthonormal columns.
    pub u: DenseMatrix,
    /// Length `k`, descending, nonnegative.
    pub sigma: Vec<f64>,
    /// `n x k`, orthonormal columns.
    pub v: DenseMatrix,
}

impl SvdFactors {
    /// Rebuilds `U diag(s) V^T` for an arbitrary replacement spectrum `s`.
    pub fn compose(&self, s: &[f64]) -> DenseMatrix {
        let (m, n, k) = (self.u.rows(), self.v.rows(), self.sigma.len());
        debug_assert_eq!(s.len(), k);
        DenseMatrix::from_fn(m, n, |i, j| {
            (0..k).map(|l| self.u[(i, l)] * s[l] * self.v[(j, l)]).sum()
        })
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        self.compose(&self.sigma)
    }

    pub fn rank(&self) -> usize {
        self.sigma.len()
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Compact SVD by one-sided Jacobi rotations.
pub fn svd_compact(a: &DenseMatrix) -> Result<SvdFactors> {
    let (m, n) = a.shape();
    if m.min(n) == 0 {
        return Err(invalid("SVD of an empty matrix"));
    }
    if m >= n {
        let (u, sigma, v) = jacobi_tall(a)?;
        Ok(canonicalize(u, sigma, v))
    } else {
        let (v, sigma, u) = jacobi_tall(&a.transpose())?;
        Ok(canonicalize(u, sigma, v))
    }
}

/// One-sided Jacobi on a matrix with at least as many rows as columns.
/// Returns `(U, sigma, V)` with columns sorted by descending singular value.
fn jacobi_tall(a: &DenseMatrix) -> Result<(DenseMatrix, Vec<f64>, DenseMatrix)> {
    let (m, n) = a.shape();
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let mut vcols: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    let mut converged = n < 2;
    for _ in 0..SVD_MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if gamma == 0.0 || gamma.abs() <= SVD_TOLERANCE * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, p, q, c, s);
                rotate(&mut vcols, p, q, c, s);
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(Error::SvdNoConvergence {
            sweeps: SVD_MAX_SWEEPS,
        });
    }

    let mut order: Vec<(usize, f64)> = cols.iter().map(|c| norm(c)).enumerate().collect();
    order.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    let sigma_max = order[0].1;
    let zero_cut = sigma_max * f64::EPSILON * m as f64;

    let mut sigma = Vec::with_capacity(n);
    let mut ucols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut pending = Vec::new();
    for (slot, &(j, s)) in order.iter().enumerate() {
        if s > zero_cut && s > 0.0 {
            sigma.push(s);
            ucols.push(cols[j].iter().map(|x| x / s).collect());
        } else {
            sigma.push(0.0);
            ucols.push(vec![0.0; m]);
            pending.push(slot);
        }
    }
    complete_orthonormal(&mut ucols, &pending, m);

    let vsorted: Vec<Vec<f64>> = order.iter().map(|&(j, _)| vcols[j].clone()).collect();
    Ok((
        DenseMatrix::from_columns(m, &ucols),
        sigma,
        DenseMatrix::from_columns(n, &vsorted),
    ))
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    for (x, y) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Fills the columns listed in `pending` with unit vectors orthogonal to every
/// other column, by Gram-Schmidt against the standard basis.
fn complete_orthonormal(cols: &mut [Vec<f64>], pending: &[usize], m: usize) {
    for &slot in pending {
        let mut best: Option<Vec<f64>> = None;
        let mut best_norm = 0.0;
        for e in 0..m {
            let mut cand = vec![0.0; m];
            cand[e] = 1.0;
            // two passes of classical Gram-Schmidt
            for _ in 0..2 {
                for (other, col) in cols.iter().enumerate() {
                    if other == slot || col.iter().all(|&v| v == 0.0) {
                        continue;
                    }
                    let proj = dot(&cand, col);
                    for (c, v) in cand.iter_mut().zip(col) {
                        *c -= proj * v;
                    }
                }
            }
            let nrm = norm(&cand);
            if nrm > best_norm + 1e-8 {
                best_norm = nrm;
                best = Some(cand);
            }
        }
        let best = best.expect("an orthogonal complement exists while k <= m");
        cols[slot] = best.iter().map(|v| v / best_norm).collect();
    }
}

fn canonicalize(mut u: DenseMatrix, sigma: Vec<f64>, mut v: DenseMatrix) -> SvdFactors {
    for j in 0..sigma.len() {
        let lead = (0..u.rows())
            .map(|i| u[(i, j)])
            .find(|x| x.abs() > SIGN_EPS)
            .unwrap_or(0.0);
        if lead < 0.0 {
            for i in 0..u.rows() {
                u[(i, j)] = -u[(i, j)];
            }
            for i in 0..v.rows() {
                v[(i, j)] = -v[(i, j)];
            }
        }
    }
    SvdFactors { u, sigma, v }
}

/// Singular values only, descending.
pub fn singular_values(a: &DenseMatrix) -> Result<Vec<f64>> {
    Ok(svd_compact(a)?.sigma)
}

/// Orthogonal polar factor `U V^T` of a full-rank matrix.
pub fn msgn_exact(a: &DenseMatrix) -> Result<DenseMatrix> {
    let svd = svd_compact(a)?;
    let smax = svd.sigma[0];
    let smin = *svd.sigma.last().expect("k >= 1");
    if smax == 0.0 || smin <= RANK_TOLERANCE * smax {
        let ratio = if smax == 0.0 { 0.0 } else { smin / smax };
        return Err(Error::RankDeficient { ratio });
    }
    Ok(svd.compose(&vec![1.0; svd.sigma.len()]))
}

/// Frobenius inner product `sum_ij A_ij B_ij = Tr(A B^T)`.
pub fn trace_inner(a: &DenseMatrix, b: &DenseMatrix) -> Result<f64> {
    a.check_same_shape(b)?;
    Ok(dot(a.as_slice(), b.as_slice()))
}

/// Both sides of von Neumann's trace inequality `|Tr(A B^T)| <= sum_i s_i(A) s_i(B)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceBound {
    pub lhs: f64,
    pub rhs: f64,
}

impl TraceBound {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs + 1e-10 * self.rhs.max(f64::MIN_POSITIVE)
    }
}

pub fn von_neumann_bound(a: &DenseMatrix, b: &DenseMatrix) -> Result<TraceBound> {
    let lhs = trace_inner(a, b)?.abs();
    let sa = singular_values(a)?;
    let sb = singular_values(b)?;
    Ok(TraceBound {
        lhs,
        rhs: dot(&sa, &sb),
    })
}

/// Matrix with i.i.d. standard normal entries.
pub fn random_gaussian(rows: usize, cols: usize, rng: &mut impl Rng) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Haar-distributed orthogonal matrix: Gram-Schmidt on a Gaussian matrix.
pub fn random_orthogonal(n: usize, rng: &mut impl Rng) -> DenseMatrix {
    loop {
        let g = random_gaussian(n, n, rng);
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
        let mut ok = true;
        for j in 0..n {
            let mut c = g.column(j);
            // two passes keep the columns orthogonal to working precision
            for _ in 0..2 {
                for q in &cols {
                    let p = dot(q, &c);
                    c.iter_mut().zip(q).for_each(|(x, y)| *x -= p * y);
                }
            }
            let nrm = norm(&c);
            if nrm < 1e-8 {
                ok = false;
                break;
            }
            c.iter_mut().for_each(|x| *x /= nrm);
            cols.push(c);
        }
        if ok {
            return DenseMatrix::from_columns(n, &cols);
        }
    }
}

/// `O₁ diag(sigma) O₂` with Haar-random orthogonal factors.
pub fn random_with_spectrum(
    rows: usize,
    cols: usize,
    sigma: &[f64],
    rng: &mut impl Rng,
) -> DenseMatrix {
    assert!(sigma.len() <= rows.min(cols));
    let mut d = sigma.to_vec();
    d.resize(rows.min(cols), 0.0);
    let left = random_orthogonal(rows, rng);
    let right = random_orthogonal(cols, rng);
    left.matmul(&DenseMatrix::diag(rows, cols, &d))
        .and_then(|m| m.matmul(&right))
        .expect("conforming shapes")
}
