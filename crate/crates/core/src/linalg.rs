//! Minimal dense symmetric matrices and the operator trait used by the
//! eigenvalue routine.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Anything that can apply a symmetric `n × n` matrix to a vector.
pub trait SymmetricOperator {
    fn dim(&self) -> usize;
    /// `out = A x`
    fn apply(&self, x: &[f64], out: &mut [f64]);
}

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some(r) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::LengthMismatch {
                expected: n,
                found: r.len(),
            });
        }
        Ok(Self::from_fn(n, |i, j| rows[i][j]))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// First `(i, j)` where `|A_ij - A_ji| > tol`.
    pub fn check_symmetric(&self, tol: f64) -> Result<()> {
        for i in 0..self.n {
            for j in i + 1..self.n {
                if (self.get(i, j) - self.get(j, i)).abs() > tol {
                    return Err(Error::NotSymmetric { i, j });
                }
            }
        }
        Ok(())
    }

    /// `xᵀ A y`
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        (0..self.n)
            .map(|i| x[i] * self.row(i).iter().zip(y).map(|(a, b)| a * b).sum::<f64>())
            .sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        (0..self.n)
            .map(|j| (0..self.n).map(|i| self.get(i, j)).sum())
            .collect()
    }
}

impl SymmetricOperator for DenseMatrix {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row(i).iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn center(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

/// Upper bound on Krylov steps (and stored basis vectors) in
/// [`top_centered_eigenvalue`].
pub const MAX_KRYLOV_STEPS: usize = 2000;

/// Largest eigenvalue of a symmetric tridiagonal matrix by Sturm-sequence
/// bisection. `diag` has length `m`, `off` length `m - 1`.
pub fn tridiagonal_max_eigenvalue(diag: &[f64], off: &[f64]) -> f64 {
    let m = diag.len();
    if m == 0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..m {
        let radius = if i > 0 { off[i - 1].abs() } else { 0.0 } + if i + 1 < m { off[i].abs() } else { 0.0 };
        lo = lo.min(diag[i] - radius);
        hi = hi.max(diag[i] + radius);
    }
    let scale = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
    // Number of eigenvalues strictly below x.
    let count_below = |x: f64| {
        let mut count = 0;
        let mut d = 1.0;
        for i in 0..m {
            let b2 = if i > 0 { off[i - 1] * off[i - 1] } else { 0.0 };
            d = diag[i] - x - if i > 0 { b2 / d } else { 0.0 };
            if d == 0.0 {
                d = -f64::EPSILON * scale;
            }
            if d < 0.0 {
                count += 1;
            }
        }
        count
    };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 4.0 * f64::EPSILON * scale {
            break;
        }
        if count_below(mid) == m {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Largest eigenvalue of `C A C` with `C = I - 11ᵀ/n`, never forming the
/// centered matrix.
///
/// Runs the power iteration in Krylov form (Lanczos with full
/// reorthogonalization) from a seeded mean-zero start vector; Ritz values
/// come from the tridiagonal projection. Stops once the top Ritz value is
/// stationary to `1e-13` relative over three consecutive steps, or when the
/// Krylov space is exhausted (then the value is exact).
pub fn top_centered_eigenvalue<A: SymmetricOperator + ?Sized>(op: &A, seed: u64) -> Result<f64> {
    use rand::Rng;
    let n = op.dim();
    if n <= 1 {
        return Ok(0.0);
    }
    let mut rng = crate::rng::stream(seed, 0);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    center(&mut v);
    let norm = libm::sqrt(dot(&v, &v));
    v.iter_mut().for_each(|x| *x /= norm);

    let max_steps = (n - 1).min(MAX_KRYLOV_STEPS);
    let mut basis: Vec<Vec<f64>> = vec![v];
    let mut diag: Vec<f64> = Vec::new();
    let mut off: Vec<f64> = Vec::new();
    let mut w = vec![0.0; n];
    let mut previous = f64::NAN;
    let mut stable = 0;
    loop {
        let k = basis.len() - 1;
        op.apply(&basis[k], &mut w);
        center(&mut w);
        let a = dot(&w, &basis[k]);
        diag.push(a);
        for _ in 0..2 {
            for u in &basis {
                let c = dot(&w, u);
                w.iter_mut().zip(u).for_each(|(x, y)| *x -= c * y);
            }
        }
        center(&mut w);
        let theta = tridiagonal_max_eigenvalue(&diag, &off);
        let scale = theta.abs().max(diag.iter().fold(0.0, |m: f64, d| m.max(d.abs())));
        let change = (theta - previous).abs();
        if change <= 1e-13 * scale {
            stable += 1;
        } else {
            stable = 0;
        }
        previous = theta;
        let beta = libm::sqrt(dot(&w, &w));
        if stable >= 3 || beta <= 1e-12 * scale.max(f64::MIN_POSITIVE) || diag.len() >= n - 1 {
            return Ok(theta);
        }
        if diag.len() >= max_steps {
            return Err(Error::NoConvergence {
                iterations: diag.len(),
                residual: change,
            });
        }
        off.push(beta);
        basis.push(w.iter().map(|x| x / beta).collect());
    }
}
