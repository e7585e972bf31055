//! Matrix-free linear maps.
//!
//! Every forward model in the crate is a [`LinearMap`]: something that knows
//! its shape and can apply itself and its adjoint to a vector. Dense
//! matrices, 2-D reflective-boundary convolutions, parallel-beam projectors
//! and the small regularization matrices all implement the same trait, so the
//! Krylov machinery never sees storage details.

mod blur;
mod tomo;

pub use blur::{build_gaussian_psf, BlurOperator, Psf};
pub use tomo::{build_tomo, TomoOperator};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm};
use nalgebra::DMatrix;
use std::sync::Arc;

pub trait LinearMap: Send + Sync {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;

    /// `y = A x`. Lengths are the caller's responsibility.
    fn apply_into(&self, x: &[f64], y: &mut [f64]);

    /// `z = Aᵀ w`. Lengths are the caller's responsibility.
    fn apply_adjoint_into(&self, w: &[f64], z: &mut [f64]);

    fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.cols(), x.len())?;
        let mut y = vec![0.0; self.rows()];
        self.apply_into(x, &mut y);
        Ok(y)
    }

    fn apply_adjoint(&self, w: &[f64]) -> Result<Vec<f64>> {
        check_len(self.rows(), w.len())?;
        let mut z = vec![0.0; self.cols()];
        self.apply_adjoint_into(w, &mut z);
        Ok(z)
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

impl<T: LinearMap + ?Sized> LinearMap for &T {
    fn rows(&self) -> usize {
        (**self).rows()
    }
    fn cols(&self) -> usize {
        (**self).cols()
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        (**self).apply_into(x, y)
    }
    fn apply_adjoint_into(&self, w: &[f64], z: &mut [f64]) {
        (**self).apply_adjoint_into(w, z)
    }
}

impl<T: LinearMap + ?Sized> LinearMap for Box<T> {
    fn rows(&self) -> usize {
        (**self).rows()
    }
    fn cols(&self) -> usize {
        (**self).cols()
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        (**self).apply_into(x, y)
    }
    fn apply_adjoint_into(&self, w: &[f64], z: &mut [f64]) {
        (**self).apply_adjoint_into(w, z)
    }
}

impl<T: LinearMap + ?Sized> LinearMap for Arc<T> {
    fn rows(&self) -> usize {
        (**self).rows()
    }
    fn cols(&self) -> usize {
        (**self).cols()
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        (**self).apply_into(x, y)
    }
    fn apply_adjoint_into(&self, w: &[f64], z: &mut [f64]) {
        (**self).apply_adjoint_into(w, z)
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrixMap {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl DenseMatrixMap {
    pub fn new(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument(
                "dense matrix must be non-empty".into(),
            ));
        }
        check_len(rows * cols, entries.len())?;
        Ok(Self {
            rows,
            cols,
            entries,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidArgument("ragged rows".into()));
        }
        Self::new(m, n, rows.concat())
    }

    pub fn identity(n: usize) -> Self {
        let mut e = vec![0.0; n * n];
        for i in 0..n {
            e[i * n + i] = 1.0;
        }
        Self {
            rows: n,
            cols: n,
            entries: e,
        }
    }

    pub fn from_matrix(a: &DMatrix<f64>) -> Self {
        let (m, n) = a.shape();
        Self {
            rows: m,
            cols: n,
            entries: (0..m * n).map(|k| a[(k / n, k % n)]).collect(),
        }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.entries)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.cols + j]
    }
}

impl LinearMap for DenseMatrixMap {
    fn rows(&self) -> usize {
        self.rows
    }
    fn cols(&self) -> usize {
        self.cols
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        for (yi, row) in y.iter_mut().zip(self.entries.chunks_exact(self.cols)) {
            *yi = dot(row, x);
        }
    }
    fn apply_adjoint_into(&self, w: &[f64], z: &mut [f64]) {
        z.fill(0.0);
        for (wi, row) in w.iter().zip(self.entries.chunks_exact(self.cols)) {
            if *wi != 0.0 {
                for (zj, aij) in z.iter_mut().zip(row) {
                    *zj += wi * aij;
                }
            }
        }
    }
}

/// `diag(d)`; its own adjoint.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalMap {
    diag: Vec<f64>,
}

impl DiagonalMap {
    pub fn new(diag: Vec<f64>) -> Self {
        Self { diag }
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    /// `diag(1/d)`; errors on a zero entry.
    pub fn inverse(&self) -> Result<Self> {
        if self.diag.contains(&0.0) {
            return Err(Error::InvalidArgument("singular diagonal".into()));
        }
        Ok(Self {
            diag: self.diag.iter().map(|d| 1.0 / d).collect(),
        })
    }
}

impl LinearMap for DiagonalMap {
    fn rows(&self) -> usize {
        self.diag.len()
    }
    fn cols(&self) -> usize {
        self.diag.len()
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        for ((yi, xi), di) in y.iter_mut().zip(x).zip(&self.diag) {
            *yi = di * xi;
        }
    }
    fn apply_adjoint_into(&self, w: &[f64], z: &mut [f64]) {
        self.apply_into(w, z)
    }
}

/// Square lower-bidiagonal first difference with a Dirichlet condition on
/// the left: `(Lx)_0 = x_0`, `(Lx)_i = x_i - x_{i-1}`. Invertible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstDifference {
    n: usize,
}

impl FirstDifference {
    pub fn new(n: usize) -> Self {
        Self { n }
    }

    pub fn inverse(&self) -> FirstDifferenceInverse {
        FirstDifferenceInverse { n: self.n }
    }
}

impl LinearMap for FirstDifference {
    fn rows(&self) -> usize {
        self.n
    }
    fn cols(&self) -> usize {
        self.n
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let mut prev = 0.0;
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi = xi - prev;
            prev = *xi;
        }
    }
    fn apply_adjoint_into(&self, w: &[f64], z: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            z[i] = w[i] - if i + 1 < n { w[i + 1] } else { 0.0 };
        }
    }
}

/// Inverse of [`FirstDifference`]: a running sum (adjoint: reverse running sum).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstDifferenceInverse {
    n: usize,
}

impl LinearMap for FirstDifferenceInverse {
    fn rows(&self) -> usize {
        self.n
    }
    fn cols(&self) -> usize {
        self.n
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let mut acc = 0.0;
        for (yi, xi) in y.iter_mut().zip(x) {
            acc += xi;
            *yi = acc;
        }
    }
    fn apply_adjoint_into(&self, w: &[f64], z: &mut [f64]) {
        let mut acc = 0.0;
        for i in (0..self.n).rev() {
            acc += w[i];
            z[i] = acc;
        }
    }
}

/// `outer · inner`.
pub struct Composed<A, B> {
    outer: A,
    inner: B,
}

impl<A: LinearMap, B: LinearMap> Composed<A, B> {
    pub fn new(outer: A, inner: B) -> Result<Self> {
        check_len(outer.cols(), inner.rows())?;
        Ok(Self { outer, inner })
    }
}

impl<A: LinearMap, B: LinearMap> LinearMap for Composed<A, B> {
    fn rows(&self) -> usize {
        self.outer.rows()
    }
    fn cols(&self) -> usize {
        self.inner.cols()
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let mut t = vec![0.0; self.inner.rows()];
        self.inner.apply_into(x, &mut t);
        self.outer.apply_into(&t, y);
    }
    fn apply_adjoint_into(&self, w: &[f64], z: &mut [f64]) {
        let mut t = vec![0.0; self.outer.cols()];
        self.outer.apply_adjoint_into(w, &mut t);
        self.inner.apply_adjoint_into(&t, z);
    }
}

/// Explicit matrix of any map, built column by column.
pub fn densify(a: &dyn LinearMap) -> DMatrix<f64> {
    let (m, n) = (a.rows(), a.cols());
    let mut out = DMatrix::zeros(m, n);
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; m];
    for j in 0..n {
        e[j] = 1.0;
        a.apply_into(&e, &mut col);
        out.column_mut(j).copy_from_slice(&col);
        e[j] = 0.0;
    }
    out
}

/// Spectral-norm estimate by power iteration on `AᵀA` from a fixed start.
pub fn estimate_norm(a: &dyn LinearMap, iters: usize) -> f64 {
    let n = a.cols();
    let mut v: Vec<f64> = (0..n)
        .map(|i| 1.0 + 0.1 * ((i * 7919) % 13) as f64)
        .collect();
    let mut av = vec![0.0; a.rows()];
    let mut est = 0.0;
    for _ in 0..iters.max(1) {
        let nv = norm(&v);
        if nv == 0.0 {
            return 0.0;
        }
        v.iter_mut().for_each(|x| *x /= nv);
        a.apply_into(&v, &mut av);
        est = norm(&av);
        a.apply_adjoint_into(&av, &mut v);
    }
    est
}

/// `|<Ax, w> - <x, Aᵀw>| / (‖x‖‖w‖‖A‖)` for one pair of vectors.
pub fn adjoint_mismatch(a: &dyn LinearMap, x: &[f64], w: &[f64], norm_est: f64) -> f64 {
    let mut ax = vec![0.0; a.rows()];
    let mut atw = vec![0.0; a.cols()];
    a.apply_into(x, &mut ax);
    a.apply_adjoint_into(w, &mut atw);
    let scale = norm(x) * norm(w) * norm_est.max(f64::MIN_POSITIVE);
    (dot(&ax, w) - dot(x, &atw)).abs() / scale
}
