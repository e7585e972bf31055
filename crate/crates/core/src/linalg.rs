//! Small vector kernels and a column-major basis store shared by the Krylov
//! processes.

use nalgebra::DMatrix;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// y += alpha * x
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub fn scale(alpha: f64, x: &mut [f64]) {
    for xi in x.iter_mut() {
        *xi *= alpha;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn rel_err(x: &[f64], truth: &[f64]) -> f64 {
    let d = dist(x, truth);
    let t = norm(truth);
    if t > 0.0 {
        d / t
    } else {
        d
    }
}

/// Growing set of equal-length column vectors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Basis {
    len: usize,
    cols: Vec<Vec<f64>>,
}

impl Basis {
    pub fn new(len: usize) -> Self {
        Self {
            len,
            cols: Vec::new(),
        }
    }

    pub fn vec_len(&self) -> usize {
        self.len
    }

    pub fn ncols(&self) -> usize {
        self.cols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cols.is_empty()
    }

    pub fn push(&mut self, v: Vec<f64>) {
        assert_eq!(v.len(), self.len, "basis column length");
        self.cols.push(v);
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.cols[j]
    }

    pub fn cols(&self) -> &[Vec<f64>] {
        &self.cols
    }

    /// First `k` columns times `y`.
    pub fn combine(&self, y: &[f64]) -> Vec<f64> {
        assert!(y.len() <= self.cols.len());
        let mut out = vec![0.0; self.len];
        for (c, &yj) in self.cols.iter().zip(y) {
            if yj != 0.0 {
                axpy(yj, c, &mut out);
            }
        }
        out
    }

    /// `[<c_j, x>]_j` over the first `k` columns.
    pub fn project(&self, x: &[f64], k: usize) -> Vec<f64> {
        self.cols[..k].iter().map(|c| dot(c, x)).collect()
    }

    /// Two passes of modified Gram-Schmidt of `w` against the first `k`
    /// columns. Returns the accumulated coefficients.
    pub fn orthogonalize(&self, w: &mut [f64], k: usize, passes: usize) -> Vec<f64> {
        let mut h = vec![0.0; k];
        for _ in 0..passes {
            for (j, c) in self.cols[..k].iter().enumerate() {
                let r = dot(c, w);
                axpy(-r, c, w);
                h[j] += r;
            }
        }
        h
    }

    /// Largest |<c_i, c_j>| for i != j and largest |‖c_i‖ - 1|, skipping zero
    /// columns (placeholders left by a breakdown).
    pub fn orthogonality_error(&self) -> f64 {
        let live: Vec<&Vec<f64>> = self.cols.iter().filter(|c| norm(c) > 0.0).collect();
        let mut worst: f64 = 0.0;
        for i in 0..live.len() {
            worst = worst.max((norm(live[i]) - 1.0).abs());
            for j in 0..i {
                worst = worst.max(dot(live[i], live[j]).abs());
            }
        }
        worst
    }

    pub fn to_matrix(&self, k: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.len, k, |i, j| self.cols[j][i])
    }
}
