use super::LinearMap;
use crate::error::{Error, Result};

/// Square `(2r+1)×(2r+1)` point spread function, row-major, unit sum.
#[derive(Debug, Clone, PartialEq)]
pub struct Psf {
    radius: usize,
    values: Vec<f64>,
}

impl Psf {
    /// Builds a kernel from raw values and renormalizes it to unit sum.
    pub fn new(radius: usize, values: Vec<f64>) -> Result<Self> {
        let side = 2 * radius + 1;
        if values.len() != side * side {
            return Err(Error::DimensionMismatch {
                expected: side * side,
                got: values.len(),
            });
        }
        let total: f64 = values.iter().sum();
        if !(total.is_finite() && total > 0.0) || values.iter().any(|v| *v < 0.0) {
            return Err(Error::InvalidArgument(
                "psf must be nonnegative with positive mass".into(),
            ));
        }
        Ok(Self {
            radius,
            values: values.into_iter().map(|v| v / total).collect(),
        })
    }

    pub fn delta() -> Self {
        Self {
            radius: 0,
            values: vec![1.0],
        }
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Entry at offset `(dp, dq)` from the center.
    pub fn at(&self, dp: isize, dq: isize) -> f64 {
        let r = self.radius as isize;
        let s = self.side();
        self.values[((dp + r) as usize) * s + (dq + r) as usize]
    }
}

/// Rotated anisotropic Gaussian sampled on integer offsets, truncated to
/// radius `r` and renormalized to unit sum. `s1` is the spread along the
/// direction at angle `theta` from the column axis, `s2` across it.
pub fn build_gaussian_psf(r: usize, s1: f64, s2: f64, theta: f64) -> Result<Psf> {
    if !(s1 > 0.0 && s2 > 0.0) {
        return Err(Error::InvalidArgument(
            "gaussian spreads must be positive".into(),
        ));
    }
    let side = 2 * r + 1;
    let (sn, cs) = theta.sin_cos();
    let mut vals = Vec::with_capacity(side * side);
    for p in 0..side {
        let dy = p as f64 - r as f64;
        for q in 0..side {
            let dx = q as f64 - r as f64;
            let u = cs * dx + sn * dy;
            let v = -sn * dx + cs * dy;
            vals.push((-0.5 * (u * u / (s1 * s1) + v * v / (s2 * s2))).exp());
        }
    }
    Psf::new(r, vals)
}

/// 2-D convolution of an `N×N` image (row-major vector of length `N²`) with
/// a PSF under reflective boundary conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct BlurOperator {
    side: usize,
    psf: Psf,
}

impl BlurOperator {
    pub fn new(side: usize, psf: Psf) -> Result<Self> {
        if side == 0 {
            return Err(Error::InvalidArgument("image side must be positive".into()));
        }
        Ok(Self { side, psf })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn psf(&self) -> &Psf {
        &self.psf
    }

    /// Visits every `(output index, input index, weight)` triple.
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, f64)) {
        let n = self.side as isize;
        let r = self.psf.radius as isize;
        for i in 0..n {
            for j in 0..n {
                let out = (i * n + j) as usize;
                for dp in -r..=r {
                    let si = reflect(i - dp, n);
                    for dq in -r..=r {
                        let w = self.psf.at(dp, dq);
                        if w == 0.0 {
                            continue;
                        }
                        let sj = reflect(j - dq, n);
                        f(out, (si * n + sj) as usize, w);
                    }
                }
            }
        }
    }
}

/// Half-sample symmetric reflection into `[0, n)`: `-1 -> 0`, `n -> n-1`.
fn reflect(i: isize, n: isize) -> isize {
    let period = 2 * n;
    let k = i.rem_euclid(period);
    if k < n {
        k
    } else {
        period - 1 - k
    }
}

impl LinearMap for BlurOperator {
    fn rows(&self) -> usize {
        self.side * self.side
    }
    fn cols(&self) -> usize {
        self.side * self.side
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        self.for_each_tap(|out, src, w| y[out] += w * x[src]);
    }
    fn apply_adjoint_into(&self, w: &[f64], z: &mut [f64]) {
        z.fill(0.0);
        self.for_each_tap(|out, src, a| z[src] += a * w[out]);
    }
}
