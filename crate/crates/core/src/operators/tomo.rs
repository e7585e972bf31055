use super::LinearMap;
use crate::error::{Error, Result};

/// Parallel-beam projector on an `N×N` grid of unit pixels centered at the
/// origin. Row `i` holds the exact chord lengths of ray `i` through every
/// pixel it crosses, stored as compressed rows.
///
/// Ray `j` of view `θ` is the line `t_j·(cos θ, sin θ) + s·(−sin θ, cos θ)`
/// with offsets equispaced over a detector of width `N·√2`. Pixel `(r, c)`
/// (row-major, row 0 at the top) covers `x ∈ [c − N/2, c + 1 − N/2]`,
/// `y ∈ [N/2 − r − 1, N/2 − r]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TomoOperator {
    side: usize,
    rays_per_view: usize,
    angles_deg: Vec<f64>,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
}

const MIN_SEGMENT: f64 = 1e-12;

pub fn build_tomo(side: usize, rays_per_view: usize, angles_deg: &[f64]) -> Result<TomoOperator> {
    if side == 0 || rays_per_view == 0 {
        return Err(Error::InvalidArgument(
            "tomography needs N >= 1 and p >= 1".into(),
        ));
    }
    if angles_deg.is_empty() {
        return Err(Error::InvalidArgument(
            "tomography needs at least one angle".into(),
        ));
    }
    let n = side as f64;
    let half = 0.5 * n;
    let width = n * std::f64::consts::SQRT_2;
    let mut row_ptr = vec![0];
    let mut col_idx = Vec::new();
    let mut vals = Vec::new();
    let mut params: Vec<f64> = Vec::with_capacity(2 * side + 4);

    for &deg in angles_deg {
        let (sn, cs) = deg.to_radians().sin_cos();
        let dir = (-sn, cs);
        for j in 0..rays_per_view {
            let t = -0.5 * width + (j as f64 + 0.5) * width / rays_per_view as f64;
            let origin = (t * cs, t * sn);
            trace_ray(
                origin,
                dir,
                half,
                side,
                &mut params,
                &mut col_idx,
                &mut vals,
            );
            row_ptr.push(col_idx.len());
        }
    }
    Ok(TomoOperator {
        side,
        rays_per_view,
        angles_deg: angles_deg.to_vec(),
        row_ptr,
        col_idx,
        vals,
    })
}

/// Clips the line to the grid, merges the parametric crossings of vertical
/// and horizontal grid lines and emits one `(pixel, length)` per segment.
fn trace_ray(
    origin: (f64, f64),
    dir: (f64, f64),
    half: f64,
    side: usize,
    params: &mut Vec<f64>,
    col_idx: &mut Vec<usize>,
    vals: &mut Vec<f64>,
) {
    let (mut s_lo, mut s_hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for (o, d) in [(origin.0, dir.0), (origin.1, dir.1)] {
        if d.abs() < 1e-15 {
            if o <= -half || o >= half {
                return;
            }
        } else {
            let a = (-half - o) / d;
            let b = (half - o) / d;
            s_lo = s_lo.max(a.min(b));
            s_hi = s_hi.min(a.max(b));
        }
    }
    if s_hi - s_lo <= MIN_SEGMENT {
        return;
    }
    params.clear();
    params.push(s_lo);
    params.push(s_hi);
    for (o, d) in [(origin.0, dir.0), (origin.1, dir.1)] {
        if d.abs() < 1e-15 {
            continue;
        }
        for k in 0..=side {
            let s = (k as f64 - half - o) / d;
            if s > s_lo && s < s_hi {
                params.push(s);
            }
        }
    }
    params.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rows_start = col_idx.len();
    for w in params.windows(2) {
        let len = w[1] - w[0];
        if len <= MIN_SEGMENT {
            continue;
        }
        let mid = 0.5 * (w[0] + w[1]);
        let x = origin.0 + mid * dir.0;
        let y = origin.1 + mid * dir.1;
        let c = ((x + half).floor() as isize).clamp(0, side as isize - 1) as usize;
        let r = ((half - y).floor() as isize).clamp(0, side as isize - 1) as usize;
        let pix = r * side + c;
        // consecutive segments in the same pixel only happen on grid corners
        if col_idx.len() > rows_start && *col_idx.last().unwrap() == pix {
            *vals.last_mut().unwrap() += len;
        } else {
            col_idx.push(pix);
            vals.push(len);
        }
    }
}

impl TomoOperator {
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn rays_per_view(&self) -> usize {
        self.rays_per_view
    }

    pub fn angles_deg(&self) -> &[f64] {
        &self.angles_deg
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// `(pixel, length)` pairs of ray `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[a..b]
            .iter()
            .copied()
            .zip(self.vals[a..b].iter().copied())
    }
}

impl LinearMap for TomoOperator {
    fn rows(&self) -> usize {
        self.row_ptr.len() - 1
    }
    fn cols(&self) -> usize {
        self.side * self.side
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, a)| a * x[j]).sum();
        }
    }
    fn apply_adjoint_into(&self, w: &[f64], z: &mut [f64]) {
        z.fill(0.0);
        for (i, wi) in w.iter().enumerate() {
            if *wi != 0.0 {
                for (j, a) in self.row(i) {
                    z[j] += a * wi;
                }
            }
        }
    }
}
