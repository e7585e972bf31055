use crate::error::{Error, Result};

/// Row-major grayscale image.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width * height != pixels.len() {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                got: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn square(side: usize, pixels: Vec<f64>) -> Result<Self> {
        Self::new(side, side, pixels)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }
}

// (intensity, semi-axis a, semi-axis b, x0, y0, rotation in degrees)
const SHEPP_LOGAN: [(f64, f64, f64, f64, f64, f64); 10] = [
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0),
    (-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0),
    (-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0),
    (0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0),
    (0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0),
    (0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0),
    (0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0),
];

/// Ten-ellipse Shepp-Logan head phantom (high-contrast intensities) on an
/// `N×N` grid spanning `[-1, 1]²`, sampled at pixel centers, clamped to
/// `[0, 1]`.
pub fn shepp_logan(side: usize) -> Result<Image> {
    if side < 8 {
        return Err(Error::InvalidArgument("shepp-logan needs N >= 8".into()));
    }
    let h = 2.0 / side as f64;
    let mut px = vec![0.0; side * side];
    for r in 0..side {
        let y = 1.0 - (r as f64 + 0.5) * h;
        for c in 0..side {
            let x = -1.0 + (c as f64 + 0.5) * h;
            let mut v = 0.0;
            for &(amp, a, b, x0, y0, deg) in &SHEPP_LOGAN {
                let (sn, cs) = deg.to_radians().sin_cos();
                let (dx, dy) = (x - x0, y - y0);
                let u = cs * dx + sn * dy;
                let w = -sn * dx + cs * dy;
                if (u / a).powi(2) + (w / b).powi(2) <= 1.0 {
                    v += amp;
                }
            }
            px[r * side + c] = v.clamp(0.0, 1.0);
        }
    }
    Image::square(side, px)
}

/// Piecewise-smooth test image: two boxes, a thin bar and a Gaussian bump,
/// values in `[0, 1]`.
pub fn piecewise_smooth(side: usize) -> Result<Image> {
    if side < 4 {
        return Err(Error::InvalidArgument(
            "piecewise phantom needs N >= 4".into(),
        ));
    }
    let n = side as f64;
    let mut px = vec![0.0; side * side];
    for r in 0..side {
        let y = (r as f64 + 0.5) / n;
        for c in 0..side {
            let x = (c as f64 + 0.5) / n;
            let mut v = 0.0;
            if (0.15..0.45).contains(&x) && (0.2..0.55).contains(&y) {
                v += 0.5;
            }
            if (0.55..0.85).contains(&x) && (0.6..0.8).contains(&y) {
                v += 0.35;
            }
            if (0.2..0.8).contains(&x) && (0.82..0.88).contains(&y) {
                v += 0.25;
            }
            let d2 = (x - 0.68).powi(2) + (y - 0.3).powi(2);
            v += 0.6 * (-d2 / (2.0 * 0.08f64.powi(2))).exp();
            px[r * side + c] = v.clamp(0.0, 1.0);
        }
    }
    Image::square(side, px)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_in_unit_interval() {
        for n in [8, 17, 64] {
            let img = shepp_logan(n).unwrap();
            assert!(img.pixels.iter().all(|v| (0.0..=1.0).contains(v)));
            assert!(img.pixels.iter().any(|v| *v > 0.0));
            let p = piecewise_smooth(n).unwrap();
            assert!(p.pixels.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn full_scale_grid_unknowns() {
        assert_eq!(shepp_logan(256).unwrap().pixels.len(), 65536);
    }

    #[test]
    fn mirror_symmetry_of_outer_ellipses() {
        let n = 64;
        let img = shepp_logan(n).unwrap();
        // the tilted inner ellipses and the three small ones near y = -0.605
        // are asymmetric by design; skip their neighborhoods
        let h = 2.0 / n as f64;
        let mut mismatched = 0;
        for r in 0..n {
            let y = 1.0 - (r as f64 + 0.5) * h;
            for c in 0..n {
                let x = -1.0 + (c as f64 + 0.5) * h;
                if y < -0.5 || (x.abs() < 0.45 && y.abs() < 0.45) {
                    continue;
                }
                if (img.get(r, c) - img.get(r, n - 1 - c)).abs() > 1e-12 {
                    mismatched += 1;
                }
            }
        }
        assert!(mismatched <= 2 * n, "{mismatched} mirrored pixels differ");
    }

    #[test]
    fn rejects_small_grids() {
        assert!(shepp_logan(7).is_err());
        assert!(Image::new(2, 3, vec![0.0; 5]).is_err());
    }
}
