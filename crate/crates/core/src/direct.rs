//! Dense SVD reference solutions for small problems.

use crate::error::{Error, Result};
use crate::operators::{densify, LinearMap};
use crate::paramselect::{log_grid, minimize_on_grid, GridSpec, Rule, RuleConfig};
use crate::projected::{filter_factors, RANK_RTOL};
use nalgebra::{DMatrix, DVector};

/// Largest dimension accepted by the dense oracle.
pub const ORACLE_LIMIT: usize = 512;

/// Full SVD `A = U Σ Vᵀ` with square `U` and `V`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSVD {
    pub u: DMatrix<f64>,
    pub sigmas: Vec<f64>,
    pub v: DMatrix<f64>,
}

/// Extends the orthonormal columns of `q` to a square orthogonal matrix.
fn complete(q: DMatrix<f64>) -> DMatrix<f64> {
    let (m, r) = q.shape();
    if r == m {
        return q;
    }
    let mut aug = DMatrix::zeros(m, r + m);
    aug.view_mut((0, 0), (m, r)).copy_from(&q);
    aug.view_mut((0, r), (m, m)).fill_with_identity();
    let mut full = aug.qr().q();
    // the leading block spans the same space; keep the given columns exactly
    full.view_mut((0, 0), (m, r)).copy_from(&q);
    full
}

impl DenseSVD {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        let (m, n) = a.shape();
        if m > ORACLE_LIMIT || n > ORACLE_LIMIT {
            return Err(Error::OracleTooLarge {
                m,
                n,
                limit: ORACLE_LIMIT,
            });
        }
        if m == 0 || n == 0 {
            return Err(Error::InvalidArgument("empty matrix".into()));
        }
        let svd = a.clone().svd(true, true);
        let (u, vt) = (svd.u.expect("requested u"), svd.v_t.expect("requested v"));
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
        let sigmas = order.iter().map(|&i| svd.singular_values[i]).collect();
        let u = DMatrix::from_fn(m, order.len(), |r, c| u[(r, order[c])]);
        let v = DMatrix::from_fn(n, order.len(), |r, c| vt[(order[c], r)]);
        Ok(Self {
            u: complete(u),
            sigmas,
            v: complete(v),
        })
    }

    pub fn from_operator(a: &dyn LinearMap) -> Result<Self> {
        if a.rows() > ORACLE_LIMIT || a.cols() > ORACLE_LIMIT {
            return Err(Error::OracleTooLarge {
                m: a.rows(),
                n: a.cols(),
                limit: ORACLE_LIMIT,
            });
        }
        Self::new(&densify(a))
    }

    pub fn rows(&self) -> usize {
        self.u.nrows()
    }
    pub fn cols(&self) -> usize {
        self.v.nrows()
    }

    /// Number of singular values above `RANK_RTOL·σ₁`.
    pub fn rank(&self) -> usize {
        let s1 = self.sigmas.first().copied().unwrap_or(0.0);
        self.sigmas.iter().filter(|&&s| s > RANK_RTOL * s1).count()
    }

    /// `Uᵀb`.
    pub fn coefficients(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.rows() {
            return Err(Error::DimensionMismatch {
                expected: self.rows(),
                got: b.len(),
            });
        }
        Ok((self.u.transpose() * DVector::from_column_slice(b))
            .as_slice()
            .to_vec())
    }

    fn expand(&self, coeff: impl Iterator<Item = f64>) -> Vec<f64> {
        let mut x = DVector::zeros(self.cols());
        for (j, c) in coeff.enumerate() {
            if c != 0.0 {
                x.axpy(c, &self.v.column(j), 1.0);
            }
        }
        x.as_slice().to_vec()
    }
}

/// `x(λ) = Σ φᵢ(λ) (uᵢᵀb/σᵢ) vᵢ`.
pub fn tikhonov_direct(svd: &DenseSVD, b: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda must be >= 0, got {lambda}"
        )));
    }
    if lambda == 0.0 && svd.rank() < svd.sigmas.len().min(svd.cols()) {
        return Err(Error::RankDeficient {
            sigma_min: *svd.sigmas.last().unwrap(),
        });
    }
    let p = svd.coefficients(b)?;
    Ok(svd.expand(svd.sigmas.iter().zip(&p).map(|(&s, &pi)| {
        if s == 0.0 {
            0.0
        } else {
            s * pi / (s * s + lambda)
        }
    })))
}

/// Truncated SVD solution from the `trunc` largest triplets.
pub fn tsvd_direct(svd: &DenseSVD, b: &[f64], trunc: usize) -> Result<Vec<f64>> {
    let rank = svd.rank();
    if trunc == 0 || trunc > rank {
        return Err(Error::InvalidArgument(format!(
            "truncation index must be in 1..={rank}"
        )));
    }
    let p = svd.coefficients(b)?;
    Ok(svd
        .expand((0..svd.sigmas.len()).map(|i| if i < trunc { p[i] / svd.sigmas[i] } else { 0.0 })))
}

/// Full-problem rule objective sampled on a λ grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleTable {
    pub rule: Rule,
    pub lambdas: Vec<f64>,
    pub objectives: Vec<f64>,
    /// Refined minimizer (discrepancy root for DP).
    pub argmin: f64,
}

/// Tikhonov quantities of the full problem as functions of λ.
struct FullSpectrum {
    sigmas: Vec<f64>,
    p: Vec<f64>,
    m: usize,
}

impl FullSpectrum {
    fn res_sq(&self, lambda: f64) -> f64 {
        let r = self.sigmas.len();
        let phi = filter_factors(&self.sigmas, lambda);
        let head: f64 = phi
            .iter()
            .zip(&self.p)
            .map(|(f, p)| ((1.0 - f) * p).powi(2))
            .sum();
        head + self.p[r..].iter().map(|p| p * p).sum::<f64>()
    }
    fn sol_sq(&self, lambda: f64) -> f64 {
        self.sigmas
            .iter()
            .zip(&self.p)
            .map(|(&s, &p)| {
                if s == 0.0 {
                    0.0
                } else {
                    (s * p / (s * s + lambda)).powi(2)
                }
            })
            .sum()
    }
    fn trace(&self, lambda: f64) -> f64 {
        filter_factors(&self.sigmas, lambda).iter().sum()
    }
    fn gcv(&self, lambda: f64, omega: f64) -> f64 {
        self.res_sq(lambda) / (self.m as f64 - omega * self.trace(lambda)).powi(2)
    }
    fn upre(&self, lambda: f64, s2: f64) -> f64 {
        self.res_sq(lambda) + 2.0 * s2 * self.trace(lambda) - self.m as f64 * s2
    }
}

/// Evaluates a parameter rule on the full problem over `grid` (scaled by
/// `σ₁²`). L-curve objectives are negated curvatures, Regińska is
/// `‖r‖²‖x‖²`, DP is `‖r‖ − ηε`.
pub fn full_rule_eval(
    svd: &DenseSVD,
    b: &[f64],
    cfg: &RuleConfig,
    grid: &GridSpec,
) -> Result<RuleTable> {
    cfg.validate()?;
    grid.validate()?;
    let fs = FullSpectrum {
        sigmas: svd.sigmas.clone(),
        p: svd.coefficients(b)?,
        m: svd.rows(),
    };
    let s2 = svd.sigmas[0].powi(2).max(f64::MIN_POSITIVE);
    let lambdas = log_grid(grid.lower * s2, grid.upper * s2, grid.count);
    let need = |v: Option<f64>, what: &str| {
        v.ok_or_else(|| Error::Config(format!("{} needs {what}", cfg.rule)))
    };
    let (objectives, argmin) = match cfg.rule {
        Rule::Dp => {
            let target = cfg.eta * need(cfg.epsilon, "epsilon")?;
            let f = |l: f64| fs.res_sq(l).sqrt() - target;
            let obj: Vec<f64> = lambdas.iter().map(|&l| f(l)).collect();
            let (lo, hi) = (lambdas[0], lambdas[lambdas.len() - 1]);
            if f(lo) >= 0.0 {
                return Err(Error::DiscrepancyInfeasible {
                    min_residual: f(lo) + target,
                    target,
                });
            }
            let root = if f(hi) <= 0.0 {
                hi
            } else {
                let (mut a, mut c) = (lo.ln(), hi.ln());
                for _ in 0..200 {
                    let mid = 0.5 * (a + c);
                    if f(mid.exp()) < 0.0 {
                        a = mid
                    } else {
                        c = mid
                    }
                    if c - a < 1e-14 {
                        break;
                    }
                }
                (0.5 * (a + c)).exp()
            };
            (obj, root)
        }
        Rule::Gcv | Rule::Wgcv => {
            let omega = if cfg.rule == Rule::Gcv {
                1.0
            } else {
                cfg.omega.unwrap_or(1.0)
            };
            let f = |l: f64| fs.gcv(l, omega);
            (
                lambdas.iter().map(|&l| f(l)).collect(),
                minimize_on_grid(&f, &lambdas).lambda,
            )
        }
        Rule::Upre => {
            let s2 = need(cfg.sigma2, "sigma2")?;
            let f = |l: f64| fs.upre(l, s2);
            (
                lambdas.iter().map(|&l| f(l)).collect(),
                minimize_on_grid(&f, &lambdas).lambda,
            )
        }
        Rule::Reginska => {
            let f = |l: f64| fs.res_sq(l) * fs.sol_sq(l);
            (
                lambdas.iter().map(|&l| f(l)).collect(),
                minimize_on_grid(&f, &lambdas).lambda,
            )
        }
        Rule::Lcurve => {
            let pts: Vec<(f64, f64)> = lambdas
                .iter()
                .map(|&l| (0.5 * fs.res_sq(l).ln(), 0.5 * fs.sol_sq(l).ln()))
                .collect();
            let mut obj = vec![0.0; lambdas.len()];
            for i in 1..pts.len() - 1 {
                obj[i] = -menger(pts[i - 1], pts[i], pts[i + 1]);
            }
            let best = (1..pts.len() - 1)
                .min_by(|&i, &j| obj[i].total_cmp(&obj[j]))
                .unwrap_or(0);
            (obj, lambdas[best])
        }
        Rule::Optimal | Rule::Fixed(_) => {
            return Err(Error::Config(format!(
                "{} has no full-problem objective",
                cfg.rule
            )));
        }
    };
    Ok(RuleTable {
        rule: cfg.rule,
        lambdas,
        objectives,
        argmin,
    })
}

fn menger(p: (f64, f64), q: (f64, f64), r: (f64, f64)) -> f64 {
    let d = |a: (f64, f64), b: (f64, f64)| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
    let den = d(p, q) * d(q, r) * d(p, r);
    if den == 0.0 {
        return 0.0;
    }
    2.0 * ((q.0 - p.0) * (r.1 - q.1) - (q.1 - p.1) * (r.0 - q.0)) / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hybrid::{run_hybrid, HybridOptions, Method, StopFlags};
    use crate::krylov::testutil::{random_matrix, random_vec};
    use crate::operators::DenseMatrixMap;
    use crate::paramselect::GcvDenominator;

    fn normal_solve(a: &DMatrix<f64>, b: &[f64], lambda: f64) -> DVector<f64> {
        let n = a.ncols();
        (a.transpose() * a + DMatrix::identity(n, n) * lambda)
            .lu()
            .solve(&(a.transpose() * DVector::from_column_slice(b)))
            .unwrap()
    }

    #[test]
    fn svd_is_orthogonal_and_reconstructs() {
        for (m, n) in [(8, 6), (6, 8), (7, 7)] {
            let a = random_matrix(m, n, 1);
            let s = DenseSVD::new(&a).unwrap();
            assert_eq!(s.u.shape(), (m, m));
            assert_eq!(s.v.shape(), (n, n));
            assert!((s.u.transpose() * &s.u - DMatrix::identity(m, m)).norm() < 1e-10);
            assert!((s.v.transpose() * &s.v - DMatrix::identity(n, n)).norm() < 1e-10);
            let mut sig = DMatrix::zeros(m, n);
            for (i, v) in s.sigmas.iter().enumerate() {
                sig[(i, i)] = *v;
            }
            assert!((&s.u * sig * s.v.transpose() - &a).norm() < 1e-10 * a.norm());
            assert!(s.sigmas.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn identity_filter() {
        let s = DenseSVD::new(&DMatrix::identity(4, 4)).unwrap();
        let b = [1.0, -2.0, 3.0, 0.5];
        let x = tikhonov_direct(&s, &b, 0.25).unwrap();
        for (xi, bi) in x.iter().zip(&b) {
            assert!((xi - bi / 1.25).abs() < 1e-14);
        }
        let t = tsvd_direct(&s, &b, 4).unwrap();
        for (xi, bi) in t.iter().zip(&b) {
            assert!((xi - bi).abs() < 1e-14);
        }
    }

    #[test]
    fn tikhonov_matches_normal_equations() {
        let a = random_matrix(8, 6, 2);
        let b = random_vec(8, 3);
        let s = DenseSVD::new(&a).unwrap();
        let x = DVector::from_vec(tikhonov_direct(&s, &b, 0.5).unwrap());
        assert!((&x - normal_solve(&a, &b, 0.5)).norm() < 1e-10 * x.norm());
        let x0 = DVector::from_vec(tikhonov_direct(&s, &b, 0.0).unwrap());
        let r = DVector::from_column_slice(&b) - &a * &x0;
        assert!((a.transpose() * r).norm() < 1e-10 * a.norm() * x0.norm());
    }

    #[test]
    fn tsvd_matches_summation_and_full_truncation() {
        let a = random_matrix(9, 6, 4);
        let b = random_vec(9, 5);
        let s = DenseSVD::new(&a).unwrap();
        let nsvd = a.clone().svd(true, true);
        let (u, vt) = (nsvd.u.unwrap(), nsvd.v_t.unwrap());
        let mut idx: Vec<usize> = (0..6).collect();
        idx.sort_by(|&i, &j| nsvd.singular_values[j].total_cmp(&nsvd.singular_values[i]));
        let bb = DVector::from_column_slice(&b);
        for trunc in 1..=6 {
            let mut want = DVector::zeros(6);
            for &i in &idx[..trunc] {
                want += vt.row(i).transpose() * (u.column(i).dot(&bb) / nsvd.singular_values[i]);
            }
            let got = DVector::from_vec(tsvd_direct(&s, &b, trunc).unwrap());
            assert!((got - &want).norm() < 1e-10 * want.norm());
        }
        let full = DVector::from_vec(tsvd_direct(&s, &b, 6).unwrap());
        let ls = DVector::from_vec(tikhonov_direct(&s, &b, 0.0).unwrap());
        assert!((full - &ls).norm() < 1e-10 * ls.norm());
        assert!(tsvd_direct(&s, &b, 7).is_err());
    }

    #[test]
    fn rank_deficient_rejects_zero_lambda() {
        let mut a = random_matrix(6, 4, 6);
        let c = a.column(0).clone_owned();
        a.set_column(3, &c);
        let s = DenseSVD::new(&a).unwrap();
        assert_eq!(s.rank(), 3);
        assert!(matches!(
            tikhonov_direct(&s, &random_vec(6, 7), 0.0),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn oracle_scale_cap() {
        let a = DMatrix::zeros(513, 2);
        assert!(matches!(
            DenseSVD::new(&a),
            Err(Error::OracleTooLarge { .. })
        ));
    }

    #[test]
    fn gcv_matches_explicit_influence_matrix() {
        let a = random_matrix(10, 8, 8);
        let b = random_vec(10, 9);
        let s = DenseSVD::new(&a).unwrap();
        let grid = GridSpec {
            lower: 1e-6,
            upper: 10.0,
            count: 25,
        };
        let t = full_rule_eval(&s, &b, &RuleConfig::new(Rule::Gcv), &grid).unwrap();
        let bb = DVector::from_column_slice(&b);
        for (&l, &obj) in t.lambdas.iter().zip(&t.objectives) {
            let inv = (a.transpose() * &a + DMatrix::identity(8, 8) * l)
                .try_inverse()
                .unwrap();
            let infl = &a * inv * a.transpose();
            let resid = (DMatrix::identity(10, 10) - &infl) * &bb;
            let want = resid.norm_squared() / (10.0 - infl.trace()).powi(2);
            assert!((obj - want).abs() <= 1e-10 * want);
        }
    }

    #[test]
    fn dp_root_matches_explicit_bisection() {
        let a = random_matrix(12, 8, 10);
        let b = random_vec(12, 11);
        let s = DenseSVD::new(&a).unwrap();
        let x0 = DVector::from_vec(tikhonov_direct(&s, &b, 0.0).unwrap());
        let rmin = (DVector::from_column_slice(&b) - &a * x0).norm();
        let eps = 1.3 * rmin;
        let cfg = RuleConfig::new(Rule::Dp).with_epsilon(eps);
        let t = full_rule_eval(&s, &b, &cfg, &GridSpec::default()).unwrap();
        let res = |l: f64| (DVector::from_column_slice(&b) - &a * normal_solve(&a, &b, l)).norm();
        let (mut lo, mut hi) = (1e-12f64.ln(), 1e3f64.ln());
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if res(mid.exp()) < 1.01 * eps {
                lo = mid
            } else {
                hi = mid
            }
        }
        let want = (0.5 * (lo + hi)).exp();
        assert!((t.argmin / want - 1.0).abs() < 1e-6);
        assert!((res(t.argmin) / (1.01 * eps) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn gcv_numerator_at_zero_is_projector_residual() {
        let a = random_matrix(10, 6, 12);
        let b = random_vec(10, 13);
        let s = DenseSVD::new(&a).unwrap();
        let fs = FullSpectrum {
            sigmas: s.sigmas.clone(),
            p: s.coefficients(&b).unwrap(),
            m: 10,
        };
        let pinv = a.clone().pseudo_inverse(1e-14).unwrap();
        let proj = (DMatrix::identity(10, 10) - &a * pinv) * DVector::from_column_slice(&b);
        assert!((fs.res_sq(0.0) - proj.norm_squared()).abs() < 1e-10);
    }

    #[test]
    fn hybrid_at_full_rank_matches_direct() {
        for seed in 0..5 {
            let am = random_matrix(15, 10, 20 + seed);
            let b = random_vec(15, 40 + seed);
            let s = DenseSVD::new(&am).unwrap();
            let mut o = HybridOptions::new(Method::HybridLsqr, RuleConfig::new(Rule::Fixed(0.1)));
            o.max_iter = 10;
            o.stop_on = StopFlags::NONE;
            let log = run_hybrid(&DenseMatrixMap::from_matrix(&am), &b, &o, None).unwrap();
            let x = DVector::from_vec(tikhonov_direct(&s, &b, 0.1).unwrap());
            assert!((DVector::from_vec(log.x) - &x).norm() <= 1e-7 * x.norm());
        }
    }

    #[test]
    fn projected_lambda_reaches_full_problem_lambda() {
        let n = 12;
        let base = random_matrix(20, n, 3);
        let am = DMatrix::from_fn(20, n, |i, j| base[(i, j)] * 0.6f64.powi(j as i32));
        let xt: Vec<f64> = (0..n).map(|j| 1.0 / (1.0 + j as f64)).collect();
        let noise = random_vec(20, 5);
        let b: Vec<f64> = (&am * DVector::from_vec(xt))
            .iter()
            .zip(&noise)
            .map(|(v, e)| v + 1e-3 * e)
            .collect();
        let s = DenseSVD::new(&am).unwrap();
        let sigma2 = 1e-6 / 3.0;
        for rule in [Rule::Gcv, Rule::Upre] {
            let mut cfg = RuleConfig::new(rule).with_sigma2(sigma2);
            cfg.gcv_denominator = GcvDenominator::Ambient(20);
            let full = full_rule_eval(&s, &b, &cfg, &GridSpec::default()).unwrap();
            let mut o = HybridOptions::new(Method::HybridLsqr, cfg);
            o.max_iter = n;
            o.stop_on = StopFlags::NONE;
            let log = run_hybrid(&DenseMatrixMap::from_matrix(&am), &b, &o, None).unwrap();
            let lk = log.final_record().unwrap().lambda;
            assert!(
                (lk / full.argmin).log10().abs() <= 0.05,
                "{rule}: {lk} vs {}",
                full.argmin
            );
        }
    }
}
