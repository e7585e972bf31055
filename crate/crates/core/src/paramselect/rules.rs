use super::GridSpec;
use crate::error::{Error, Result};
use crate::projected::ProjectedProblem;

const GOLDEN_RTOL: f64 = 1e-4;
const DP_MAX_BISECT: usize = 80;
const DP_RTOL: f64 = 1e-10;
const FLAT_RTOL: f64 = 1e-14;
const LCURVE_FLOOR: f64 = 1e-6;

/// Row count used in the GCV denominator `d − ω·trace`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GcvDenominator {
    /// `k + 1`, the projected row count.
    Projected,
    /// The row count of the full operator.
    Ambient(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleOutcome {
    pub lambda: f64,
    pub objective: f64,
    pub warning: Option<String>,
}

impl RuleOutcome {
    fn ok(lambda: f64, objective: f64) -> Self {
        Self {
            lambda,
            objective,
            warning: None,
        }
    }
}

pub fn lambda_grid(pp: &ProjectedProblem, spec: &GridSpec) -> Vec<f64> {
    let (lo, hi) = spec.bounds(pp);
    log_grid(lo, hi, spec.count)
}

pub(crate) fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| {
            if i + 1 == count {
                hi
            } else if i == 0 {
                lo
            } else {
                (a + (b - a) * i as f64 / (count - 1) as f64).exp()
            }
        })
        .collect()
}

/// Grid argmin followed by golden-section refinement in `ln λ` over the two
/// neighboring cells.
pub(crate) fn minimize_on_grid(f: &dyn Fn(f64) -> f64, grid: &[f64]) -> RuleOutcome {
    let vals: Vec<f64> = grid.iter().map(|&l| f(l)).collect();
    let (mut best, mut vmin, mut vmax) = (0, f64::INFINITY, f64::NEG_INFINITY);
    for (i, &v) in vals.iter().enumerate() {
        if v < vmin {
            vmin = v;
            best = i;
        }
        vmax = vmax.max(v);
    }
    if !vmin.is_finite()
        || (vmax - vmin) <= FLAT_RTOL * vmax.abs().max(vmin.abs()).max(f64::MIN_POSITIVE)
    {
        let mid = (grid[0].ln() * 0.5 + grid[grid.len() - 1].ln() * 0.5).exp();
        return RuleOutcome {
            lambda: mid,
            objective: f(mid),
            warning: Some("flat objective".into()),
        };
    }
    let a = grid[best.saturating_sub(1)].ln();
    let b = grid[(best + 1).min(grid.len() - 1)].ln();
    let (t, v) = golden_section(&|t: f64| f(t.exp()), a, b, GOLDEN_RTOL);
    if v < vmin {
        RuleOutcome::ok(t.exp(), v)
    } else {
        RuleOutcome::ok(grid[best], vmin)
    }
}

fn golden_section(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let t = 0.5 * (a + b);
    (t, f(t))
}

/// Solves `res(λ) = ηε` by bisection on `ln λ`. `residual` overrides the
/// projected residual norm.
pub fn rule_dp(
    pp: &ProjectedProblem,
    eta: f64,
    epsilon: f64,
    grid: &GridSpec,
    residual: Option<&dyn Fn(f64) -> f64>,
) -> Result<RuleOutcome> {
    let res = |l: f64| residual.map_or_else(|| pp.res_norm(l), |r| r(l));
    let target = eta * epsilon;
    let (lo, hi) = grid.bounds(pp);
    let rlo = res(lo);
    if rlo >= target {
        return Err(Error::DiscrepancyInfeasible {
            min_residual: rlo,
            target,
        });
    }
    let rhi = res(hi);
    if rhi <= target {
        let warning = if target >= pp.rhs_norm() {
            "noise estimate exceeds data norm"
        } else {
            "discrepancy root above grid"
        };
        return Ok(RuleOutcome {
            lambda: hi,
            objective: rhi - target,
            warning: Some(warning.into()),
        });
    }
    let (mut a, mut b) = (lo.ln(), hi.ln());
    for _ in 0..DP_MAX_BISECT {
        let m = 0.5 * (a + b);
        let r = res(m.exp());
        if (r - target).abs() <= DP_RTOL * target {
            a = m;
            b = m;
            break;
        }
        if r < target {
            a = m
        } else {
            b = m
        }
    }
    let l = (0.5 * (a + b)).exp();
    Ok(RuleOutcome::ok(l, res(l) - target))
}

/// Weighted GCV functional `res²/(d − ω·Σφ)²`; `ω = 1` is standard GCV.
pub fn gcv_objective(pp: &ProjectedProblem, lambda: f64, omega: f64, denom: GcvDenominator) -> f64 {
    let d = match denom {
        GcvDenominator::Projected => pp.rows() as f64,
        GcvDenominator::Ambient(m) => m as f64,
    };
    let t = d - omega * pp.trace_influence(lambda);
    pp.res_norm_sq(lambda) / (t * t)
}

pub fn rule_gcv(
    pp: &ProjectedProblem,
    omega: f64,
    grid: &GridSpec,
    denom: GcvDenominator,
) -> RuleOutcome {
    minimize_on_grid(
        &|l| gcv_objective(pp, l, omega, denom),
        &lambda_grid(pp, grid),
    )
}

/// Projected UPRE `res² + 2σ²Σφ − (k+1)σ²`.
pub fn upre_objective(pp: &ProjectedProblem, lambda: f64, sigma2: f64) -> f64 {
    pp.res_norm_sq(lambda) + 2.0 * sigma2 * pp.trace_influence(lambda) - pp.rows() as f64 * sigma2
}

pub fn rule_upre(pp: &ProjectedProblem, sigma2: f64, grid: &GridSpec) -> RuleOutcome {
    minimize_on_grid(&|l| upre_objective(pp, l, sigma2), &lambda_grid(pp, grid))
}

/// Signed Menger curvature of three points; positive for a counterclockwise
/// turn.
fn menger(p: (f64, f64), q: (f64, f64), r: (f64, f64), floor: f64) -> f64 {
    let d = |a: (f64, f64), b: (f64, f64)| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
    let (a, b, c) = (d(p, q), d(q, r), d(p, r));
    if a < floor || b < floor || c < floor {
        return 0.0;
    }
    let cross = (q.0 - p.0) * (r.1 - q.1) - (q.1 - p.1) * (r.0 - q.0);
    2.0 * cross / (a * b * c)
}

/// Discrete curvature of `(ln res, ln sol)` at interior grid points.
///
/// Triples whose chords are shorter than `LCURVE_FLOOR` times the extent of
/// the sampled curve count as straight. This suppresses the curvature of the
/// flat end pieces, where the points pile up as `λ → 0` or `λ → ∞`.
pub(crate) fn lcurve_curvature(pp: &ProjectedProblem, grid: &[f64]) -> Vec<f64> {
    let pts: Vec<(f64, f64)> = grid
        .iter()
        .map(|&l| (pp.res_norm(l).ln(), pp.sol_norm(l).ln()))
        .collect();
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for &(x, y) in &pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let extent = ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt();
    let floor = (LCURVE_FLOOR * extent).max(1e-12);
    let mut kappa = vec![f64::NEG_INFINITY; grid.len()];
    for i in 1..grid.len() - 1 {
        let k = menger(pts[i - 1], pts[i], pts[i + 1], floor);
        kappa[i] = if k.is_finite() { k } else { 0.0 };
    }
    kappa
}

/// Grid points inside `[σ_min², σ₁²]`, the part of the L-curve between its
/// flat ends.
pub(crate) fn lcurve_grid(pp: &ProjectedProblem, grid: &GridSpec) -> Vec<f64> {
    let s = pp.sigmas();
    let lo = s[s.len() - 1].powi(2);
    let hi = s[0].powi(2);
    let g: Vec<f64> = lambda_grid(pp, grid)
        .into_iter()
        .filter(|&l| l >= lo && l <= hi)
        .collect();
    if g.len() >= 3 {
        g
    } else {
        lambda_grid(pp, grid)
    }
}

/// L-curve corner: the λ of maximal positive Menger curvature. Falls back to
/// an endpoint with a warning when there is no interior maximum.
pub fn rule_lcurve(pp: &ProjectedProblem, grid: &GridSpec) -> RuleOutcome {
    let g = lcurve_grid(pp, grid);
    let kappa = lcurve_curvature(pp, &g);
    let (best, kmax) =
        kappa.iter().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, &k)| if k > acc.1 { (i, k) } else { acc },
        );
    if kmax <= 0.0 {
        return RuleOutcome {
            lambda: g[0],
            objective: 0.0,
            warning: Some("l-curve has no corner".into()),
        };
    }
    if best == 1 || best == g.len() - 2 {
        let end = if best == 1 { 0 } else { g.len() - 1 };
        return RuleOutcome {
            lambda: g[end],
            objective: kmax,
            warning: Some("curvature maximal at grid end".into()),
        };
    }
    RuleOutcome::ok(g[best], kmax)
}

/// Regińska-type fixed point `λ = (res(λ)/sol(λ))²`, iterated from
/// `(β₁/sol(λ_lo))²`.
///
/// Returns the last iterate with a warning after `max_iters`, and falls back
/// to a bracketing search when the plain iteration oscillates.
pub fn rule_reginska_fixed_point(
    pp: &ProjectedProblem,
    tol: f64,
    max_iters: usize,
    grid: &GridSpec,
) -> Result<RuleOutcome> {
    let (lo, hi) = grid.bounds(pp);
    let map = |l: f64| -> Result<f64> {
        let s = pp.sol_norm(l);
        if !(s > 0.0) {
            return Err(Error::SolutionCollapsed);
        }
        Ok((pp.res_norm(l) / s).powi(2))
    };
    let s0 = pp.sol_norm(lo);
    if !(s0 > 0.0) {
        return Err(Error::SolutionCollapsed);
    }
    let mut l = ((pp.rhs_norm() / s0).powi(2)).clamp(lo, hi);
    for _ in 0..max_iters {
        let raw = map(l)?;
        if (raw - l).abs() <= tol * l {
            return Ok(RuleOutcome::ok(l, raw));
        }
        let next = raw.clamp(lo, hi);
        if next == l {
            break;
        }
        l = next;
    }
    // bracket a root of ln T(λ) − ln λ on the grid and bisect
    let h = |l: f64| -> Result<f64> { Ok(map(l)?.ln() - l.ln()) };
    let g = lambda_grid(pp, grid);
    let mut prev = (g[g.len() - 1], h(g[g.len() - 1])?);
    for &x in g.iter().rev().skip(1) {
        let hx = h(x)?;
        if hx.signum() != prev.1.signum() {
            let (mut a, mut b) = (x.ln(), prev.0.ln());
            let ha = hx;
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                let hm = h(m.exp())?;
                if hm.signum() == ha.signum() {
                    a = m
                } else {
                    b = m
                }
                if b - a < tol * 1e-2 {
                    break;
                }
            }
            let root = (0.5 * (a + b)).exp();
            let t = map(root)?;
            let warning = ((t - root).abs() > tol * root)
                .then(|| "fixed point not resolved by bisection".to_string());
            return Ok(RuleOutcome {
                lambda: root,
                objective: t,
                warning,
            });
        }
        prev = (x, hx);
    }
    Ok(RuleOutcome {
        lambda: l,
        objective: map(l)?,
        warning: Some("fixed-point iteration did not converge".into()),
    })
}

/// Grid argmin of the true relative error `‖lift(y(λ)) − x_true‖/‖x_true‖`.
pub fn rule_optimal(
    pp: &ProjectedProblem,
    lift: &dyn Fn(&[f64]) -> Vec<f64>,
    x_true: &[f64],
    grid: &GridSpec,
) -> RuleOutcome {
    let g = lambda_grid(pp, grid);
    let err = |l: f64| {
        let y = crate::projected::solve_projected_tikhonov(pp, l)
            .map(|s| s.y)
            .unwrap_or_default();
        if y.is_empty() {
            return f64::INFINITY;
        }
        crate::linalg::rel_err(&lift(&y), x_true)
    };
    let mut best = (g[0], f64::INFINITY);
    for &l in &g {
        let e = err(l);
        if e < best.1 {
            best = (l, e);
        }
    }
    RuleOutcome::ok(best.0, best.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::krylov::testutil::{random_matrix, random_vec};
    use nalgebra::DMatrix;

    fn random_pp(seed: u64) -> ProjectedProblem {
        ProjectedProblem::with_beta(random_matrix(6, 5, seed), 2.0).unwrap()
    }

    /// Decaying spectrum with Picard-decaying data plus a noise floor, like a
    /// projected inverse problem.
    fn ill_posed_pp(seed: u64, k: usize) -> ProjectedProblem {
        let qa = random_matrix(k + 1, k + 1, seed).qr().q();
        let qb = random_matrix(k, k, seed + 1).qr().q();
        let r = random_vec(2 * k + 1, seed + 2);
        let sig: Vec<f64> = (0..k)
            .map(|i| 10f64.powf(-4.0 * i as f64 / (k - 1) as f64))
            .collect();
        let g = qa.columns(0, k)
            * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(sig.clone()))
            * qb.transpose();
        let c: Vec<f64> = (0..=k)
            .map(|i| {
                if i < k {
                    sig[i] * (1.0 + 0.3 * r[i]) + 1e-3 * r[k + i]
                } else {
                    1e-3 * r[2 * k]
                }
            })
            .collect();
        let rhs = (&qa * nalgebra::DVector::from_vec(c)).as_slice().to_vec();
        ProjectedProblem::new(g, rhs).unwrap()
    }

    fn cell(grid: &GridSpec) -> f64 {
        (grid.upper / grid.lower).ln() / (grid.count - 1) as f64
    }

    fn brute_argmin(
        f: &dyn Fn(f64) -> f64,
        pp: &ProjectedProblem,
        grid: &GridSpec,
        n: usize,
    ) -> f64 {
        let (lo, hi) = grid.bounds(pp);
        let g = log_grid(lo, hi, n);
        *g.iter().min_by(|a, b| f(**a).total_cmp(&f(**b))).unwrap()
    }

    #[test]
    fn dp_recovers_constructed_root() {
        let grid = GridSpec::default();
        for seed in 0..10 {
            let pp = random_pp(seed);
            let eps = pp.res_norm(1.0) / 1.01;
            let out = rule_dp(&pp, 1.01, eps, &grid, None).unwrap();
            assert!((out.lambda - 1.0).abs() <= 1e-6, "{}", out.lambda);
            assert!((pp.res_norm(out.lambda) - 1.01 * eps).abs() <= 1e-8 * 1.01 * eps);
        }
    }

    #[test]
    fn dp_edge_cases() {
        let grid = GridSpec::default();
        let mut g = DMatrix::zeros(4, 3);
        g.view_mut((0, 0), (3, 3))
            .copy_from(&(DMatrix::identity(3, 3) * 2.0));
        let pp = ProjectedProblem::with_beta(g, 1.0).unwrap();
        assert!(matches!(
            rule_dp(&pp, 1.01, 0.0, &grid, None),
            Err(Error::DiscrepancyInfeasible { .. })
        ));
        let out = rule_dp(&pp, 1.01, 10.0, &grid, None).unwrap();
        assert!(out.warning.is_some());
        assert_eq!(out.lambda, grid.bounds(&pp).1);
    }

    #[test]
    fn unit_weight_is_standard_gcv() {
        let pp = random_pp(4);
        for l in log_grid(1e-6, 1e2, 30) {
            let direct = pp.res_norm_sq(l) / (6.0 - pp.trace_influence(l)).powi(2);
            assert!(
                (gcv_objective(&pp, l, 1.0, GcvDenominator::Projected) - direct).abs()
                    <= 1e-14 * direct
            );
        }
    }

    #[test]
    fn grid_rules_match_brute_force() {
        let grid = GridSpec::default();
        for seed in 0..20 {
            let pp = random_pp(seed);
            for w in [1.0, 0.5] {
                let got = rule_gcv(&pp, w, &grid, GcvDenominator::Projected).lambda;
                let bf = brute_argmin(
                    &|l| gcv_objective(&pp, l, w, GcvDenominator::Projected),
                    &pp,
                    &grid,
                    10_000,
                );
                assert!(
                    (got.ln() - bf.ln()).abs() <= cell(&grid),
                    "seed {seed} w {w}: {got} vs {bf}"
                );
            }
            let s2 = 1e-3;
            let got = rule_upre(&pp, s2, &grid).lambda;
            let bf = brute_argmin(&|l| upre_objective(&pp, l, s2), &pp, &grid, 10_000);
            assert!((got.ln() - bf.ln()).abs() <= cell(&grid));
        }
    }

    #[test]
    fn smaller_weight_never_increases_lambda() {
        let grid = GridSpec::default();
        for seed in 0..20 {
            let pp = random_pp(seed);
            let l1 = rule_gcv(&pp, 1.0, &grid, GcvDenominator::Projected).lambda;
            let lw = rule_gcv(&pp, 0.6, &grid, GcvDenominator::Projected).lambda;
            assert!(lw <= l1 * (1.0 + 1e-3), "{lw} > {l1}");
        }
    }

    #[test]
    fn upre_degenerate_and_constant_shift() {
        let grid = GridSpec::default();
        let pp = random_pp(7);
        let out = rule_upre(&pp, 0.0, &grid);
        assert!(out.lambda <= lambda_grid(&pp, &grid)[1]);
        let s2 = 0.01;
        let shifted = minimize_on_grid(
            &|l| pp.res_norm_sq(l) + 2.0 * s2 * pp.trace_influence(l),
            &lambda_grid(&pp, &grid),
        );
        assert!(
            (rule_upre(&pp, s2, &grid).lambda - shifted.lambda).abs() <= 1e-12 * shifted.lambda
        );
    }

    fn two_cluster(scale: f64) -> ProjectedProblem {
        let sig = [1.0, 0.9, 0.8, 1e-3, 9e-4, 8e-4];
        let mut g = DMatrix::zeros(7, 6);
        for (i, s) in sig.iter().enumerate() {
            g[(i, i)] = *s;
        }
        // Picard-decaying signal on the large cluster, noise floor elsewhere
        let noise = random_vec(7, 3);
        let rhs: Vec<f64> = (0..7)
            .map(|i| scale * (if i < 3 { 1.0 } else { 0.0 } + 1e-2 * (noise[i] + 1.5)))
            .collect();
        ProjectedProblem::new(g, rhs).unwrap()
    }

    #[test]
    fn lcurve_corner_against_fine_grid() {
        let grid = GridSpec::default();
        let pp = two_cluster(1.0);
        let out = rule_lcurve(&pp, &grid);
        assert!(out.warning.is_none());
        let fine = lcurve_grid(
            &pp,
            &GridSpec {
                count: grid.count * 10,
                ..grid
            },
        );
        let kappa = lcurve_curvature(&pp, &fine);
        let imax = (0..fine.len())
            .max_by(|&a, &b| kappa[a].total_cmp(&kappa[b]))
            .unwrap();
        assert!((out.lambda.ln() - fine[imax].ln()).abs() <= cell(&grid) * 1.0001);

        let scaled = rule_lcurve(&two_cluster(37.0), &grid);
        assert!((scaled.lambda - out.lambda).abs() <= 1e-9 * out.lambda);
    }

    #[test]
    fn lcurve_without_corner_warns() {
        let g = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let pp = ProjectedProblem::new(g, vec![1.0, 1.0, 0.0]).unwrap();
        assert!(rule_lcurve(&pp, &GridSpec::default()).warning.is_some());
    }

    #[test]
    fn reginska_is_a_fixed_point() {
        let grid = GridSpec::default();
        for seed in 0..20 {
            let pp = ill_posed_pp(seed, 10);
            let out = rule_reginska_fixed_point(&pp, 1e-10, 200, &grid).unwrap();
            let l = out.lambda;
            let t = (pp.res_norm(l) / pp.sol_norm(l)).powi(2);
            assert!((t - l).abs() <= 1e-6 * l, "seed {seed}: {l} -> {t}");
        }
    }

    #[test]
    fn reginska_agrees_with_damped_multistart() {
        let grid = GridSpec::default();
        let pp = ill_posed_pp(12, 8);
        let out = rule_reginska_fixed_point(&pp, 1e-12, 500, &grid).unwrap();
        let map = |l: f64| (pp.res_norm(l) / pp.sol_norm(l)).powi(2);
        let mut ends = Vec::new();
        for s in 0..10 {
            let mut l = 10f64.powf(-4.0 + 0.5 * s as f64);
            for _ in 0..5000 {
                l = (0.5 * l.ln() + 0.5 * map(l).ln()).exp();
            }
            if (map(l) - l).abs() <= 1e-10 * l {
                ends.push(l);
            }
        }
        assert!(!ends.is_empty());
        assert!(ends
            .iter()
            .any(|e| (e - out.lambda).abs() <= 1e-6 * out.lambda));
    }

    #[test]
    fn optimal_matches_fine_grid() {
        let grid = GridSpec::default();
        let pp = random_pp(3);
        let x_true = vec![0.3, -0.2, 0.5, 0.1, 0.0];
        let lift = |y: &[f64]| y.to_vec();
        let out = rule_optimal(&pp, &lift, &x_true, &grid);
        let (lo, hi) = grid.bounds(&pp);
        let err = |l: f64| {
            let y = crate::projected::solve_projected_tikhonov(&pp, l)
                .unwrap()
                .y;
            crate::linalg::rel_err(&y, &x_true)
        };
        let fine = log_grid(lo, hi, 2000);
        let best = fine
            .iter()
            .cloned()
            .min_by(|a, b| err(*a).total_cmp(&err(*b)))
            .unwrap();
        assert!((out.lambda.ln() - best.ln()).abs() <= cell(&grid));
    }

    #[test]
    fn optimal_on_exactly_representable_truth() {
        let mut g = DMatrix::zeros(4, 3);
        g.view_mut((0, 0), (3, 3))
            .copy_from(&DMatrix::from_row_slice(
                3,
                3,
                &[2.0, 0.1, 0.0, 0.0, 1.0, 0.3, 0.0, 0.0, 0.5],
            ));
        let y_true = nalgebra::DVector::from_vec(vec![1.0, -1.0, 0.5]);
        let rhs = (&g * &y_true).as_slice().to_vec();
        let pp = ProjectedProblem::new(g, rhs).unwrap();
        let grid = GridSpec::default();
        let out = rule_optimal(&pp, &|y: &[f64]| y.to_vec(), y_true.as_slice(), &grid);
        assert_eq!(out.lambda, grid.bounds(&pp).0);
    }
}
