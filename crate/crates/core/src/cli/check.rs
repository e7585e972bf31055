use super::pgm::normalize;
use crate::direct::{tikhonov_direct, DenseSVD};
use crate::error::Result;
use crate::hybrid::{run_hybrid, theorem_equivalence_check, HybridOptions, Method, StopFlags};
use crate::krylov::{ArnoldiFactorization, GkbFactorization};
use crate::linalg::rel_err;
use crate::operators::{
    adjoint_mismatch, build_tomo, densify, estimate_norm, BlurOperator, DenseMatrixMap, LinearMap,
};
use crate::paramselect::{Rule, RuleConfig};
use crate::projected::ProjectedProblem;
use crate::testproblems::{
    default_tomo_geometry, estimate_noise_sigma, gaussian_vector, PsfParams,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Result of one invariant check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed value against its tolerance.
    pub detail: String,
}

fn outcome(name: &'static str, worst: f64, tol: f64) -> CheckOutcome {
    CheckOutcome {
        name,
        passed: worst <= tol,
        detail: format!("worst {worst:.3e} (tol {tol:.0e})"),
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, m: usize, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0))
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn operators() -> Result<Vec<(&'static str, Box<dyn LinearMap>)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (p, angles) = default_tomo_geometry(16, 24);
    Ok(vec![
        (
            "dense",
            Box::new(DenseMatrixMap::from_matrix(&random_matrix(
                &mut rng, 30, 20,
            ))),
        ),
        (
            "deblur",
            Box::new(BlurOperator::new(16, PsfParams::default().build()?)?),
        ),
        ("tomo", Box::new(build_tomo(16, p, &angles)?)),
    ])
}

fn adjoint_check() -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for (_, a) in operators()? {
        let nrm = estimate_norm(&*a, 30);
        for _ in 0..5 {
            let x = random_vec(&mut rng, a.cols());
            let w = random_vec(&mut rng, a.rows());
            worst = worst.max(adjoint_mismatch(&*a, &x, &w, nrm));
        }
    }
    Ok(outcome("adjoint consistency", worst, 1e-12))
}

fn factorization_check() -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for (_, a) in operators()? {
        let dense = densify(&*a);
        let scale = dense.norm();
        let b = random_vec(&mut rng, a.rows());
        let k = 12;
        let mut g = GkbFactorization::new(&b, a.cols(), true)?;
        while g.k() < k && !g.breakdown() {
            g.step(&*a)?;
        }
        let kk = g.k();
        let v = g.v_basis().to_matrix(kk);
        let u = g.u_basis().to_matrix(kk + 1);
        worst = worst.max((&dense * &v - &u * g.b_matrix(kk)).norm() / scale);
        worst = worst
            .max(g.u_basis().orthogonality_error())
            .max(g.v_basis().orthogonality_error());
        if a.is_square() {
            let mut f = ArnoldiFactorization::new(&b, true)?;
            while f.k() < k && !f.breakdown() {
                f.step(&*a)?;
            }
            let kk = f.k();
            let vk = f.basis().to_matrix(kk);
            let vk1 = f.basis().to_matrix(kk + 1);
            worst = worst.max((&dense * vk - vk1 * f.h_matrix(kk)).norm() / scale);
            worst = worst.max(f.basis().orthogonality_error());
        }
    }
    Ok(outcome("krylov factorization identities", worst, 1e-8))
}

fn theorem_check() -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut failures = 0;
    let mut total = 0;
    for _ in 0..10 {
        let a = random_matrix(&mut rng, 12, 10);
        let b = random_vec(&mut rng, 12);
        for lambda in [1e-3, 1.0, 1e3] {
            for k in [1, 3, 6] {
                total += 1;
                if !theorem_equivalence_check(&a, &b, lambda, k)? {
                    failures += 1;
                }
            }
        }
    }
    Ok(CheckOutcome {
        name: "projection/regularization equivalence",
        passed: failures == 0,
        detail: format!("{failures} of {total} cases failed"),
    })
}

fn full_rank_check() -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let a = random_matrix(&mut rng, 15, 10);
        let b = random_vec(&mut rng, 15);
        let lambda = rng.random_range(1e-3..1.0);
        let mut opts = HybridOptions::new(Method::HybridLsqr, RuleConfig::new(Rule::Fixed(lambda)));
        opts.max_iter = 10;
        opts.min_iter = 1;
        opts.stop_on = StopFlags::NONE;
        let log = run_hybrid(&DenseMatrixMap::from_matrix(&a), &b, &opts, None)?;
        let direct = tikhonov_direct(&DenseSVD::new(&a)?, &b, lambda)?;
        worst = worst.max(rel_err(&log.x, &direct));
    }
    Ok(outcome(
        "hybrid at full dimension equals direct tikhonov",
        worst,
        1e-7,
    ))
}

fn projected_formula_check() -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let (r, k) = (rng.random_range(4..10), 3);
        let g = random_matrix(&mut rng, r, k);
        let c = random_vec(&mut rng, r);
        let lambda = 10f64.powf(rng.random_range(-3.0..1.0));
        let pp = ProjectedProblem::new(g.clone(), c.clone())?;
        let h = g.transpose() * &g + DMatrix::identity(k, k) * lambda;
        let cv = DVector::from_vec(c);
        let y = h
            .clone()
            .lu()
            .solve(&(g.transpose() * &cv))
            .expect("spd system");
        let res = (&g * &y - &cv).norm();
        let infl = &g * h.lu().try_inverse().expect("spd inverse") * g.transpose();
        worst = worst
            .max((pp.res_norm(lambda) - res).abs() / res.max(1e-300))
            .max((pp.sol_norm(lambda) - y.norm()).abs() / y.norm().max(1e-300))
            .max((pp.trace_influence(lambda) - infl.trace()).abs() / infl.trace().max(1e-300));
    }
    Ok(outcome("projected SVD formulas", worst, 1e-10))
}

fn noise_estimator_check() -> CheckOutcome {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let sigma = 0.03;
        let e: Vec<f64> = gaussian_vector(4096, seed)
            .iter()
            .map(|v| sigma * v)
            .collect();
        worst = worst.max((estimate_noise_sigma(&e) / sigma - 1.0).abs());
    }
    outcome("wavelet noise estimator", worst, 0.2)
}

fn pgm_check() -> Result<CheckOutcome> {
    let (bytes, _) = normalize(&[0.0, 1.0, 2.0, 3.0])?;
    let (flat, _) = normalize(&[5.0; 4])?;
    let ok = bytes == [0, 85, 170, 255] && flat.iter().all(|&b| b == 128);
    Ok(CheckOutcome {
        name: "pgm normalization",
        passed: ok,
        detail: format!("{bytes:?}"),
    })
}

/// Runs every check; a check that errors counts as failed.
pub fn run_checks() -> Vec<CheckOutcome> {
    let checks: Vec<(&'static str, Box<dyn Fn() -> Result<CheckOutcome>>)> = vec![
        ("adjoint consistency", Box::new(adjoint_check)),
        (
            "krylov factorization identities",
            Box::new(factorization_check),
        ),
        (
            "projection/regularization equivalence",
            Box::new(theorem_check),
        ),
        (
            "hybrid at full dimension equals direct tikhonov",
            Box::new(full_rank_check),
        ),
        ("projected SVD formulas", Box::new(projected_formula_check)),
        (
            "wavelet noise estimator",
            Box::new(|| Ok(noise_estimator_check())),
        ),
        ("pgm normalization", Box::new(pgm_check)),
    ];
    checks
        .into_iter()
        .map(|(name, f)| {
            f().unwrap_or_else(|e| CheckOutcome {
                name,
                passed: false,
                detail: format!("error: {e}"),
            })
        })
        .collect()
}

pub fn format_outcomes(outcomes: &[CheckOutcome]) -> String {
    let mut s = String::new();
    for o in outcomes {
        s.push_str(&format!(
            "{} {:<48} {}\n",
            if o.passed { "PASS" } else { "FAIL" },
            o.name,
            o.detail
        ));
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    s.push_str(&format!("{} checks, {failed} failed\n", outcomes.len()));
    s
}
