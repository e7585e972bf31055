use super::engine::Engine;
use super::{
    check_stopping, HybridOptions, IterationRecord, Method, RunLog, StopFlags, Termination,
};
use crate::error::{Error, Result};
use crate::krylov::StepStatus;
use crate::linalg::{dist, norm, rel_err};
use crate::operators::{Composed, LinearMap};
use crate::paramselect::{select_lambda, RuleContext, Selection};
use crate::projected::{solve_projected_tikhonov, ProjectedProblem};

/// Hybrid projection: expand the Krylov subspace, choose `λ_k` on the
/// projected problem, solve it, check the stopping rules.
///
/// Unregularized methods (`LsqrPlain`, `GmresPlain`) use `λ = 0`.
pub fn run_hybrid(
    a: &dyn LinearMap,
    b: &[f64],
    opts: &HybridOptions,
    x_true: Option<&[f64]>,
) -> Result<RunLog> {
    run_core(a, b, opts, x_true, None, opts.method.is_plain())
}

/// Runs the chosen method with `λ_k = 0` at every step.
pub fn run_plain(
    a: &dyn LinearMap,
    b: &[f64],
    opts: &HybridOptions,
    x_true: Option<&[f64]>,
) -> Result<RunLog> {
    run_core(a, b, opts, x_true, None, true)
}

/// General-form Tikhonov `min ‖Ax − b‖² + λ‖Lx‖²` through the standard-form
/// problem in `x̄ = L x`, with `l_inv` applying `L⁻¹`.
pub fn run_priorconditioned(
    a: &dyn LinearMap,
    l_inv: &dyn LinearMap,
    b: &[f64],
    opts: &HybridOptions,
    x_true: Option<&[f64]>,
) -> Result<RunLog> {
    if !l_inv.is_square() {
        return Err(Error::NotSquare(
            "priorconditioning (rectangular L is not supported)",
        ));
    }
    let abar = Composed::new(a, l_inv)?;
    run_core(&abar, b, opts, x_true, Some(l_inv), opts.method.is_plain())
}

fn run_core(
    a: &dyn LinearMap,
    b: &[f64],
    opts: &HybridOptions,
    x_true: Option<&[f64]>,
    post: Option<&dyn LinearMap>,
    zero_lambda: bool,
) -> Result<RunLog> {
    opts.validate()?;
    if let Some(xt) = x_true {
        let n = post.map_or(a.cols(), |p| p.rows());
        if xt.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: xt.len(),
            });
        }
    }
    let mut engine = Engine::new(opts.method, a, b, opts.reorth)?;
    let to_x = |xbar: Vec<f64>| match post {
        Some(p) => {
            let mut out = vec![0.0; p.rows()];
            p.apply_into(&xbar, &mut out);
            out
        }
        None => xbar,
    };

    let mut records: Vec<IterationRecord> = Vec::new();
    let mut last: Option<(ProjectedProblem, Vec<f64>, Vec<f64>)> = None;
    let mut streak = 0;
    let mut omega_hist: Vec<f64> = Vec::new();
    let termination;
    loop {
        let Some(status) = engine.expand(a)? else {
            if records.is_empty() {
                return Err(Error::Breakdown { step: 0 });
            }
            termination = Termination::Breakdown;
            break;
        };
        let k = engine.k();
        let pp = engine.projected()?;
        let sel = if zero_lambda {
            Selection {
                lambda: 0.0,
                objective: 0.0,
                feasible: true,
                omega: None,
                omega_sample: None,
                warning: None,
            }
        } else {
            let lift = |y: &[f64]| to_x(engine.lift(y));
            let lsmr_res = |l: f64| {
                solve_projected_tikhonov(&pp, l)
                    .map_or(f64::INFINITY, |s| norm(&engine.residual_coords(&pp, &s.y)))
            };
            let ctx = RuleContext {
                lift: Some(&lift),
                x_true,
                residual: if opts.method == Method::HybridLsmr {
                    Some(&lsmr_res)
                } else {
                    None
                },
                omega_history: &omega_hist,
            };
            select_lambda(&pp, &opts.rule, &ctx)?
        };
        omega_hist.extend(sel.omega_sample);
        if let Some(w) = &sel.warning {
            log::debug!("k={k}: {w}");
        }
        let sol = match solve_projected_tikhonov(&pp, sel.lambda) {
            Ok(s) => s,
            Err(Error::RankDeficient { sigma_min }) => {
                if records.is_empty() {
                    return Err(Error::RankDeficient { sigma_min });
                }
                termination = Termination::RankDeficient;
                break;
            }
            Err(e) => return Err(e),
        };
        let rc = engine.residual_coords(&pp, &sol.y);
        let res_norm = norm(&rc);
        let sol_norm = norm(&sol.y);
        let rel = x_true.map(|xt| rel_err(&to_x(engine.lift(&sol.y)), xt));
        let (res_change, sol_change) = match &last {
            Some((_, py, prc)) => (Some(padded_dist(&rc, prc)), Some(padded_dist(&sol.y, py))),
            None => (None, None),
        };
        let mut rec = IterationRecord {
            k,
            lambda: sel.lambda,
            res_norm,
            sol_norm,
            objective: sel.objective,
            rel_err: rel,
            res_change,
            sol_change,
            flags: StopFlags::NONE,
            feasible: sel.feasible,
            omega: sel.omega,
        };
        if let Some(prev) = records.last() {
            rec.flags = check_stopping(prev, &rec, opts);
        }
        streak = if k >= opts.min_iter && rec.flags.satisfies(&opts.stop_on) {
            streak + 1
        } else {
            0
        };
        records.push(rec);
        last = Some((pp, sol.y, rc));

        if opts.dp_stop {
            let target = opts.rule.eta * opts.rule.epsilon.unwrap_or(0.0);
            if res_norm <= target {
                termination = Termination::Discrepancy;
                break;
            }
        }
        if streak >= opts.stop_consecutive {
            termination = Termination::Stabilized;
            break;
        }
        if status == StepStatus::Breakdown {
            termination = Termination::Breakdown;
            break;
        }
        if k >= opts.max_iter {
            termination = Termination::MaxIter;
            break;
        }
    }
    let (pp, y, _) = last.expect("at least one iterate");
    let x = to_x(engine.lift(&y));
    Ok(RunLog {
        options: opts.clone(),
        records,
        x,
        y,
        g: pp.g,
        termination,
    })
}

/// `‖a − [b; 0]‖` for `b` no longer than `a`.
pub(crate) fn padded_dist(a: &[f64], b: &[f64]) -> f64 {
    let head = dist(&a[..b.len()], b);
    let tail = norm(&a[b.len()..]);
    head.hypot(tail)
}
