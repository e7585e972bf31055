use super::driver::padded_dist;
use super::{
    check_stopping, HybridOptions, IterationRecord, Method, RunLog, StopFlags, Termination,
};
use crate::error::{Error, Result};
use crate::krylov::{FlexArnoldiFactorization, FlexGkbFactorization, StepStatus};
use crate::linalg::{dist, norm, rel_err, Basis};
use crate::operators::LinearMap;
use crate::paramselect::{select_lambda, RuleContext};
use crate::projected::{solve_projected_tikhonov, ProjectedProblem};
use nalgebra::{DMatrix, DVector};
use std::fmt;
use std::str::FromStr;

/// Regularization matrix `P_k` in `min ‖M_k y − β₁e₁‖² + λ‖P_k y‖²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegMatrix {
    /// `P_k = I`.
    Identity,
    /// `P_k = R_k` from `Z_k = Q_k R_k`, so `‖P_k y‖ = ‖x‖`.
    RFactor,
    /// `P_k = R_k^W` from `W_k Z_k = Q_k R_k^W`, so `‖P_k y‖ = ‖W_k x‖`.
    WeightedRFactor,
}

impl fmt::Display for RegMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegMatrix::Identity => "identity",
            RegMatrix::RFactor => "rfactor",
            RegMatrix::WeightedRFactor => "weighted-rfactor",
        })
    }
}

impl FromStr for RegMatrix {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "identity" | "i" => RegMatrix::Identity,
            "rfactor" | "r" => RegMatrix::RFactor,
            "weighted-rfactor" | "weighted_rfactor" | "rw" => RegMatrix::WeightedRFactor,
            _ => {
                return Err(Error::Config(format!(
                    "unknown regularization matrix '{s}'"
                )))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlexibleOptions {
    pub p: f64,
    pub tau: f64,
    pub regmat: RegMatrix,
    /// Keep these diagonal weights `W` fixed instead of updating them from
    /// the iterates.
    pub fixed_weights: Option<Vec<f64>>,
}

impl FlexibleOptions {
    pub fn new(p: f64, tau: f64, regmat: RegMatrix) -> Self {
        Self {
            p,
            tau,
            regmat,
            fixed_weights: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p <= 2.0) {
            return Err(Error::Config(format!(
                "p must lie in (0, 2], got {}",
                self.p
            )));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        if let Some(w) = &self.fixed_weights {
            if w.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::Config("fixed weights must be positive".into()));
            }
        }
        Ok(())
    }

    /// `W⁻¹ = diag((x² + τ²)^{(2−p)/4})`.
    pub fn inverse_weights(&self, x: &[f64]) -> Vec<f64> {
        let e = (2.0 - self.p) / 4.0;
        x.iter()
            .map(|v| (v * v + self.tau * self.tau).powf(e))
            .collect()
    }
}

enum FlexEngine {
    Gkb(FlexGkbFactorization),
    Arnoldi(FlexArnoldiFactorization),
}

impl FlexEngine {
    fn k(&self) -> usize {
        match self {
            FlexEngine::Gkb(f) => f.k(),
            FlexEngine::Arnoldi(f) => f.k(),
        }
    }
    fn breakdown(&self) -> bool {
        match self {
            FlexEngine::Gkb(f) => f.breakdown(),
            FlexEngine::Arnoldi(f) => f.breakdown(),
        }
    }
    fn step(&mut self, a: &dyn LinearMap, w_inv: &[f64]) -> Result<StepStatus> {
        match self {
            FlexEngine::Gkb(f) => f.step(a, w_inv),
            FlexEngine::Arnoldi(f) => f.step(a, w_inv),
        }
    }
    fn matrix(&self, k: usize) -> DMatrix<f64> {
        match self {
            FlexEngine::Gkb(f) => f.m_matrix(k),
            FlexEngine::Arnoldi(f) => f.h_matrix(k),
        }
    }
    fn beta(&self) -> f64 {
        match self {
            FlexEngine::Gkb(f) => f.beta(),
            FlexEngine::Arnoldi(f) => f.beta(),
        }
    }
    fn z(&self) -> &Basis {
        match self {
            FlexEngine::Gkb(f) => f.z_basis(),
            FlexEngine::Arnoldi(f) => f.z_basis(),
        }
    }
}

/// Upper-triangular `R` of a thin QR of the `n×k` matrix with columns `cols`,
/// each scaled entrywise by `weights` when given. `None` if numerically
/// rank deficient.
fn r_factor(z: &Basis, k: usize, weights: Option<&[f64]>) -> Option<DMatrix<f64>> {
    let n = z.vec_len();
    let m = DMatrix::from_fn(n, k, |i, j| z.col(j)[i] * weights.map_or(1.0, |w| w[i]));
    let r = m.qr().r();
    let d: Vec<f64> = (0..k).map(|i| r[(i, i)].abs()).collect();
    let dmax = d.iter().cloned().fold(0.0, f64::max);
    if dmax == 0.0 || d.iter().any(|v| *v <= 1e-12 * dmax) {
        return None;
    }
    Some(r)
}

/// Hybrid method for `min ‖Ax − b‖² + λ‖x‖_p^p` by iteratively reweighted
/// norms inside a flexible Krylov subspace.
///
/// `HybridLsqr` selects flexible Golub-Kahan, `HybridGmres` flexible Arnoldi
/// (square `A` only). The weights start uniform, from `x₀ = 0`, and are
/// refreshed from every new iterate.
pub fn run_flexible_lp(
    a: &dyn LinearMap,
    b: &[f64],
    fopts: &FlexibleOptions,
    opts: &HybridOptions,
    x_true: Option<&[f64]>,
) -> Result<RunLog> {
    opts.validate()?;
    fopts.validate()?;
    let n = a.cols();
    if let Some(xt) = x_true {
        if xt.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: xt.len(),
            });
        }
    }
    if let Some(w) = &fopts.fixed_weights {
        if w.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: w.len(),
            });
        }
    }
    let mut engine = match opts.method {
        Method::HybridLsqr => FlexEngine::Gkb(FlexGkbFactorization::new(a, b, opts.reorth)?),
        Method::HybridGmres => {
            if !a.is_square() {
                return Err(Error::Config(
                    "flexible GMRES needs a square operator".into(),
                ));
            }
            if b.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: b.len(),
                });
            }
            FlexEngine::Arnoldi(FlexArnoldiFactorization::new(b, opts.reorth)?)
        }
        m => {
            return Err(Error::Config(format!(
                "flexible driver supports hybrid-lsqr and hybrid-gmres, not {m}"
            )))
        }
    };
    let weights_for = |x: &[f64]| -> (Vec<f64>, Vec<f64>) {
        match &fopts.fixed_weights {
            Some(w) => (w.clone(), w.iter().map(|v| 1.0 / v).collect()),
            None => {
                let inv = fopts.inverse_weights(x);
                (inv.iter().map(|v| 1.0 / v).collect(), inv)
            }
        }
    };
    let (mut w, mut w_inv) = weights_for(&vec![0.0; n]);

    let mut records: Vec<IterationRecord> = Vec::new();
    let mut last: Option<(Vec<f64>, Vec<f64>, Vec<f64>, DMatrix<f64>)> = None;
    let mut streak = 0;
    let mut omega_hist: Vec<f64> = Vec::new();
    let termination;
    loop {
        if engine.breakdown() || engine.k() >= n {
            if records.is_empty() {
                return Err(Error::Breakdown { step: 0 });
            }
            termination = Termination::Breakdown;
            break;
        }
        let status = engine.step(a, &w_inv)?;
        let k = engine.k();
        let m = engine.matrix(k);
        let p_mat = match fopts.regmat {
            RegMatrix::Identity => Some(DMatrix::identity(k, k)),
            RegMatrix::RFactor => r_factor(engine.z(), k, None),
            RegMatrix::WeightedRFactor => r_factor(engine.z(), k, Some(&w)),
        };
        let Some(p_mat) = p_mat else {
            if records.is_empty() {
                return Err(Error::Breakdown { step: k });
            }
            termination = Termination::Breakdown;
            break;
        };
        let p_inv = p_mat
            .clone()
            .try_inverse()
            .ok_or(Error::Breakdown { step: k })?;
        let pp = ProjectedProblem::with_beta(&m * &p_inv, engine.beta())?;
        let to_y = |wv: &[f64]| {
            (&p_inv * DVector::from_column_slice(wv))
                .as_slice()
                .to_vec()
        };
        let sel = {
            let lift = |wv: &[f64]| engine.z().combine(&to_y(wv));
            let ctx = RuleContext {
                lift: Some(&lift),
                x_true,
                residual: None,
                omega_history: &omega_hist,
            };
            select_lambda(&pp, &opts.rule, &ctx)?
        };
        omega_hist.extend(sel.omega_sample);
        if let Some(msg) = &sel.warning {
            log::debug!("flexible k={k}: {msg}");
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
        let y = to_y(&sol.y);
        let x = engine.z().combine(&y);
        let rc: Vec<f64> = {
            let gy = &pp.g * DVector::from_column_slice(&sol.y);
            pp.rhs.iter().zip(gy.iter()).map(|(c, g)| c - g).collect()
        };
        let (res_change, sol_change) = match &last {
            Some((px, _, prc, _)) => (Some(padded_dist(&rc, prc)), Some(dist(&x, px))),
            None => (None, None),
        };
        let mut rec = IterationRecord {
            k,
            lambda: sel.lambda,
            res_norm: norm(&rc),
            sol_norm: norm(&x),
            objective: sel.objective,
            rel_err: x_true.map(|xt| rel_err(&x, xt)),
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
        let res_norm = rec.res_norm;
        records.push(rec);
        (w, w_inv) = weights_for(&x);
        last = Some((x, y, rc, m));

        if opts.dp_stop && res_norm <= opts.rule.eta * opts.rule.epsilon.unwrap_or(0.0) {
            termination = Termination::Discrepancy;
            break;
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
    let (x, y, _, g) = last.expect("at least one iterate");
    Ok(RunLog {
        options: opts.clone(),
        records,
        x,
        y,
        g,
        termination,
    })
}
