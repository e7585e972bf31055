//! Iteration drivers: hybrid LSQR, GMRES and LSMR, their unregularized
//! counterparts, the priorconditioned variant and the flexible ℓp driver.

mod driver;
mod engine;
mod flexible;
mod theorem;

pub use driver::{run_hybrid, run_plain, run_priorconditioned};
pub use flexible::{run_flexible_lp, FlexibleOptions, RegMatrix};
pub use theorem::theorem_equivalence_check;

use crate::error::{Error, Result};
use crate::paramselect::RuleConfig;
use nalgebra::DMatrix;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    HybridLsqr,
    HybridGmres,
    HybridLsmr,
    LsqrPlain,
    GmresPlain,
}

impl Method {
    pub fn is_plain(self) -> bool {
        matches!(self, Method::LsqrPlain | Method::GmresPlain)
    }

    pub fn needs_square(self) -> bool {
        matches!(self, Method::HybridGmres | Method::GmresPlain)
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::HybridLsqr => "hybrid-lsqr",
            Method::HybridGmres => "hybrid-gmres",
            Method::HybridLsmr => "hybrid-lsmr",
            Method::LsqrPlain => "lsqr",
            Method::GmresPlain => "gmres",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "hybrid-lsqr" | "hlsqr" => Method::HybridLsqr,
            "hybrid-gmres" | "hgmres" => Method::HybridGmres,
            "hybrid-lsmr" | "hlsmr" => Method::HybridLsmr,
            "lsqr" | "lsqr-plain" => Method::LsqrPlain,
            "gmres" | "gmres-plain" => Method::GmresPlain,
            _ => return Err(Error::Config(format!("unknown method '{s}'"))),
        })
    }
}

/// Which stabilization criteria must hold together to stop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StopFlags {
    pub lambda: bool,
    pub residual: bool,
    pub solution: bool,
}

impl StopFlags {
    pub const NONE: StopFlags = StopFlags {
        lambda: false,
        residual: false,
        solution: false,
    };

    /// `true` when every flag set in `required` is also set here and at least
    /// one flag is required.
    pub fn satisfies(&self, required: &StopFlags) -> bool {
        (required.lambda || required.residual || required.solution)
            && (!required.lambda || self.lambda)
            && (!required.residual || self.residual)
            && (!required.solution || self.solution)
    }

    pub fn code(&self) -> String {
        let mut s = String::new();
        for (on, c) in [
            (self.lambda, 'L'),
            (self.residual, 'R'),
            (self.solution, 'X'),
        ] {
            s.push(if on { c } else { '-' });
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridOptions {
    pub method: Method,
    pub max_iter: usize,
    pub rule: RuleConfig,
    pub reorth: bool,
    pub tau_lambda: f64,
    pub tau_r: f64,
    pub tau_x: f64,
    pub min_iter: usize,
    /// Criteria that must hold simultaneously; empty disables stabilization
    /// stopping.
    pub stop_on: StopFlags,
    /// Number of consecutive iterations the criteria must hold.
    pub stop_consecutive: usize,
    /// Stop at the first iterate with `‖r‖ ≤ ηε` (needs `rule.epsilon`).
    pub dp_stop: bool,
}

impl HybridOptions {
    /// Defaults: 100 iterations, reorthogonalization, `τ_λ = 1e-4`,
    /// `τ_r = τ_x = 1e-6`, `min_iter = 3`, stop when the λ and solution
    /// criteria hold twice in a row. Unregularized methods only stop at
    /// `max_iter` (or on the discrepancy when `dp_stop` is set).
    pub fn new(method: Method, rule: RuleConfig) -> Self {
        let stop_on = if method.is_plain() {
            StopFlags::NONE
        } else {
            StopFlags {
                lambda: true,
                residual: false,
                solution: true,
            }
        };
        Self {
            method,
            max_iter: 100,
            rule,
            reorth: true,
            tau_lambda: 1e-4,
            tau_r: 1e-6,
            tau_x: 1e-6,
            min_iter: 3,
            stop_on,
            stop_consecutive: 2,
            dp_stop: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min_iter >= 1 && self.max_iter >= self.min_iter) {
            return Err(Error::Config("need max_iter >= min_iter >= 1".into()));
        }
        if !(self.tau_lambda >= 0.0 && self.tau_r >= 0.0 && self.tau_x >= 0.0) {
            return Err(Error::Config(
                "stopping thresholds must be nonnegative".into(),
            ));
        }
        if self.dp_stop && self.rule.epsilon.is_none() {
            return Err(Error::Config("dp_stop needs rule.epsilon".into()));
        }
        if !self.method.is_plain() {
            self.rule.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    pub lambda: f64,
    /// `‖b − A x_k‖`.
    pub res_norm: f64,
    pub sol_norm: f64,
    pub objective: f64,
    pub rel_err: Option<f64>,
    /// `‖r_k − r_{k−1}‖`.
    pub res_change: Option<f64>,
    /// `‖x_k − x_{k−1}‖`.
    pub sol_change: Option<f64>,
    pub flags: StopFlags,
    /// `false` while the discrepancy equation has no root.
    pub feasible: bool,
    pub omega: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    MaxIter,
    Stabilized,
    Discrepancy,
    Breakdown,
    RankDeficient,
}

impl Termination {
    pub fn name(self) -> &'static str {
        match self {
            Termination::MaxIter => "max_iter",
            Termination::Stabilized => "stabilized",
            Termination::Discrepancy => "discrepancy",
            Termination::Breakdown => "breakdown",
            Termination::RankDeficient => "rank_deficient",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub options: HybridOptions,
    pub records: Vec<IterationRecord>,
    /// Final solution in the original variables.
    pub x: Vec<f64>,
    /// Projected coefficients of the final iterate.
    pub y: Vec<f64>,
    /// Projected matrix at the final iteration.
    pub g: DMatrix<f64>,
    pub termination: Termination,
}

impl RunLog {
    pub fn k(&self) -> usize {
        self.records.last().map_or(0, |r| r.k)
    }

    pub fn final_record(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    pub fn rel_errors(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.rel_err).collect()
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.lambda).collect()
    }
}

/// Evaluates the three stabilization criteria for `cur` against `prev`.
pub fn check_stopping(
    prev: &IterationRecord,
    cur: &IterationRecord,
    opts: &HybridOptions,
) -> StopFlags {
    StopFlags {
        lambda: (cur.lambda - prev.lambda).abs() < opts.tau_lambda * prev.lambda,
        residual: cur
            .res_change
            .is_some_and(|d| d < opts.tau_r * prev.res_norm),
        solution: cur
            .sol_change
            .is_some_and(|d| d < opts.tau_x * prev.sol_norm),
    }
}
