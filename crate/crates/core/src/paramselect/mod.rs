//! Regularization-parameter rules for the projected problem, plus Gauss and
//! Gauss-Radau bounds on the full Tikhonov residual.
//!
//! All rules search a log-spaced grid whose bounds scale with the largest
//! projected singular value. Grid-based rules (GCV, wGCV, UPRE) refine the
//! best grid point with golden-section search.

mod quadrature;
mod rules;

pub use quadrature::{quadrature_bounds, QuadratureBounds};
pub use rules::{
    gcv_objective, lambda_grid, rule_dp, rule_gcv, rule_lcurve, rule_optimal,
    rule_reginska_fixed_point, rule_upre, upre_objective, GcvDenominator, RuleOutcome,
};
pub(crate) use rules::{log_grid, minimize_on_grid};

use crate::error::{Error, Result};
use crate::projected::{filter_factors, ProjectedProblem};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rule {
    Dp,
    Gcv,
    Wgcv,
    Upre,
    Lcurve,
    Reginska,
    Optimal,
    Fixed(f64),
}

impl Rule {
    pub fn name(&self) -> &'static str {
        match self {
            Rule::Dp => "dp",
            Rule::Gcv => "gcv",
            Rule::Wgcv => "wgcv",
            Rule::Upre => "upre",
            Rule::Lcurve => "lcurve",
            Rule::Reginska => "reginska",
            Rule::Optimal => "optimal",
            Rule::Fixed(_) => "fixed",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::Fixed(l) => write!(f, "fixed:{l:e}"),
            r => f.write_str(r.name()),
        }
    }
}

impl FromStr for Rule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        if let Some(v) = lower.strip_prefix("fixed:") {
            let l: f64 = v
                .parse()
                .map_err(|_| Error::Config(format!("bad fixed lambda '{v}'")))?;
            return Ok(Rule::Fixed(l));
        }
        Ok(match lower.as_str() {
            "dp" => Rule::Dp,
            "gcv" => Rule::Gcv,
            "wgcv" => Rule::Wgcv,
            "upre" => Rule::Upre,
            "lcurve" => Rule::Lcurve,
            "reginska" => Rule::Reginska,
            "optimal" | "opt" => Rule::Optimal,
            "fixed" => Rule::Fixed(0.0),
            _ => return Err(Error::Config(format!("unknown rule '{s}'"))),
        })
    }
}

/// Log-spaced λ grid `[lower·σ₁², upper·σ₁²]` with `count` points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            lower: 1e-12,
            upper: 10.0,
            count: 200,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.lower > 0.0 && self.lower < self.upper && self.count >= 3) {
            return Err(Error::Config(format!("invalid lambda grid {self:?}")));
        }
        Ok(())
    }

    pub fn bounds(&self, pp: &ProjectedProblem) -> (f64, f64) {
        let s2 = pp.sigma_max().powi(2).max(f64::MIN_POSITIVE);
        (self.lower * s2, self.upper * s2)
    }
}

/// How wGCV picks its weight when none is given.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OmegaRule {
    /// Running mean over iterations of the weight that makes the wGCV
    /// derivative vanish at `λ = σ_min²`.
    #[default]
    SmallestSigma,
    /// Mean filter factor at the discrepancy λ.
    DiscrepancyFilterMean,
}

impl fmt::Display for OmegaRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OmegaRule::SmallestSigma => "sigma-min",
            OmegaRule::DiscrepancyFilterMean => "dp-filter",
        })
    }
}

impl FromStr for OmegaRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sigma-min" | "sigmamin" => Ok(OmegaRule::SmallestSigma),
            "dp-filter" | "dpfilter" => Ok(OmegaRule::DiscrepancyFilterMean),
            _ => Err(Error::Config(format!("unknown omega rule '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleConfig {
    pub rule: Rule,
    /// Safety factor for the discrepancy principle.
    pub eta: f64,
    /// Noise-norm estimate `ε ≈ ‖e‖`.
    pub epsilon: Option<f64>,
    /// White-noise variance for UPRE.
    pub sigma2: Option<f64>,
    /// wGCV weight; adaptive when `None`.
    pub omega: Option<f64>,
    pub omega_rule: OmegaRule,
    pub grid: GridSpec,
    pub gcv_denominator: GcvDenominator,
    pub reginska_tol: f64,
    pub reginska_max_iter: usize,
}

impl RuleConfig {
    pub fn new(rule: Rule) -> Self {
        Self {
            rule,
            eta: 1.01,
            epsilon: None,
            sigma2: None,
            omega: None,
            omega_rule: OmegaRule::default(),
            grid: GridSpec::default(),
            gcv_denominator: GcvDenominator::Projected,
            reginska_tol: 1e-10,
            reginska_max_iter: 200,
        }
    }

    pub fn with_epsilon(mut self, eps: f64) -> Self {
        self.epsilon = Some(eps);
        self
    }

    pub fn with_sigma2(mut self, s2: f64) -> Self {
        self.sigma2 = Some(s2);
        self
    }

    pub fn with_omega(mut self, w: f64) -> Self {
        self.omega = Some(w);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if !(self.eta >= 1.0) {
            return Err(Error::Config(format!("eta must be >= 1, got {}", self.eta)));
        }
        if let Some(w) = self.omega {
            if !(w > 0.0 && w <= 1.0) {
                return Err(Error::Config(format!("omega must lie in (0, 1], got {w}")));
            }
        }
        match self.rule {
            Rule::Dp if self.epsilon.is_none() => Err(Error::Config("dp needs epsilon".into())),
            Rule::Upre if self.sigma2.is_none() => Err(Error::Config("upre needs sigma2".into())),
            Rule::Fixed(l) if !(l >= 0.0) => Err(Error::Config("fixed lambda must be >= 0".into())),
            _ => Ok(()),
        }
    }
}

/// Extra information some rules need beyond the projected problem.
#[derive(Clone, Copy, Default)]
pub struct RuleContext<'a> {
    /// Maps projected coefficients to the full solution (OPTIMAL).
    pub lift: Option<&'a dyn Fn(&[f64]) -> Vec<f64>>,
    pub x_true: Option<&'a [f64]>,
    /// Full-problem residual norm as a function of λ, when it differs from
    /// the projected residual (LSMR).
    pub residual: Option<&'a dyn Fn(f64) -> f64>,
    /// Per-iteration wGCV weights from earlier steps of the same run.
    pub omega_history: &'a [f64],
}

/// Result of a parameter selection.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub lambda: f64,
    pub objective: f64,
    /// `false` when the discrepancy equation could not be met yet.
    pub feasible: bool,
    /// wGCV weight actually used.
    pub omega: Option<f64>,
    /// This step's weight before averaging; callers append it to
    /// [`RuleContext::omega_history`].
    pub omega_sample: Option<f64>,
    pub warning: Option<String>,
}

/// Weight `ω` for which the wGCV function of `pp` is stationary at
/// `λ = σ_min²`, capped at 1. Falls back to 1 when degenerate.
pub fn omega_smallest_sigma(pp: &ProjectedProblem) -> f64 {
    let s = pp.sigmas();
    let Some(&smin) = s.last() else { return 1.0 };
    let lam = smin * smin;
    if !(lam > 0.0) {
        return 1.0;
    }
    let (mut n, mut dn, mut f, mut df) = (pp.tail_sq(), 0.0, 0.0, 0.0);
    for (&si, &p) in s.iter().zip(&pp.p_vec) {
        let s2 = si * si;
        n += (lam / (s2 + lam)).powi(2) * p * p;
        dn += 2.0 * lam * s2 * p * p / (s2 + lam).powi(3);
        f += s2 / (s2 + lam);
        df -= s2 / (s2 + lam).powi(2);
    }
    let w = pp.rows() as f64 / (f - 2.0 * n * df / dn);
    if w.is_finite() && w > 0.0 {
        w.clamp(1e-3, 1.0)
    } else {
        1.0
    }
}

/// Adaptive wGCV weight: mean filter factor at the discrepancy λ, or 1 when
/// no noise estimate is available or the discrepancy is not attainable.
pub fn adaptive_omega(pp: &ProjectedProblem, cfg: &RuleConfig, ctx: &RuleContext) -> f64 {
    let Some(eps) = cfg.epsilon else { return 1.0 };
    match rule_dp(pp, cfg.eta, eps, &cfg.grid, ctx.residual) {
        Ok(out) => {
            let phi = filter_factors(pp.sigmas(), out.lambda);
            (phi.iter().sum::<f64>() / phi.len() as f64).clamp(1e-3, 1.0)
        }
        Err(_) => 1.0,
    }
}

pub fn select_lambda(
    pp: &ProjectedProblem,
    cfg: &RuleConfig,
    ctx: &RuleContext,
) -> Result<Selection> {
    cfg.validate()?;
    let done = |o: RuleOutcome| Selection {
        lambda: o.lambda,
        objective: o.objective,
        feasible: true,
        omega: None,
        omega_sample: None,
        warning: o.warning,
    };
    Ok(match cfg.rule {
        Rule::Fixed(l) => Selection {
            lambda: l,
            objective: pp.res_norm(l),
            feasible: true,
            omega: None,
            omega_sample: None,
            warning: None,
        },
        Rule::Dp => {
            let eps = cfg.epsilon.unwrap();
            match rule_dp(pp, cfg.eta, eps, &cfg.grid, ctx.residual) {
                Ok(o) => done(o),
                Err(Error::DiscrepancyInfeasible { min_residual, .. }) => {
                    let (lo, _) = cfg.grid.bounds(pp);
                    Selection {
                        lambda: lo,
                        objective: min_residual,
                        feasible: false,
                        omega: None,
                        omega_sample: None,
                        warning: None,
                    }
                }
                Err(e) => return Err(e),
            }
        }
        Rule::Gcv => done(rule_gcv(pp, 1.0, &cfg.grid, cfg.gcv_denominator)),
        Rule::Wgcv => {
            let (w, sample) = match (cfg.omega, cfg.omega_rule) {
                (Some(w), _) => (w, None),
                (None, OmegaRule::DiscrepancyFilterMean) => (adaptive_omega(pp, cfg, ctx), None),
                (None, OmegaRule::SmallestSigma) => {
                    let now = omega_smallest_sigma(pp);
                    let h = ctx.omega_history;
                    (
                        (h.iter().sum::<f64>() + now) / (h.len() + 1) as f64,
                        Some(now),
                    )
                }
            };
            let mut s = done(rule_gcv(pp, w, &cfg.grid, cfg.gcv_denominator));
            s.omega = Some(w);
            s.omega_sample = sample;
            s
        }
        Rule::Upre => done(rule_upre(pp, cfg.sigma2.unwrap(), &cfg.grid)),
        Rule::Lcurve => done(rule_lcurve(pp, &cfg.grid)),
        Rule::Reginska => done(rule_reginska_fixed_point(
            pp,
            cfg.reginska_tol,
            cfg.reginska_max_iter,
            &cfg.grid,
        )?),
        Rule::Optimal => {
            let (Some(lift), Some(xt)) = (ctx.lift, ctx.x_true) else {
                return Err(Error::Config(
                    "optimal rule needs x_true and a basis".into(),
                ));
            };
            done(rule_optimal(pp, lift, xt, &cfg.grid))
        }
    })
}
