//! Damped Gauss-Newton and variable projection with hybrid inner solves.

use crate::error::{Error, Result};
use crate::hybrid::{run_hybrid, HybridOptions};
use crate::linalg::{axpy, dist, dot, norm, sub};
use crate::operators::{DenseMatrixMap, LinearMap};
use nalgebra::DMatrix;

/// Forward model `F: ℝⁿ → ℝᵐ` with a Jacobian available at any point.
pub trait NonlinearModel: Send + Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>>;
    fn jacobian(&self, x: &[f64]) -> Result<Box<dyn LinearMap + '_>>;
}

/// `F(x) = A(x_nl) x_l` with few nonlinear parameters.
pub trait SeparableModel: Send + Sync {
    fn nonlinear_dim(&self) -> usize;
    fn linear_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn operator(&self, xnl: &[f64]) -> Result<Box<dyn LinearMap>>;
    /// `(∂A/∂x_nl[j]) x_l`.
    fn derivative_action(&self, xnl: &[f64], j: usize, xl: &[f64]) -> Result<Vec<f64>>;
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

/// `‖(F(x+hv) − F(x))/h − J(x)v‖ / ‖v‖`.
pub fn jacobian_check(model: &dyn NonlinearModel, x: &[f64], v: &[f64], h: f64) -> Result<f64> {
    check_dim(model.input_dim(), x.len())?;
    check_dim(model.input_dim(), v.len())?;
    let f0 = model.eval(x)?;
    let mut xh = x.to_vec();
    axpy(h, v, &mut xh);
    let f1 = model.eval(&xh)?;
    let jv = model.jacobian(x)?.apply(v)?;
    let fd: Vec<f64> = f1.iter().zip(&f0).map(|(a, b)| (a - b) / h).collect();
    Ok(dist(&fd, &jv) / norm(v).max(f64::MIN_POSITIVE))
}

/// Verifies the Jacobian at `x` along the coordinate directions and a fixed
/// mixed direction: the first-order finite-difference error must shrink with
/// `h` and stay small relative to `‖Jv‖`.
pub fn verify_jacobian(model: &dyn NonlinearModel, x: &[f64]) -> Result<()> {
    let n = model.input_dim();
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    dirs.push(
        (0..n)
            .map(|i| ((i * 7 + 3) % 11) as f64 / 11.0 - 0.45)
            .collect(),
    );
    if n <= 8 {
        for i in 0..n {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            dirs.push(e);
        }
    }
    let scale = 1.0 + norm(x) / (n as f64).sqrt();
    let j = model.jacobian(x)?;
    for v in &dirs {
        let jv = norm(&j.apply(v)?) / norm(v);
        let e1 = jacobian_check(model, x, v, 1e-4 * scale)?;
        let e2 = jacobian_check(model, x, v, 1e-5 * scale)?;
        let tol = 1e-3 * (jv + 1e-8);
        if e2 > tol && e2 > 0.5 * e1 {
            return Err(Error::InvalidArgument(format!(
                "jacobian check failed: finite-difference errors {e1:.3e} (h=1e-4), {e2:.3e} (h=1e-5)"
            )));
        }
    }
    Ok(())
}

/// `F(x) = A x`.
#[derive(Debug, Clone)]
pub struct LinearModel {
    a: DenseMatrixMap,
}

impl LinearModel {
    pub fn new(a: &DMatrix<f64>) -> Self {
        Self {
            a: DenseMatrixMap::from_matrix(a),
        }
    }
}

impl NonlinearModel for LinearModel {
    fn input_dim(&self) -> usize {
        self.a.cols()
    }
    fn output_dim(&self) -> usize {
        self.a.rows()
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.a.apply(x)
    }
    fn jacobian(&self, _x: &[f64]) -> Result<Box<dyn LinearMap + '_>> {
        Ok(Box::new(&self.a))
    }
}

/// Two-term decay with coupled amplitudes:
/// `F_i(x) = x₁ e^{−t_i} + x₁x₂ e^{−3t_i}` on equispaced `t ∈ [0, 4]`.
#[derive(Debug, Clone)]
pub struct ExpDecayModel {
    t: Vec<f64>,
}

impl ExpDecayModel {
    pub fn new(samples: usize) -> Result<Self> {
        if samples < 2 {
            return Err(Error::InvalidArgument("need at least two samples".into()));
        }
        Ok(Self {
            t: (0..samples)
                .map(|i| 4.0 * i as f64 / (samples - 1) as f64)
                .collect(),
        })
    }
}

impl NonlinearModel for ExpDecayModel {
    fn input_dim(&self) -> usize {
        2
    }
    fn output_dim(&self) -> usize {
        self.t.len()
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(2, x.len())?;
        Ok(self
            .t
            .iter()
            .map(|t| x[0] * (-t).exp() + x[0] * x[1] * (-3.0 * t).exp())
            .collect())
    }
    fn jacobian(&self, x: &[f64]) -> Result<Box<dyn LinearMap + '_>> {
        check_dim(2, x.len())?;
        let rows: Vec<Vec<f64>> = self
            .t
            .iter()
            .map(|t| {
                vec![
                    (-t).exp() + x[1] * (-3.0 * t).exp(),
                    x[0] * (-3.0 * t).exp(),
                ]
            })
            .collect();
        Ok(Box::new(DenseMatrixMap::from_rows(&rows)?))
    }
}

/// Zero-boundary ("full") 2-D convolution of an `N×N` image with a
/// `(2r+1)×(2r+1)` kernel, producing an `(N+2r)×(N+2r)` image.
#[derive(Debug, Clone, PartialEq)]
pub struct FullConvolution {
    side: usize,
    radius: usize,
    kernel: Vec<f64>,
}

impl FullConvolution {
    pub fn new(side: usize, radius: usize, kernel: Vec<f64>) -> Result<Self> {
        check_dim((2 * radius + 1).pow(2), kernel.len())?;
        if side == 0 {
            return Err(Error::InvalidArgument("image side must be positive".into()));
        }
        Ok(Self {
            side,
            radius,
            kernel,
        })
    }

    pub fn out_side(&self) -> usize {
        self.side + 2 * self.radius
    }
}

impl LinearMap for FullConvolution {
    fn rows(&self) -> usize {
        self.out_side().pow(2)
    }
    fn cols(&self) -> usize {
        self.side * self.side
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let (n, k, o) = (self.side, 2 * self.radius + 1, self.out_side());
        y.fill(0.0);
        for i in 0..n {
            for j in 0..n {
                let v = x[i * n + j];
                if v == 0.0 {
                    continue;
                }
                for p in 0..k {
                    let row = &mut y[(i + p) * o + j..(i + p) * o + j + k];
                    for (yq, kq) in row.iter_mut().zip(&self.kernel[p * k..(p + 1) * k]) {
                        *yq += kq * v;
                    }
                }
            }
        }
    }
    fn apply_adjoint_into(&self, w: &[f64], z: &mut [f64]) {
        let (n, k, o) = (self.side, 2 * self.radius + 1, self.out_side());
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for p in 0..k {
                    let row = &w[(i + p) * o + j..(i + p) * o + j + k];
                    s += dot(row, &self.kernel[p * k..(p + 1) * k]);
                }
                z[i * n + j] = s;
            }
        }
    }
}

/// Isotropic Gaussian blur of unknown width acting on an object with compact
/// support: `A(σ)` is the full convolution with the unit-sum Gaussian of
/// standard deviation `σ` truncated to radius `r`. The dark margin around
/// the object is what makes `σ` identifiable from the data.
#[derive(Debug, Clone, PartialEq)]
pub struct BlurWidthModel {
    pub side: usize,
    pub radius: usize,
}

impl BlurWidthModel {
    pub fn new(side: usize, radius: usize) -> Result<Self> {
        if side == 0 || radius == 0 {
            return Err(Error::InvalidArgument(
                "blur-width model needs side, radius > 0".into(),
            ));
        }
        Ok(Self { side, radius })
    }

    /// Piecewise-smooth phantom on a constant pedestal of 0.3, so the object
    /// has a sharp edge at the border of its support.
    pub fn test_object(side: usize) -> Result<Vec<f64>> {
        Ok(crate::testproblems::piecewise_smooth(side)?
            .pixels
            .iter()
            .map(|v| v + 0.3)
            .collect())
    }

    /// Unit-sum kernel and its derivative with respect to `σ`.
    pub fn kernel(&self, sigma: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "blur width must be positive, got {sigma}"
            )));
        }
        let r = self.radius as isize;
        let mut g = Vec::new();
        let mut dg = Vec::new();
        for p in -r..=r {
            for q in -r..=r {
                let d2 = (p * p + q * q) as f64;
                let v = (-d2 / (2.0 * sigma * sigma)).exp();
                g.push(v);
                dg.push(v * d2 / sigma.powi(3));
            }
        }
        let s: f64 = g.iter().sum();
        let ds: f64 = dg.iter().sum();
        let k = g.iter().map(|v| v / s).collect();
        let dk = g
            .iter()
            .zip(&dg)
            .map(|(v, dv)| (dv * s - v * ds) / (s * s))
            .collect();
        Ok((k, dk))
    }
}

impl SeparableModel for BlurWidthModel {
    fn nonlinear_dim(&self) -> usize {
        1
    }
    fn linear_dim(&self) -> usize {
        self.side * self.side
    }
    fn output_dim(&self) -> usize {
        (self.side + 2 * self.radius).pow(2)
    }
    fn operator(&self, xnl: &[f64]) -> Result<Box<dyn LinearMap>> {
        check_dim(1, xnl.len())?;
        let (k, _) = self.kernel(xnl[0])?;
        Ok(Box::new(FullConvolution::new(self.side, self.radius, k)?))
    }
    fn derivative_action(&self, xnl: &[f64], j: usize, xl: &[f64]) -> Result<Vec<f64>> {
        check_dim(1, xnl.len())?;
        if j != 0 {
            return Err(Error::InvalidArgument(format!(
                "nonlinear index {j} out of range"
            )));
        }
        let (_, dk) = self.kernel(xnl[0])?;
        FullConvolution::new(self.side, self.radius, dk)?.apply(xl)
    }
}

/// A separable model seen as a plain nonlinear model in `x = [x_nl; x_l]`.
pub struct JointModel<'a> {
    pub model: &'a dyn SeparableModel,
}

struct JointJacobian {
    nl_cols: Vec<Vec<f64>>,
    a: Box<dyn LinearMap>,
}

impl LinearMap for JointJacobian {
    fn rows(&self) -> usize {
        self.a.rows()
    }
    fn cols(&self) -> usize {
        self.nl_cols.len() + self.a.cols()
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let l = self.nl_cols.len();
        self.a.apply_into(&x[l..], y);
        for (c, xi) in self.nl_cols.iter().zip(x) {
            axpy(*xi, c, y);
        }
    }
    fn apply_adjoint_into(&self, w: &[f64], z: &mut [f64]) {
        let l = self.nl_cols.len();
        for (zi, c) in z.iter_mut().zip(&self.nl_cols) {
            *zi = dot(c, w);
        }
        self.a.apply_adjoint_into(w, &mut z[l..]);
    }
}

impl NonlinearModel for JointModel<'_> {
    fn input_dim(&self) -> usize {
        self.model.nonlinear_dim() + self.model.linear_dim()
    }
    fn output_dim(&self) -> usize {
        self.model.output_dim()
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.input_dim(), x.len())?;
        let l = self.model.nonlinear_dim();
        self.model.operator(&x[..l])?.apply(&x[l..])
    }
    fn jacobian(&self, x: &[f64]) -> Result<Box<dyn LinearMap + '_>> {
        check_dim(self.input_dim(), x.len())?;
        let l = self.model.nonlinear_dim();
        let nl_cols = (0..l)
            .map(|j| self.model.derivative_action(&x[..l], j, &x[l..]))
            .collect::<Result<_>>()?;
        Ok(Box::new(JointJacobian {
            nl_cols,
            a: self.model.operator(&x[..l])?,
        }))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussNewtonOptions {
    pub max_outer: usize,
    /// Stop once `‖g(x_k)‖ ≤ tol_g·‖g(x₀)‖`.
    pub tol_g: f64,
    pub armijo_c: f64,
    pub min_step: f64,
    pub inner: HybridOptions,
    pub verify_jacobian: bool,
}

impl GaussNewtonOptions {
    pub fn new(inner: HybridOptions) -> Self {
        Self {
            max_outer: 30,
            tol_g: 1e-6,
            armijo_c: 1e-4,
            min_step: 1e-8,
            inner,
            verify_jacobian: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NonlinearTermination {
    GradientTol,
    MaxIter,
    Stalled,
}

impl NonlinearTermination {
    pub fn name(self) -> &'static str {
        match self {
            NonlinearTermination::GradientTol => "gradient_tol",
            NonlinearTermination::MaxIter => "max_iter",
            NonlinearTermination::Stalled => "stalled",
        }
    }
}

/// One accepted outer step. `merit_before` and `merit_after` use the same
/// `λ`, so the pair certifies the decrease the line search enforced.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterRecord {
    pub iter: usize,
    pub lambda: f64,
    pub misfit: f64,
    pub grad_norm: f64,
    pub step: f64,
    pub merit_before: f64,
    pub merit_after: f64,
    pub inner_k: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearTrace {
    pub records: Vec<OuterRecord>,
    pub x: Vec<f64>,
    pub termination: NonlinearTermination,
}

fn merit(f: &[f64], b: &[f64], x: &[f64], lambda: f64) -> f64 {
    0.5 * dist(f, b).powi(2) + 0.5 * lambda * dot(x, x)
}

/// Damped Gauss-Newton for `min ½‖F(x) − b‖² + (λ/2)‖x‖²`.
///
/// Each outer step solves the linearized problem for the new iterate,
/// `min ‖J x − (b − F(x_k) + J x_k)‖² + λ‖x‖²`, with the hybrid method (so `λ`
/// is chosen there), and backtracks along `x^p − x_k` until the Armijo
/// condition holds for the merit function at that `λ`.
pub fn gauss_newton_hybrid(
    model: &dyn NonlinearModel,
    b: &[f64],
    x0: &[f64],
    opts: &GaussNewtonOptions,
) -> Result<NonlinearTrace> {
    check_dim(model.output_dim(), b.len())?;
    check_dim(model.input_dim(), x0.len())?;
    if opts.verify_jacobian {
        verify_jacobian(model, x0)?;
    }
    let mut x = x0.to_vec();
    let mut fx = model.eval(&x)?;
    let mut records = Vec::new();
    let mut g0 = None;
    let mut termination = NonlinearTermination::MaxIter;
    for iter in 0..opts.max_outer {
        let j = model.jacobian(&x)?;
        let jx = j.apply(&x)?;
        let rhs: Vec<f64> = b
            .iter()
            .zip(&fx)
            .zip(&jx)
            .map(|((bi, fi), ji)| bi - fi + ji)
            .collect();
        let inner = run_hybrid(j.as_ref(), &rhs, &opts.inner, None)?;
        let lambda = inner.final_record().map_or(0.0, |r| r.lambda);
        let mut grad = j.apply_adjoint(&sub(&fx, b))?;
        axpy(lambda, &x, &mut grad);
        let gnorm = norm(&grad);
        let g_ref = *g0.get_or_insert(gnorm);
        if gnorm <= opts.tol_g * g_ref || gnorm == 0.0 {
            termination = NonlinearTermination::GradientTol;
            break;
        }
        let m0 = merit(&fx, b, &x, lambda);
        let mut dir = sub(&inner.x, &x);
        let mut slope = dot(&grad, &dir);
        if !(slope < 0.0) {
            log::debug!("outer {iter}: proposal is not a descent direction, using -g");
            dir = grad.iter().map(|v| -v).collect();
            slope = -gnorm * gnorm;
        }
        let mut alpha = 1.0;
        let accepted = loop {
            let mut trial = x.clone();
            axpy(alpha, &dir, &mut trial);
            if let Ok(ft) = model.eval(&trial) {
                let mt = merit(&ft, b, &trial, lambda);
                if mt.is_finite() && mt <= m0 + opts.armijo_c * alpha * slope {
                    break Some((trial, ft, mt));
                }
            }
            alpha *= 0.5;
            if alpha < opts.min_step {
                break None;
            }
        };
        let Some((xn, fn_, mt)) = accepted else {
            termination = NonlinearTermination::Stalled;
            break;
        };
        records.push(OuterRecord {
            iter,
            lambda,
            misfit: dist(&fn_, b),
            grad_norm: gnorm,
            step: alpha,
            merit_before: m0,
            merit_after: mt,
            inner_k: inner.k(),
        });
        x = xn;
        fx = fn_;
    }
    Ok(NonlinearTrace {
        records,
        x,
        termination,
    })
}

/// How the inner λ is chosen during variable projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaPolicy {
    /// The inner rule picks λ at every evaluation of the reduced objective.
    PerEvaluation,
    /// The inner rule picks λ once at the starting point; later inner solves
    /// reuse it, which keeps the reduced objective a fixed function.
    FreezeAtStart,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarproOptions {
    pub max_outer: usize,
    pub inner: HybridOptions,
    pub lambda_policy: LambdaPolicy,
    /// Relative finite-difference step.
    pub fd_step: f64,
    /// Length of the first trial step in parameter space, relative to
    /// `max(‖x_nl‖, 1)`.
    pub initial_step: f64,
    pub armijo_c: f64,
    pub min_step: f64,
    pub tol_g: f64,
}

impl VarproOptions {
    pub fn new(inner: HybridOptions) -> Self {
        Self {
            max_outer: 30,
            inner,
            lambda_policy: LambdaPolicy::FreezeAtStart,
            fd_step: 1e-4,
            initial_step: 0.1,
            armijo_c: 1e-4,
            min_step: 1e-10,
            tol_g: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarproRecord {
    pub iter: usize,
    pub xnl: Vec<f64>,
    pub objective: f64,
    pub grad_norm: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarproTrace {
    /// Entry 0 is the starting point; every later entry is an accepted step.
    pub records: Vec<VarproRecord>,
    pub xnl: Vec<f64>,
    pub xl: Vec<f64>,
    pub termination: NonlinearTermination,
}

fn check_separable(model: &dyn SeparableModel, b: &[f64], xnl: &[f64]) -> Result<()> {
    check_dim(model.output_dim(), b.len())?;
    check_dim(model.nonlinear_dim(), xnl.len())?;
    let (l, nl) = (model.nonlinear_dim(), model.linear_dim());
    if l == 0 || 4 * l > nl {
        return Err(Error::InvalidArgument(format!(
            "separable model needs 1 <= l <= (n-l)/4, got l={l}, n-l={nl}"
        )));
    }
    Ok(())
}

/// Inner linear solve at `xnl`: returns `(x_l, λ, ‖A x_l − b‖²)`.
fn inner_solve(
    model: &dyn SeparableModel,
    b: &[f64],
    xnl: &[f64],
    inner: &HybridOptions,
) -> Result<(Vec<f64>, f64, f64)> {
    let a = model.operator(xnl)?;
    let log = run_hybrid(a.as_ref(), b, inner, None)?;
    let lambda = log.final_record().map_or(0.0, |r| r.lambda);
    let r = dist(&a.apply(&log.x)?, b);
    Ok((log.x, lambda, r * r))
}

fn fd_gradient(f: &dyn Fn(&[f64]) -> Result<f64>, x: &[f64], rel: f64) -> Result<Vec<f64>> {
    let mut g = vec![0.0; x.len()];
    for i in 0..x.len() {
        let h = rel * x[i].abs().max(1.0);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[i] += h;
        xm[i] -= h;
        g[i] = (f(&xp)? - f(&xm)?) / (2.0 * h);
    }
    Ok(g)
}

/// Backtracking line search along `−g` with Barzilai-Borwein initial steps.
struct Descent {
    prev: Option<(Vec<f64>, Vec<f64>)>,
}

impl Descent {
    fn step_length(&mut self, x: &[f64], g: &[f64], initial: f64) -> f64 {
        let gn = norm(g);
        let first = initial * norm(x).max(1.0) / gn;
        let alpha = match &self.prev {
            Some((px, pg)) => {
                let s = sub(x, px);
                let y = sub(g, pg);
                let sy = dot(&s, &y);
                if sy > 0.0 {
                    dot(&s, &s) / sy
                } else {
                    first
                }
            }
            None => first,
        };
        self.prev = Some((x.to_vec(), g.to_vec()));
        alpha
    }
}

fn backtrack(
    f: &dyn Fn(&[f64]) -> Result<f64>,
    x: &[f64],
    fx: f64,
    g: &[f64],
    mut alpha: f64,
    c: f64,
    min_step: f64,
) -> Option<(Vec<f64>, f64)> {
    let gg = dot(g, g);
    while alpha * norm(g) >= min_step * norm(x).max(1.0) {
        let trial: Vec<f64> = x.iter().zip(g).map(|(xi, gi)| xi - alpha * gi).collect();
        if let Ok(ft) = f(&trial) {
            if ft.is_finite() && ft <= fx - c * alpha * gg {
                return Some((trial, ft));
            }
        }
        alpha *= 0.5;
    }
    None
}

/// Variable projection: minimizes the reduced misfit
/// `‖A(x_nl) x_l(x_nl) − b‖²`, where `x_l(x_nl)` is the hybrid solution of
/// the linear subproblem, by finite-difference gradient descent with
/// backtracking.
pub fn varpro_hybrid(
    model: &dyn SeparableModel,
    b: &[f64],
    xnl0: &[f64],
    opts: &VarproOptions,
) -> Result<VarproTrace> {
    check_separable(model, b, xnl0)?;
    let (x_start, lambda0, _) = inner_solve(model, b, xnl0, &opts.inner)?;
    drop(x_start);
    let inner = match opts.lambda_policy {
        LambdaPolicy::PerEvaluation => opts.inner.clone(),
        LambdaPolicy::FreezeAtStart => frozen(&opts.inner, lambda0),
        LambdaPolicy::Fixed(l) => frozen(&opts.inner, l),
    };
    let reduced = |xnl: &[f64]| -> Result<f64> { Ok(inner_solve(model, b, xnl, &inner)?.2) };

    let mut xnl = xnl0.to_vec();
    let (mut xl, mut lambda, mut fx) = inner_solve(model, b, &xnl, &inner)?;
    let mut g = fd_gradient(&reduced, &xnl, opts.fd_step)?;
    let mut records = vec![VarproRecord {
        iter: 0,
        xnl: xnl.clone(),
        objective: fx,
        grad_norm: norm(&g),
        lambda,
    }];
    let g0 = norm(&g);
    let mut descent = Descent { prev: None };
    let mut termination = NonlinearTermination::MaxIter;
    for iter in 1..=opts.max_outer {
        if norm(&g) <= opts.tol_g * g0.max(f64::MIN_POSITIVE) || norm(&g) == 0.0 {
            termination = NonlinearTermination::GradientTol;
            break;
        }
        let alpha = descent.step_length(&xnl, &g, opts.initial_step);
        let Some((xn, _)) = backtrack(&reduced, &xnl, fx, &g, alpha, opts.armijo_c, opts.min_step)
        else {
            termination = NonlinearTermination::Stalled;
            break;
        };
        xnl = xn;
        (xl, lambda, fx) = inner_solve(model, b, &xnl, &inner)?;
        g = fd_gradient(&reduced, &xnl, opts.fd_step)?;
        records.push(VarproRecord {
            iter,
            xnl: xnl.clone(),
            objective: fx,
            grad_norm: norm(&g),
            lambda,
        });
    }
    Ok(VarproTrace {
        records,
        xnl,
        xl,
        termination,
    })
}

/// Alternating baseline: a hybrid solve for `x_l` at the current `x_nl`,
/// then one backtracking step on `x_nl` with `x_l` held fixed. The recorded
/// objective is `‖A(x_nl) x_l − b‖²` after each cycle.
pub fn alternating_hybrid(
    model: &dyn SeparableModel,
    b: &[f64],
    xnl0: &[f64],
    opts: &VarproOptions,
) -> Result<VarproTrace> {
    check_separable(model, b, xnl0)?;
    let (_, lambda0, _) = inner_solve(model, b, xnl0, &opts.inner)?;
    let inner = match opts.lambda_policy {
        LambdaPolicy::PerEvaluation => opts.inner.clone(),
        LambdaPolicy::FreezeAtStart => frozen(&opts.inner, lambda0),
        LambdaPolicy::Fixed(l) => frozen(&opts.inner, l),
    };
    let mut xnl = xnl0.to_vec();
    let (mut xl, mut lambda, fx0) = inner_solve(model, b, &xnl, &inner)?;
    let mut records = vec![VarproRecord {
        iter: 0,
        xnl: xnl.clone(),
        objective: fx0,
        grad_norm: f64::NAN,
        lambda,
    }];
    let mut descent = Descent { prev: None };
    let mut termination = NonlinearTermination::MaxIter;
    for iter in 1..=opts.max_outer {
        let misfit =
            |p: &[f64]| -> Result<f64> { Ok(dist(&model.operator(p)?.apply(&xl)?, b).powi(2)) };
        let fx = misfit(&xnl)?;
        let g = fd_gradient(&misfit, &xnl, opts.fd_step)?;
        if norm(&g) == 0.0 {
            termination = NonlinearTermination::GradientTol;
            break;
        }
        let alpha = descent.step_length(&xnl, &g, opts.initial_step);
        let Some((xn, f_new)) =
            backtrack(&misfit, &xnl, fx, &g, alpha, opts.armijo_c, opts.min_step)
        else {
            termination = NonlinearTermination::Stalled;
            break;
        };
        xnl = xn;
        records.push(VarproRecord {
            iter,
            xnl: xnl.clone(),
            objective: f_new,
            grad_norm: norm(&g),
            lambda,
        });
        (xl, lambda, _) = inner_solve(model, b, &xnl, &inner)?;
    }
    Ok(VarproTrace {
        records,
        xnl,
        xl,
        termination,
    })
}

fn frozen(inner: &HybridOptions, lambda: f64) -> HybridOptions {
    let mut o = inner.clone();
    o.rule.rule = crate::paramselect::Rule::Fixed(lambda);
    o
}
