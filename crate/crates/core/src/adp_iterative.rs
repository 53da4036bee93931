//! Gradient descent over the operator `B` of the bilevel ADP problem
//!
//! ```text
//! min_B  |A x(B) - y|^2 / 2 + beta |B - A|_F^2,
//! x(B) = argmin_x |B x - y|^2 / 2 + alpha R(x)
//! ```
//!
//! with hypergradients from the implicit function theorem on the active set
//! of `x(B)`, plus the kernel-parametrized variant where `B` is a
//! convolution with trainable taps and the proximity term is a discrete
//! `W^{1,2}` norm.

use ndarray::{Array1, Array2, Axis};

use crate::error::{invalid_param, AdpError, Result};
use crate::linalg::Cholesky;
use crate::operators::{convolution_from_taps, diagonal_sums, gaussian_taps, LinearOp, Signal};
use crate::penalties::Penalty;
use crate::problem::AdpProblem;
use crate::scalar::Real;
use crate::variational::{
    resolve_step, run_ista, smooth_inner_solve, IstaConfig, SolveReport, StopReason,
};

/// Components with `|x_i|` at or below this are treated as off-support.
pub const SUPPORT_THRESHOLD: f64 = 1e-10;

/// Consecutive loss increases that count as divergence.
pub const DIVERGENCE_WINDOW: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum EarlyStop<T> {
    #[default]
    Never,
    /// Stop at the first iterate with `|A x - y| <= tau * delta`.
    Discrepancy { tau: T, delta: T },
    /// Stop after exactly this many operator updates.
    FixedIterations(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IftConfig<T> {
    pub lr: T,
    pub outer_iters: usize,
    pub inner: IstaConfig<T>,
    /// Overrides the problem's `beta` when set.
    pub beta: Option<T>,
    pub early_stop: EarlyStop<T>,
    /// Keep `x(B_k)` for every `k` in the report.
    pub record_iterates: bool,
}

impl<T: Real> Default for IftConfig<T> {
    fn default() -> Self {
        Self {
            lr: T::lit(1e-2),
            outer_iters: 100,
            inner: IstaConfig::default().with_exact_smooth(true),
            beta: None,
            early_stop: EarlyStop::Never,
            record_iterates: false,
        }
    }
}

impl<T: Real> IftConfig<T> {
    fn validate(&self) -> Result<()> {
        if !(self.lr > T::zero()) || !self.lr.is_finite() {
            return Err(invalid_param(
                "lr",
                format!("must be positive, got {}", self.lr),
            ));
        }
        if let Some(beta) = self.beta {
            if !(beta >= T::zero()) {
                return Err(invalid_param("beta", format!("must be >= 0, got {beta}")));
            }
        }
        if let EarlyStop::Discrepancy { tau, delta } = self.early_stop {
            if !(tau > T::one()) {
                return Err(invalid_param("tau", format!("must exceed 1, got {tau}")));
            }
            if !(delta >= T::zero()) {
                return Err(invalid_param("delta", format!("must be >= 0, got {delta}")));
            }
        }
        Ok(())
    }
}

/// Convolution kernel taps on the grid spacing `h`, centered, odd length.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelParam<T> {
    pub taps: Array1<T>,
    pub h: T,
}

impl<T: Real> KernelParam<T> {
    pub fn new(taps: Array1<T>, h: T) -> Result<Self> {
        if taps.len() % 2 == 0 {
            return Err(AdpError::InvalidDimension(format!(
                "kernel needs odd length, got {}",
                taps.len()
            )));
        }
        if taps.iter().any(|v| !v.is_finite()) || !(h > T::zero()) {
            return Err(AdpError::InvalidInput(
                "kernel taps must be finite, h > 0".into(),
            ));
        }
        Ok(Self { taps, h })
    }

    pub fn gaussian(sigma: T, h: T) -> Result<Self> {
        Self::new(gaussian_taps(sigma, h)?, h)
    }

    pub fn half_width(&self) -> usize {
        self.taps.len() / 2
    }

    pub fn operator(&self, n: usize, interval: (T, T)) -> Result<LinearOp<T>> {
        convolution_from_taps(n, interval, self.taps.view())
    }

    /// `|u|^2 + |D u|^2` with forward differences and a zero right boundary.
    pub fn sobolev_sq(&self, other: &Self) -> T {
        let u = &self.taps - &other.taps;
        sobolev_sq(&u, self.h)
    }
}

fn sobolev_sq<T: Real>(u: &Array1<T>, h: T) -> T {
    let n = u.len();
    let mut diff = T::zero();
    for k in 0..n {
        let next = if k + 1 < n { u[k + 1] } else { T::zero() };
        let d = (next - u[k]) / h;
        diff += d * d;
    }
    h * (u.dot(u) + diff)
}

/// Gradient of [`sobolev_sq`] with respect to `u`.
fn sobolev_sq_grad<T: Real>(u: &Array1<T>, h: T) -> Array1<T> {
    let n = u.len();
    let d: Array1<T> = Array1::from_shape_fn(n, |k| {
        let next = if k + 1 < n { u[k + 1] } else { T::zero() };
        (next - u[k]) / h
    });
    Array1::from_shape_fn(n, |k| {
        let prev = if k > 0 { d[k - 1] } else { T::zero() };
        T::two() * h * u[k] + T::two() * (prev - d[k])
    })
}

/// Hypergradient of `L(B) = |A x(B) - y|^2 / 2` with respect to the
/// entries of `B`.
///
/// On the support `S` of `x` the optimality system reads
/// `(B^*(B x - y))_S + alpha (alpha1 sign(x_S) + alpha2 x_S) = 0`. With
/// `H = (B^*B)_SS + alpha alpha2 I` and `g_S = H^{-1} (A^*(A x - y))_S`
/// (zero off `S`) the gradient is `-h_out (rho g^T + (B g) x^T)`,
/// `rho = B x - y`.
pub fn ift_gradient<T: Real>(
    b: &LinearOp<T>,
    x: &Signal<T>,
    a: &LinearOp<T>,
    y: &Signal<T>,
    pen: &Penalty<T>,
    alpha: T,
) -> Result<Array2<T>> {
    b.check_domain(x, "hypergradient x")?;
    b.check_codomain(y, "hypergradient y")?;
    if a.matrix().dim() != b.matrix().dim()
        || a.domain() != b.domain()
        || a.codomain() != b.codomain()
    {
        return Err(AdpError::InvalidDimension(
            "A and B must act between the same spaces".into(),
        ));
    }
    let thr = T::lit(SUPPORT_THRESHOLD);
    let support: Vec<usize> = x
        .samples()
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() > thr)
        .map(|(i, _)| i)
        .collect();
    let (m, n) = b.matrix().dim();
    if support.is_empty() {
        return Ok(Array2::zeros((m, n)));
    }

    let xs = x.samples();
    let mut outer_res = a.apply_raw(xs.view());
    outer_res -= y.samples();
    let e = a.apply_adjoint_raw(outer_res.view());

    let b_s = b.matrix().select(Axis(1), &support);
    let mut h_ss = b_s.t().dot(&b_s);
    h_ss *= b.adjoint_scale();
    let shift = alpha * pen.weights().1;
    h_ss.diag_mut().mapv_inplace(|d| d + shift);
    let e_s = Array1::from_iter(support.iter().map(|&i| e[i]));
    let g_s = Cholesky::new(h_ss.view(), "reduced hypergradient system")?.solve(e_s.view());

    let mut g = Array1::<T>::zeros(n);
    for (k, &i) in support.iter().enumerate() {
        g[i] = g_s[k];
    }
    let bg = b_s.dot(&g_s);
    let mut rho = b.apply_raw(xs.view());
    rho -= y.samples();

    let scale = -b.h_out();
    let mut grad = Array2::<T>::zeros((m, n));
    for i in 0..m {
        let (ri, bgi) = (rho[i] * scale, bg[i] * scale);
        let mut row = grad.row_mut(i);
        for j in 0..n {
            row[j] = ri * g[j] + bgi * xs[j];
        }
    }
    Ok(grad)
}

/// `x(B)` for the outer loops: closed form for smooth penalties when the
/// config allows it, warm-started ISTA otherwise.
pub(crate) fn inner_solution<T: Real>(
    b: &LinearOp<T>,
    y: &Signal<T>,
    pen: &Penalty<T>,
    alpha: T,
    cfg: &IstaConfig<T>,
    warm: &Signal<T>,
) -> Result<Signal<T>> {
    if cfg.exact_smooth && pen.is_smooth() {
        return smooth_inner_solve(b, y, pen, alpha);
    }
    let step = resolve_step(b, pen, alpha, cfg.step, cfg.splitting)?;
    Ok(run_ista(b, y, pen, alpha, step, cfg, warm).solution)
}

/// Relative rise that counts towards a divergence streak. Smaller rises
/// occur legitimately, e.g. the misfit of the unbounded DIP drifting up while
/// its block input converges.
const DIVERGENCE_RISE: f64 = 1e-2;

/// Tracks consecutive loss increases.
#[derive(Debug, Default)]
pub(crate) struct DivergenceGuard {
    last: Option<f64>,
    streak: usize,
}

impl DivergenceGuard {
    pub fn observe(&mut self, iteration: usize, loss: f64) -> Result<()> {
        if !loss.is_finite() {
            return Err(AdpError::Divergence {
                iteration,
                window: DIVERGENCE_WINDOW,
                loss,
            });
        }
        if let Some(prev) = self.last {
            if loss > prev * (1.0 + DIVERGENCE_RISE) {
                self.streak += 1;
            } else {
                self.streak = 0;
            }
        }
        self.last = Some(loss);
        if self.streak >= DIVERGENCE_WINDOW {
            return Err(AdpError::Divergence {
                iteration,
                window: DIVERGENCE_WINDOW,
                loss,
            });
        }
        Ok(())
    }
}

fn should_stop<T: Real>(rule: &EarlyStop<T>, k: usize, residual: T) -> bool {
    match *rule {
        EarlyStop::Never => false,
        EarlyStop::Discrepancy { tau, delta } => residual <= tau * delta,
        EarlyStop::FixedIterations(limit) => k >= limit,
    }
}

/// Gradient-descent ADP starting from `B_0 = A`.
pub fn adp_ift_solve<T: Real>(
    problem: &AdpProblem<T>,
    cfg: &IftConfig<T>,
) -> Result<SolveReport<T>> {
    adp_ift_solve_from(problem, cfg, &problem.operator)
}

/// Gradient-descent ADP (ADP-beta when `beta > 0`) from a given `B_0`.
///
/// Each step computes `x(B_k)`, the hypergradient, and
/// `B_{k+1} = B_k - lr (grad + 2 beta (B_k - A))`. The loss trace holds the
/// full objective including the proximity term; the residual trace holds
/// `|A x(B_k) - y|`.
pub fn adp_ift_solve_from<T: Real>(
    problem: &AdpProblem<T>,
    cfg: &IftConfig<T>,
    b0: &LinearOp<T>,
) -> Result<SolveReport<T>> {
    cfg.validate()?;
    let a = &problem.operator;
    let y = &problem.data;
    let pen = &problem.penalty;
    let alpha = problem.alpha;
    let beta = cfg.beta.unwrap_or(problem.beta);
    if b0.matrix().dim() != a.matrix().dim() {
        return Err(AdpError::InvalidDimension(
            "B_0 must have the shape of A".into(),
        ));
    }

    let mut b = b0.clone();
    let zero = Signal::zeros(a.ncols(), a.domain())?;
    let mut x = inner_solution(&b, y, pen, alpha, &cfg.inner, &zero)?;

    let objective = |b: &LinearOp<T>, x: &Signal<T>| {
        let misfit = T::half() * a.apply(x).axpy(-T::one(), y).norm_sq();
        let dist = if beta > T::zero() {
            b.frobenius_distance(a)
        } else {
            T::zero()
        };
        misfit + beta * dist * dist
    };

    let mut loss_trace = vec![objective(&b, &x)];
    let mut residual_trace = vec![problem.residual_norm(&x)];
    let mut iterates = Vec::new();
    if cfg.record_iterates {
        iterates.push(x.clone());
    }
    let mut guard = DivergenceGuard::default();
    guard.observe(0, loss_trace[0].to_f64_lossy())?;

    let mut stop_reason = StopReason::MaxIter;
    let mut k = 0;
    loop {
        if should_stop(&cfg.early_stop, k, residual_trace[k]) {
            stop_reason = StopReason::EarlyStopped;
            break;
        }
        if k >= cfg.outer_iters {
            break;
        }
        let mut grad = ift_gradient(&b, &x, a, y, pen, alpha)?;
        if beta > T::zero() {
            grad.scaled_add(T::two() * beta, b.matrix());
            grad.scaled_add(-T::two() * beta, a.matrix());
        }
        let mut next = b.matrix().clone();
        next.scaled_add(-cfg.lr, &grad);
        b = b.with_matrix(next).map_err(|_| AdpError::Divergence {
            iteration: k,
            window: DIVERGENCE_WINDOW,
            loss: f64::INFINITY,
        })?;
        x = inner_solution(&b, y, pen, alpha, &cfg.inner, &x)?;
        k += 1;

        let loss = objective(&b, &x);
        loss_trace.push(loss);
        residual_trace.push(problem.residual_norm(&x));
        if cfg.record_iterates {
            iterates.push(x.clone());
        }
        guard.observe(k, loss.to_f64_lossy())?;
    }

    Ok(SolveReport {
        solution: x,
        loss_trace,
        residual_trace,
        iterations: k,
        stop_reason,
        multiplier: None,
        operator: Some(b),
        iterates,
    })
}

/// Objective of the kernel-parametrized ADP-beta problem at taps `g`:
/// `|A_f x_g - y|^2 / 2 + beta (|f - g|^2 + |D (f - g)|^2)` with
/// `x_g = x(T(g, .))`.
pub fn kernel_objective<T: Real>(
    f: &KernelParam<T>,
    g: &KernelParam<T>,
    y: &Signal<T>,
    pen: &Penalty<T>,
    alpha: T,
    beta: T,
    inner: &IstaConfig<T>,
) -> Result<T> {
    let a = f.operator(y.len(), y.interval())?;
    let b = g.operator(y.len(), y.interval())?;
    let zero = Signal::zeros(y.len(), y.interval())?;
    let x = inner_solution(&b, y, pen, alpha, inner, &zero)?;
    let misfit = T::half() * a.apply(&x).axpy(-T::one(), y).norm_sq();
    Ok(misfit + beta * f.sobolev_sq(g))
}

/// Gradient of the data term `|A_f x_g - y|^2 / 2` with respect to the taps
/// `g`, given `x_g`.
pub fn kernel_data_gradient<T: Real>(
    f: &KernelParam<T>,
    g: &KernelParam<T>,
    x_g: &Signal<T>,
    y: &Signal<T>,
    pen: &Penalty<T>,
    alpha: T,
) -> Result<Array1<T>> {
    if f.taps.len() != g.taps.len() {
        return Err(AdpError::InvalidDimension(
            "kernels must have equal length".into(),
        ));
    }
    let a = f.operator(y.len(), y.interval())?;
    let b = g.operator(y.len(), y.interval())?;
    let grad_b = ift_gradient(&b, x_g, &a, y, pen, alpha)?;
    Ok(diagonal_sums(grad_b.view(), g.half_width(), g.h))
}

/// Kernel-parametrized ADP-beta: gradient descent over the taps `g` of the
/// inner operator, from `g_0 = f`, with proximity term
/// `beta |f - g|_{W^{1,2}}^2`.
pub fn adp_beta_param_solve<T: Real>(
    f: &KernelParam<T>,
    y: &Signal<T>,
    pen: &Penalty<T>,
    alpha: T,
    beta: T,
    cfg: &IftConfig<T>,
) -> Result<(KernelParam<T>, SolveReport<T>)> {
    cfg.validate()?;
    if !(beta > T::zero()) {
        return Err(invalid_param(
            "beta",
            format!("must be positive, got {beta}"),
        ));
    }
    if !(alpha > T::zero()) {
        return Err(invalid_param(
            "alpha",
            format!("must be positive, got {alpha}"),
        ));
    }
    let n = y.len();
    let interval = y.interval();
    let a = f.operator(n, interval)?;
    let mut g = f.clone();
    let mut b = a.clone();
    let zero = Signal::zeros(n, interval)?;
    let mut x = inner_solution(&b, y, pen, alpha, &cfg.inner, &zero)?;

    let objective = |g: &KernelParam<T>, x: &Signal<T>| {
        T::half() * a.apply(x).axpy(-T::one(), y).norm_sq() + beta * f.sobolev_sq(g)
    };
    let residual = |x: &Signal<T>| a.apply(x).distance(y);

    let mut loss_trace = vec![objective(&g, &x)];
    let mut residual_trace = vec![residual(&x)];
    let mut iterates = Vec::new();
    if cfg.record_iterates {
        iterates.push(x.clone());
    }
    let mut guard = DivergenceGuard::default();
    guard.observe(0, loss_trace[0].to_f64_lossy())?;

    let mut stop_reason = StopReason::MaxIter;
    let mut k = 0;
    loop {
        if should_stop(&cfg.early_stop, k, residual_trace[k]) {
            stop_reason = StopReason::EarlyStopped;
            break;
        }
        if k >= cfg.outer_iters {
            break;
        }
        let grad_b = ift_gradient(&b, &x, &a, y, pen, alpha)?;
        let mut grad = diagonal_sums(grad_b.view(), g.half_width(), g.h);
        // d/dg of beta S(f - g) = -beta S'(f - g)
        let u = &f.taps - &g.taps;
        grad.scaled_add(-beta, &sobolev_sq_grad(&u, g.h));

        let mut taps = g.taps.clone();
        taps.scaled_add(-cfg.lr, &grad);
        if taps.iter().any(|v| !v.is_finite()) {
            return Err(AdpError::Divergence {
                iteration: k,
                window: DIVERGENCE_WINDOW,
                loss: f64::INFINITY,
            });
        }
        g = KernelParam { taps, h: g.h };
        b = g.operator(n, interval)?;
        x = inner_solution(&b, y, pen, alpha, &cfg.inner, &x)?;
        k += 1;

        let loss = objective(&g, &x);
        loss_trace.push(loss);
        residual_trace.push(residual(&x));
        if cfg.record_iterates {
            iterates.push(x.clone());
        }
        guard.observe(k, loss.to_f64_lossy())?;
    }

    let report = SolveReport {
        solution: x,
        loss_trace,
        residual_trace,
        iterations: k,
        stop_reason,
        multiplier: None,
        operator: Some(b),
        iterates,
    };
    Ok((g, report))
}

/// Tolerance of the subgradient membership check in [`bregman_distance`].
pub const SUBGRADIENT_TOL: f64 = 1e-8;

/// `D_R(x~, x) = R(x~) - R(x) - <v, x~ - x>` for `v in dR(x)`.
pub fn bregman_distance<T: Real>(
    pen: &Penalty<T>,
    x_tilde: &Signal<T>,
    x: &Signal<T>,
    v: &Signal<T>,
) -> Result<T> {
    if !x.same_grid(x_tilde) || !x.same_grid(v) {
        return Err(AdpError::InvalidDimension(
            "Bregman arguments on different grids".into(),
        ));
    }
    let violation = pen.max_subgradient_violation(x, v);
    if violation > T::lit(SUBGRADIENT_TOL) {
        return Err(AdpError::InvalidSubgradient {
            violation: violation.to_f64_lossy(),
        });
    }
    let diff = x_tilde.axpy(-T::one(), x);
    Ok(pen.value(x_tilde) - pen.value(x) - v.dot(&diff))
}
