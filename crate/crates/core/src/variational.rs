//! Inner and classical solvers.
//!
//! * [`x_of_b`]: the regularized solution `x(B)` of
//!   `min_x |B x - y|^2 / 2 + alpha R(x)` by proximal gradient (ISTA).
//! * [`tikhonov_l2_solve`]: `(A^* A + t I) x = A^* y` by Cholesky.
//! * [`ivanov_solve`]: `min |A x - y|^2 / 2` subject to `R~(x) <= r`, by
//!   bisection over the Lagrange multiplier.
//! * [`adp_exact_solve`]: the exact ADP minimizer, which is the Ivanov
//!   solution for the radius `r = |y|^2 / (4 alpha)`.
//!
//! Multipliers are reported in Tikhonov normalization: the Lagrangian is
//! `|A x - y|^2 / 2 + (t / 2) R~(x)`, so for `R = |x|^2 / 2` the returned
//! solution satisfies `(A^* A + t I) x = A^* y`.

use ndarray::{Array1, ArrayView1};

use crate::error::{invalid_param, AdpError, Result};
use crate::linalg::{solve_shifted_spd, Cholesky};
use crate::operators::{operator_norm, LinearOp, Signal};
use crate::penalties::{soft_threshold, value_raw, Penalty};
use crate::scalar::Real;

/// Where the `alpha2` part of the elastic net enters an ISTA step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Splitting {
    /// `x+ = prox_{step alpha R}(x - step B^*(B x - y))`.
    #[default]
    Prox,
    /// The LISTA layer: subtract the gradient of the l2 term, then soft
    /// threshold. Same fixed points, admissible for `step (|B|^2 + alpha alpha2) < 2`.
    GradientL2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IstaConfig<T> {
    /// Step size; `None` selects `1 / |B|^2`.
    pub step: Option<T>,
    /// Stop once `|x_k+1 - x_k| <= tol`.
    pub tol: T,
    pub max_iter: usize,
    pub splitting: Splitting,
    /// Use the closed form `(B^*B + alpha alpha2 I)^{-1} B^* y` when the
    /// penalty has no l1 part.
    pub exact_smooth: bool,
}

impl<T: Real> Default for IstaConfig<T> {
    fn default() -> Self {
        Self {
            step: None,
            tol: T::lit(1e-10),
            max_iter: 200_000,
            splitting: Splitting::Prox,
            exact_smooth: false,
        }
    }
}

impl<T: Real> IstaConfig<T> {
    pub fn with_tol(mut self, tol: T) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_step(mut self, step: T) -> Self {
        self.step = Some(step);
        self
    }

    pub fn with_splitting(mut self, splitting: Splitting) -> Self {
        self.splitting = splitting;
        self
    }

    pub fn with_exact_smooth(mut self, exact: bool) -> Self {
        self.exact_smooth = exact;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    MaxIter,
    EarlyStopped,
}

/// Outcome of an iterative solve.
#[derive(Debug, Clone)]
pub struct SolveReport<T> {
    pub solution: Signal<T>,
    /// Objective per iteration. For ISTA this is the inner objective of each
    /// iterate, starting with the initial guess.
    pub loss_trace: Vec<T>,
    /// Solver specific residual per iteration (fixed-point residual for
    /// ISTA, relative constraint gap for Ivanov, data residual for the
    /// outer ADP/DIP loops).
    pub residual_trace: Vec<T>,
    pub iterations: usize,
    pub stop_reason: StopReason,
    /// Lagrange multiplier in Tikhonov normalization (Ivanov solves).
    pub multiplier: Option<T>,
    /// Final operator of the outer ADP/DIP loops.
    pub operator: Option<LinearOp<T>>,
    /// Per-iteration outputs when recording was requested.
    pub iterates: Vec<Signal<T>>,
}

impl<T: Real> SolveReport<T> {
    fn direct(solution: Signal<T>, loss: T) -> Self {
        Self {
            solution,
            loss_trace: vec![loss],
            residual_trace: vec![T::zero()],
            iterations: 0,
            stop_reason: StopReason::Converged,
            multiplier: None,
            operator: None,
            iterates: Vec::new(),
        }
    }
}

/// Inner objective `|B x - y|^2 / 2 + alpha R(x)`.
pub fn inner_objective<T: Real>(
    b: &LinearOp<T>,
    y: &Signal<T>,
    pen: &Penalty<T>,
    alpha: T,
    x: &Signal<T>,
) -> T {
    let r = b.apply(x).axpy(-T::one(), y);
    T::half() * r.norm_sq() + alpha * pen.value(x)
}

pub(crate) fn max_step<T: Real>(norm_sq: T, alpha: T, pen: &Penalty<T>, splitting: Splitting) -> T {
    match splitting {
        Splitting::Prox => T::two() / norm_sq,
        Splitting::GradientL2 => T::two() / (norm_sq + alpha * pen.weights().1),
    }
}

pub(crate) fn resolve_step<T: Real>(
    b: &LinearOp<T>,
    pen: &Penalty<T>,
    alpha: T,
    step: Option<T>,
    splitting: Splitting,
) -> Result<T> {
    let norm_sq = operator_norm(b, T::lit(1e-6)).powi(2);
    let step = match step {
        Some(s) => s,
        None if norm_sq > T::zero() => T::one() / norm_sq,
        // B = 0: the data term is constant and any step works.
        None => T::one(),
    };
    if !(step > T::zero()) || !step.is_finite() {
        return Err(invalid_param(
            "step",
            format!("must be positive, got {step}"),
        ));
    }
    if norm_sq > T::zero() {
        let limit = max_step(norm_sq, alpha, pen, splitting);
        if step >= limit {
            return Err(invalid_param(
                "step",
                format!("{step} is not below the stability limit {limit}"),
            ));
        }
    }
    Ok(step)
}

/// One proximal-gradient step on raw samples with a fixed operator and
/// step; also serves as a LISTA layer.
pub(crate) struct IstaStep<'a, T> {
    pub b: &'a LinearOp<T>,
    pub y: ArrayView1<'a, T>,
    pub step: T,
    pub threshold: T,
    pub l2: T,
    pub splitting: Splitting,
}

impl<'a, T: Real> IstaStep<'a, T> {
    pub fn new(
        b: &'a LinearOp<T>,
        y: &'a Signal<T>,
        pen: &Penalty<T>,
        alpha: T,
        step: T,
        splitting: Splitting,
    ) -> Self {
        let (a1, a2) = pen.weights();
        Self {
            b,
            y: y.samples().view(),
            step,
            threshold: step * alpha * a1,
            l2: step * alpha * a2,
            splitting,
        }
    }

    /// Pre-activation `z` (before the threshold) and the data residual.
    pub fn pre_activation(&self, x: ArrayView1<'_, T>) -> (Array1<T>, Array1<T>) {
        let mut residual = self.b.apply_raw(x);
        residual -= &self.y;
        let grad = self.b.apply_adjoint_raw(residual.view());
        let mut z = x.to_owned();
        if self.splitting == Splitting::GradientL2 {
            z *= T::one() - self.l2;
        }
        z.scaled_add(-self.step, &grad);
        (z, residual)
    }

    pub fn activate(&self, z: &mut Array1<T>) {
        let thr = self.threshold;
        match self.splitting {
            Splitting::Prox => {
                let denom = T::one() + self.l2;
                z.mapv_inplace(|v| soft_threshold(v, thr) / denom);
            }
            Splitting::GradientL2 => z.mapv_inplace(|v| soft_threshold(v, thr)),
        }
    }

    pub fn apply(&self, x: ArrayView1<'_, T>) -> (Array1<T>, Array1<T>) {
        let (mut z, residual) = self.pre_activation(x);
        self.activate(&mut z);
        (z, residual)
    }
}

/// `x(B)` from a zero initial guess.
pub fn x_of_b<T: Real>(
    b: &LinearOp<T>,
    y: &Signal<T>,
    pen: &Penalty<T>,
    alpha: T,
    cfg: &IstaConfig<T>,
) -> Result<SolveReport<T>> {
    let x0 = Signal::zeros(b.ncols(), b.domain())?;
    x_of_b_from(b, y, pen, alpha, cfg, &x0)
}

/// `x(B)` by ISTA warm-started at `x0`.
///
/// Reaching `max_iter` is not an error; the report says `MaxIter`.
pub fn x_of_b_from<T: Real>(
    b: &LinearOp<T>,
    y: &Signal<T>,
    pen: &Penalty<T>,
    alpha: T,
    cfg: &IstaConfig<T>,
    x0: &Signal<T>,
) -> Result<SolveReport<T>> {
    b.check_codomain(y, "x(B) data")?;
    b.check_domain(x0, "x(B) initial guess")?;
    if !(alpha > T::zero()) {
        return Err(invalid_param(
            "alpha",
            format!("must be positive, got {alpha}"),
        ));
    }
    if !(cfg.tol > T::zero()) {
        return Err(invalid_param("tol", "must be positive"));
    }
    if cfg.exact_smooth && pen.is_smooth() {
        let x = smooth_inner_solve(b, y, pen, alpha)?;
        let loss = inner_objective(b, y, pen, alpha, &x);
        return Ok(SolveReport::direct(x, loss));
    }

    let step = resolve_step(b, pen, alpha, cfg.step, cfg.splitting)?;
    Ok(run_ista(b, y, pen, alpha, step, cfg, x0))
}

/// The ISTA loop proper; the step is assumed to be admissible.
pub(crate) fn run_ista<T: Real>(
    b: &LinearOp<T>,
    y: &Signal<T>,
    pen: &Penalty<T>,
    alpha: T,
    step: T,
    cfg: &IstaConfig<T>,
    x0: &Signal<T>,
) -> SolveReport<T> {
    let layer = IstaStep::new(b, y, pen, alpha, step, cfg.splitting);
    let h_x = x0.h();
    let h_y = y.h();

    let mut x = x0.samples().clone();
    let mut loss_trace = Vec::new();
    let mut residual_trace = Vec::new();
    let mut stop_reason = StopReason::MaxIter;
    let mut iterations = 0;

    while iterations < cfg.max_iter {
        let (next, data_res) = layer.apply(x.view());
        loss_trace.push(
            T::half() * h_y * data_res.dot(&data_res) + alpha * value_raw(pen, h_x, x.view()),
        );
        let diff = (h_x * (&next - &x).mapv(|d| d * d).sum()).sqrt();
        residual_trace.push(diff);
        x = next;
        iterations += 1;
        if diff <= cfg.tol {
            stop_reason = StopReason::Converged;
            break;
        }
    }
    let solution = Signal::on_grid_unchecked(x, x0.interval());
    loss_trace.push(inner_objective(b, y, pen, alpha, &solution));

    SolveReport {
        solution,
        loss_trace,
        residual_trace,
        iterations,
        stop_reason,
        multiplier: None,
        operator: None,
        iterates: Vec::new(),
    }
}

/// Closed-form `x(B)` for a penalty without l1 part:
/// `(B^* B + alpha alpha2 I) x = B^* y`.
pub fn smooth_inner_solve<T: Real>(
    b: &LinearOp<T>,
    y: &Signal<T>,
    pen: &Penalty<T>,
    alpha: T,
) -> Result<Signal<T>> {
    if !pen.is_smooth() {
        return Err(invalid_param("penalty", "closed form needs alpha1 = 0"));
    }
    b.check_codomain(y, "smooth solve data")?;
    let shift = alpha * pen.weights().1;
    let rhs = b.apply_adjoint_raw(y.samples().view());
    let x = solve_shifted_spd(b.gram().view(), shift, rhs.view(), "B^*B + alpha alpha2 I")?;
    Ok(Signal::on_grid_unchecked(x, b.domain()))
}

/// Tikhonov solution `(A^* A + alpha_t I) x = A^* y`.
pub fn tikhonov_l2_solve<T: Real>(a: &LinearOp<T>, y: &Signal<T>, alpha_t: T) -> Result<Signal<T>> {
    if !(alpha_t >= T::zero()) {
        return Err(invalid_param(
            "alpha_t",
            format!("must be >= 0, got {alpha_t}"),
        ));
    }
    a.check_codomain(y, "tikhonov data")?;
    let rhs = a.apply_adjoint_raw(y.samples().view());
    let x = solve_shifted_spd(a.gram().view(), alpha_t, rhs.view(), "A^*A + alpha I")?;
    Ok(Signal::on_grid_unchecked(x, a.domain()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IvanovConfig<T> {
    /// Accept a multiplier once `|R~(x_t) - r| <= tol * r`.
    pub tol: T,
    pub bisection_steps: usize,
    /// Doublings allowed while searching the upper multiplier bracket.
    pub bracket_doublings: usize,
    /// Inner solver for the Lagrangian problems with an l1 part.
    pub inner: IstaConfig<T>,
}

impl<T: Real> Default for IvanovConfig<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-8),
            bisection_steps: 60,
            bracket_doublings: 200,
            inner: IstaConfig::default().with_tol(T::lit(1e-11)),
        }
    }
}

/// Solver for the Lagrangian `|A x - y|^2 / 2 + (t / 2) R~(x)`.
struct Lagrangian<'a, T> {
    a: &'a LinearOp<T>,
    y: &'a Signal<T>,
    pen: Penalty<T>,
    gram: ndarray::Array2<T>,
    rhs: Array1<T>,
    inner: IstaConfig<T>,
    step: T,
    warm: Signal<T>,
}

impl<'a, T: Real> Lagrangian<'a, T> {
    fn new(
        a: &'a LinearOp<T>,
        y: &'a Signal<T>,
        pen: &Penalty<T>,
        inner: IstaConfig<T>,
    ) -> Result<Self> {
        let (a1, a2) = pen.weights();
        // (t/2)(a1 |x|_1 + a2 |x|^2) = t * [ (a1/2) |x|_1 + (a2/2) |x|^2 ]
        let half = Penalty::elastic_net(a1 * T::half(), a2)?;
        let nsq = operator_norm(a, T::lit(1e-6)).powi(2);
        let step = if nsq > T::zero() {
            T::one() / nsq
        } else {
            T::one()
        };
        Ok(Self {
            a,
            y,
            pen: half,
            gram: a.gram(),
            rhs: a.apply_adjoint_raw(y.samples().view()),
            inner,
            step,
            warm: Signal::zeros(a.ncols(), a.domain())?,
        })
    }

    fn least_squares(&self) -> Option<Signal<T>> {
        solve_shifted_spd(self.gram.view(), T::zero(), self.rhs.view(), "A^*A")
            .ok()
            .map(|x| Signal::on_grid_unchecked(x, self.a.domain()))
    }

    /// ISTA in chunks, each followed by an active-set polish; the first
    /// polished point passing the fixed-point test is returned.
    fn solve(&mut self, t: T) -> Result<Signal<T>> {
        if self.pen.is_smooth() {
            let shift = t * self.pen.weights().1;
            let x = solve_shifted_spd(self.gram.view(), shift, self.rhs.view(), "A^*A + t I")?;
            return Ok(Signal::on_grid_unchecked(x, self.a.domain()));
        }
        let mut done = 0;
        let mut x = self.warm.clone();
        loop {
            if let Some(p) = self.polish(t, x.samples()) {
                x = Signal::on_grid_unchecked(p, self.a.domain());
                break;
            }
            if done >= self.inner.max_iter {
                break;
            }
            let chunk = POLISH_INTERVAL.min(self.inner.max_iter - done);
            let cfg = self.inner.with_max_iter(chunk);
            let report = run_ista(self.a, self.y, &self.pen, t, self.step, &cfg, &x);
            done += report.iterations;
            x = report.solution;
            if report.stop_reason == StopReason::Converged {
                break;
            }
        }
        self.warm = x.clone();
        Ok(x)
    }

    /// Exact Lagrangian minimizer by [`elastic_net_active_set`] from `start`,
    /// accepted only if it passes the ISTA fixed-point test.
    fn polish(&self, t: T, start: &Array1<T>) -> Option<Array1<T>> {
        let (a1, a2) = self.pen.weights();
        let mut m = self.gram.clone();
        m.diag_mut().mapv_inplace(|d| d + t * a2);
        let x = elastic_net_active_set(&m, &self.rhs, t * a1, start)?;

        let kink = self.step * t * a1;
        let denom = T::one() + self.step * t * a2;
        let mut z = x.clone();
        z.scaled_add(-self.step, &(self.gram.dot(&x) - &self.rhs));
        let moved = z
            .iter()
            .zip(x.iter())
            .map(|(&z, &xi)| {
                let d = soft_threshold(z, kink) / denom - xi;
                d * d
            })
            .sum::<T>();
        ((self.a.h_in() * moved).sqrt() <= self.inner.tol).then_some(x)
    }
}

/// Minimizer of `x^T M x / 2 - b^T x + tau |x|_1` for symmetric positive
/// definite `M`, by block principal pivoting over sign patterns started
/// from the signs of `start`. Falls back to single pivots on the largest
/// infeasible index when the number of infeasibilities stops dropping.
/// `None` if the pattern search does not settle or a reduced system is
/// singular.
fn elastic_net_active_set<T: Real>(
    m: &ndarray::Array2<T>,
    b: &Array1<T>,
    tau: T,
    start: &Array1<T>,
) -> Option<Array1<T>> {
    let n = b.len();
    let mut pattern: Vec<i8> = start
        .iter()
        .map(|&v| {
            if v > T::zero() {
                1
            } else if v < T::zero() {
                -1
            } else {
                0
            }
        })
        .collect();
    let slack = tau * T::lit(1e-10);
    let mut fewest = usize::MAX;
    let mut patience = 3;
    for _ in 0..(4 * n + 20) {
        let free: Vec<usize> = (0..n).filter(|&i| pattern[i] != 0).collect();
        let mut x = Array1::<T>::zeros(n);
        if !free.is_empty() {
            let sub = m
                .select(ndarray::Axis(0), &free)
                .select(ndarray::Axis(1), &free);
            let rhs = Array1::from_iter(
                free.iter()
                    .map(|&i| b[i] - tau * T::from(pattern[i]).unwrap()),
            );
            let xs = Cholesky::new(sub.view(), "active set")
                .ok()?
                .solve(rhs.view());
            for (k, &i) in free.iter().enumerate() {
                x[i] = xs[k];
            }
        }
        let g = m.dot(&x) - b;
        let bad: Vec<usize> = (0..n)
            .filter(|&i| match pattern[i] {
                1 => x[i] <= T::zero(),
                -1 => x[i] >= T::zero(),
                _ => g[i].abs() > tau + slack,
            })
            .collect();
        if bad.is_empty() {
            return Some(x);
        }
        let flip = |p: &mut Vec<i8>, i: usize| {
            p[i] = if p[i] != 0 {
                0
            } else if g[i] < T::zero() {
                1
            } else {
                -1
            };
        };
        if bad.len() < fewest {
            fewest = bad.len();
            patience = 3;
            bad.iter().for_each(|&i| flip(&mut pattern, i));
        } else if patience > 0 {
            patience -= 1;
            bad.iter().for_each(|&i| flip(&mut pattern, i));
        } else {
            flip(&mut pattern, *bad.last().unwrap());
        }
    }
    None
}

/// ISTA iterations between active-set polish attempts.
const POLISH_INTERVAL: usize = 200;

/// `min |A x - y|^2 / 2` subject to `R~(x) <= r`, default settings.
pub fn ivanov_solve<T: Real>(
    a: &LinearOp<T>,
    y: &Signal<T>,
    pen: &Penalty<T>,
    r: T,
    tol: T,
) -> Result<SolveReport<T>> {
    let cfg = IvanovConfig {
        tol,
        ..IvanovConfig::default()
    };
    ivanov_solve_with(a, y, pen, r, &cfg)
}

/// Ivanov regularization by multiplier bisection.
///
/// If the least-squares solution is feasible it is returned with multiplier
/// zero. Otherwise an upper bracket `t_hi` with `R~(x_t_hi) <= r` is found by
/// doubling and `[0, t_hi]` is bisected until the constraint is active to
/// relative accuracy `tol`. The returned point is always the feasible end of
/// the bracket.
pub fn ivanov_solve_with<T: Real>(
    a: &LinearOp<T>,
    y: &Signal<T>,
    pen: &Penalty<T>,
    r: T,
    cfg: &IvanovConfig<T>,
) -> Result<SolveReport<T>> {
    if !(r > T::zero()) || !r.is_finite() {
        return Err(invalid_param(
            "r",
            format!("must be positive and finite, got {r}"),
        ));
    }
    if !(cfg.tol > T::zero()) {
        return Err(invalid_param("tol", "must be positive"));
    }
    a.check_codomain(y, "ivanov data")?;
    let mut lag = Lagrangian::new(a, y, pen, cfg.inner)?;
    let misfit = |x: &Signal<T>| T::half() * a.apply(x).axpy(-T::one(), y).norm_sq();

    let mut loss_trace = Vec::new();
    let mut residual_trace = Vec::new();
    let record = |x: &Signal<T>, p: T, loss: &mut Vec<T>, gap: &mut Vec<T>| {
        loss.push(misfit(x));
        gap.push((p - r) / r);
    };

    if let Some(ls) = lag.least_squares() {
        let p = pen.pairing(&ls);
        record(&ls, p, &mut loss_trace, &mut residual_trace);
        if p <= r {
            return Ok(SolveReport {
                solution: ls,
                loss_trace,
                residual_trace,
                iterations: 0,
                stop_reason: StopReason::Converged,
                multiplier: Some(T::zero()),
                operator: None,
                iterates: Vec::new(),
            });
        }
    }

    // upper bracket
    let mut t_lo = T::zero();
    let mut t_hi = operator_norm(a, T::lit(1e-6))
        .powi(2)
        .max(T::min_positive_value().sqrt());
    let mut x_hi;
    let mut doublings = 0;
    loop {
        let x = lag.solve(t_hi)?;
        let p = pen.pairing(&x);
        record(&x, p, &mut loss_trace, &mut residual_trace);
        if p <= r {
            x_hi = x;
            break;
        }
        t_lo = t_hi;
        t_hi = t_hi * T::two();
        doublings += 1;
        if doublings > cfg.bracket_doublings || !t_hi.is_finite() {
            return Err(AdpError::NoConvergence(format!(
                "no multiplier bracket below t = {t_hi:e}: pairing {p:e} still exceeds r = {r:e}"
            )));
        }
    }

    let mut steps = 0;
    let mut stop_reason = StopReason::MaxIter;
    let mut p_hi = pen.pairing(&x_hi);
    if (r - p_hi) <= cfg.tol * r {
        stop_reason = StopReason::Converged;
    }
    while stop_reason != StopReason::Converged && steps < cfg.bisection_steps {
        let t = T::half() * (t_lo + t_hi);
        if t <= t_lo || t >= t_hi {
            break;
        }
        let x = lag.solve(t)?;
        let p = pen.pairing(&x);
        record(&x, p, &mut loss_trace, &mut residual_trace);
        steps += 1;
        if p <= r {
            t_hi = t;
            x_hi = x;
            p_hi = p;
            if (r - p) <= cfg.tol * r {
                stop_reason = StopReason::Converged;
            }
        } else {
            t_lo = t;
        }
    }
    debug_assert!(p_hi <= r);

    Ok(SolveReport {
        solution: x_hi,
        loss_trace,
        residual_trace,
        iterations: steps,
        stop_reason,
        multiplier: Some(t_hi),
        operator: None,
        iterates: Vec::new(),
    })
}

/// Radius of the Ivanov problem equivalent to ADP: `|y|^2 / (4 alpha)`.
pub fn adp_radius<T: Real>(y: &Signal<T>, alpha: T) -> T {
    y.norm_sq() / (T::lit(4.0) * alpha)
}

/// The exact ADP minimizer over all operators `B`.
pub fn adp_exact_solve<T: Real>(
    a: &LinearOp<T>,
    y: &Signal<T>,
    pen: &Penalty<T>,
    alpha: T,
    tol: T,
) -> Result<SolveReport<T>> {
    let cfg = IvanovConfig {
        tol,
        ..IvanovConfig::default()
    };
    adp_exact_solve_with(a, y, pen, alpha, &cfg)
}

pub fn adp_exact_solve_with<T: Real>(
    a: &LinearOp<T>,
    y: &Signal<T>,
    pen: &Penalty<T>,
    alpha: T,
    cfg: &IvanovConfig<T>,
) -> Result<SolveReport<T>> {
    if y.is_zero() {
        return Err(AdpError::InvalidInput(
            "exact ADP needs nonzero data y".into(),
        ));
    }
    if !(alpha > T::zero()) {
        return Err(invalid_param(
            "alpha",
            format!("must be positive, got {alpha}"),
        ));
    }
    ivanov_solve_with(a, y, pen, adp_radius(y, alpha), cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::make_integration_operator;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_op(rng: &mut ChaCha8Rng, m: usize, n: usize) -> LinearOp<f64> {
        let mat = Array2::from_shape_fn((m, n), |_| rng.random_range(-1.0..1.0));
        LinearOp::from_matrix(mat, (0.0, n as f64), (0.0, m as f64)).unwrap()
    }

    fn random_signal(rng: &mut ChaCha8Rng, n: usize) -> Signal<f64> {
        Signal::new(
            Array1::from_shape_fn(n, |_| rng.random_range(-1.0..1.0)),
            (0.0, n as f64),
        )
        .unwrap()
    }

    #[test]
    fn identity_l2_gives_half_data() {
        let b = LinearOp::identity(6, (0.0, 6.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y = random_signal(&mut rng, 6);
        let pen = Penalty::elastic_net(0.0, 1.0).unwrap();
        let rep = x_of_b(&b, &y, &pen, 1.0, &IstaConfig::default().with_tol(1e-13)).unwrap();
        assert_eq!(rep.stop_reason, StopReason::Converged);
        assert!(rep.solution.distance(&y.scaled(0.5)) < 1e-12);
    }

    #[test]
    fn zero_data_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = random_op(&mut rng, 7, 5);
        let y = Signal::zeros(7, (0.0, 7.0)).unwrap();
        let pen = Penalty::elastic_net(0.3, 0.2).unwrap();
        let rep = x_of_b(&b, &y, &pen, 0.5, &IstaConfig::default()).unwrap();
        assert!(rep.solution.is_zero());
    }

    #[test]
    fn step_above_limit_is_rejected() {
        let b = LinearOp::from_matrix(
            ndarray::array![[2.0, 0.0], [0.0, 1.0]],
            (0.0, 2.0),
            (0.0, 2.0),
        )
        .unwrap();
        let y = Signal::from_vec(vec![1.0, 1.0], (0.0, 2.0)).unwrap();
        let pen = Penalty::<f64>::squared_l2();
        let err = x_of_b(&b, &y, &pen, 1.0, &IstaConfig::default().with_step(0.6)).unwrap_err();
        assert!(matches!(
            err,
            AdpError::InvalidParameter { name: "step", .. }
        ));
        assert!(x_of_b(&b, &y, &pen, 1.0, &IstaConfig::default().with_step(0.45)).is_ok());
    }

    #[test]
    fn max_iter_is_reported_not_raised() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = random_op(&mut rng, 8, 8);
        let y = random_signal(&mut rng, 8);
        let pen = Penalty::elastic_net(0.1, 0.1).unwrap();
        let rep = x_of_b(&b, &y, &pen, 1.0, &IstaConfig::default().with_max_iter(3)).unwrap();
        assert_eq!(rep.stop_reason, StopReason::MaxIter);
        assert_eq!(rep.iterations, 3);
    }

    #[test]
    fn objective_trace_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let b = random_op(&mut rng, 12, 10);
            let y = random_signal(&mut rng, 12);
            let pen = Penalty::elastic_net(0.2, 0.05).unwrap();
            let rep = x_of_b(&b, &y, &pen, 0.7, &IstaConfig::default()).unwrap();
            for w in rep.loss_trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn gradient_splitting_has_same_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = random_op(&mut rng, 9, 9);
        let y = random_signal(&mut rng, 9);
        let pen = Penalty::elastic_net(0.1, 0.4).unwrap();
        let cfg = IstaConfig::default().with_tol(1e-13);
        let p = x_of_b(&b, &y, &pen, 1.0, &cfg).unwrap();
        let g = x_of_b(
            &b,
            &y,
            &pen,
            1.0,
            &cfg.with_splitting(Splitting::GradientL2),
        )
        .unwrap();
        assert!(p.solution.distance(&g.solution) < 1e-10);
    }

    #[test]
    fn exact_smooth_matches_ista() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let b = random_op(&mut rng, 10, 8);
        let y = random_signal(&mut rng, 10);
        let pen = Penalty::<f64>::squared_l2();
        let ista = x_of_b(&b, &y, &pen, 0.8, &IstaConfig::default().with_tol(1e-13)).unwrap();
        let direct = x_of_b(
            &b,
            &y,
            &pen,
            0.8,
            &IstaConfig::default().with_exact_smooth(true),
        )
        .unwrap();
        assert!(ista.solution.distance(&direct.solution) < 1e-10);
    }

    #[test]
    fn tikhonov_examples() {
        let id = LinearOp::identity(4, (0.0, 4.0)).unwrap();
        let y = Signal::from_vec(vec![1.0, -2.0, 4.0, 0.5], (0.0, 4.0)).unwrap();
        let x = tikhonov_l2_solve(&id, &y, 1.0).unwrap();
        assert!(x.distance(&y.scaled(0.5)) < 1e-15);

        let a = make_integration_operator(20, (0.0, 1.0)).unwrap();
        let y = Signal::from_fn(20, (0.0, 1.0), |t: f64| t.sin()).unwrap();
        let mut last = f64::INFINITY;
        for k in -6..4 {
            let nrm = tikhonov_l2_solve(&a, &y, 10f64.powi(k)).unwrap().norm();
            assert!(nrm < last);
            last = nrm;
        }
        assert!(tikhonov_l2_solve(&a, &y, -1.0).is_err());
    }

    #[test]
    fn tikhonov_singular_without_regularization() {
        let a = LinearOp::from_matrix(
            ndarray::array![[1.0, 1.0], [1.0, 1.0]],
            (0.0, 2.0),
            (0.0, 2.0),
        )
        .unwrap();
        let y = Signal::from_vec(vec![1.0, 2.0], (0.0, 2.0)).unwrap();
        assert!(matches!(
            tikhonov_l2_solve(&a, &y, 0.0),
            Err(AdpError::SingularMatrix { .. })
        ));
    }

    #[test]
    fn tikhonov_residual_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_op(&mut rng, 30, 30);
        let y = random_signal(&mut rng, 30);
        let x = tikhonov_l2_solve(&a, &y, 0.3).unwrap();
        let lhs = a.adjoint_apply(&a.apply(&x)).axpy(0.3, &x);
        let rhs = a.adjoint_apply(&y);
        assert!(lhs.distance(&rhs) <= 1e-10 * rhs.norm());
    }

    #[test]
    fn ivanov_inactive_constraint_returns_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_op(&mut rng, 12, 6);
        let y = random_signal(&mut rng, 12);
        let pen = Penalty::<f64>::squared_l2();
        let ls = tikhonov_l2_solve(&a, &y, 0.0).unwrap();
        let rep = ivanov_solve(&a, &y, &pen, pen.pairing(&ls) * 1.5, 1e-8).unwrap();
        assert_eq!(rep.multiplier, Some(0.0));
        assert!(rep.solution.distance(&ls) < 1e-14);
        // tie: exactly on the boundary counts as inactive
        let tie = ivanov_solve(&a, &y, &pen, pen.pairing(&ls), 1e-8).unwrap();
        assert_eq!(tie.multiplier, Some(0.0));
    }

    #[test]
    fn ivanov_active_constraint_is_tight() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_op(&mut rng, 10, 10);
        let y = random_signal(&mut rng, 10);
        let pen = Penalty::<f64>::squared_l2();
        let ls = tikhonov_l2_solve(&a, &y, 0.0).unwrap();
        let r = 0.2 * pen.pairing(&ls);
        let tol = 1e-8;
        let rep = ivanov_solve(&a, &y, &pen, r, tol).unwrap();
        let p = rep.solution.norm_sq();
        assert!((p - r).abs() <= tol * r);
        assert!(p <= r * (1.0 + tol));
        let t = rep.multiplier.unwrap();
        assert!(t > 0.0);
        let tik = tikhonov_l2_solve(&a, &y, t).unwrap();
        assert!(tik.distance(&rep.solution) <= 1e-10 * tik.norm());
    }

    #[test]
    fn ivanov_elastic_net_is_feasible_and_tight() {
        let a = make_integration_operator(24, (0.0, 1.0)).unwrap();
        let y = Signal::from_fn(24, (0.0, 1.0), |t: f64| (3.0 * t).sin()).unwrap();
        let pen = Penalty::elastic_net(0.05, 0.1).unwrap();
        let r = 0.02;
        let tol = 1e-6;
        let rep = ivanov_solve(&a, &y, &pen, r, tol).unwrap();
        let p = pen.pairing(&rep.solution);
        assert!(p <= r * (1.0 + tol));
        assert!((r - p) <= tol * r, "gap {}", (r - p) / r);
    }

    #[test]
    fn exact_adp_rejects_zero_data() {
        let a = make_integration_operator(8, (0.0, 1.0)).unwrap();
        let y = Signal::zeros(8, (0.0, 1.0)).unwrap();
        let pen = Penalty::<f64>::squared_l2();
        assert!(matches!(
            adp_exact_solve(&a, &y, &pen, 1.0, 1e-8),
            Err(AdpError::InvalidInput(_))
        ));
        let y = Signal::from_vec(vec![1.0; 8], (0.0, 1.0)).unwrap();
        assert!(adp_exact_solve(&a, &y, &pen, 0.0, 1e-8).is_err());
        assert!(ivanov_solve(&a, &y, &pen, -1.0, 1e-8).is_err());
    }

    #[test]
    fn exact_adp_vanishing_alpha_tends_to_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let a = random_op(&mut rng, 8, 8);
        let y = random_signal(&mut rng, 8);
        let pen = Penalty::<f64>::squared_l2();
        let ls = tikhonov_l2_solve(&a, &y, 0.0).unwrap();
        let rep = adp_exact_solve(&a, &y, &pen, 1e-9, 1e-8).unwrap();
        assert!(rep.solution.distance(&ls) < 1e-12 * ls.norm().max(1.0));
    }

    #[test]
    fn exact_adp_integration_elastic_net_is_feasible() {
        let a = make_integration_operator(32, (0.0, 1.0)).unwrap();
        let x_true = Signal::from_fn(
            32,
            (0.0, 1.0),
            |t: f64| if t > 0.3 && t < 0.6 { 1.0 } else { 0.0 },
        )
        .unwrap();
        let y = a.apply(&x_true);
        let pen = Penalty::elastic_net(0.02, 0.05).unwrap();
        let alpha = 1.0;
        let rep = adp_exact_solve(&a, &y, &pen, alpha, 1e-8).unwrap();
        assert!(alpha * pen.pairing(&rep.solution) <= y.norm_sq() / 4.0 * (1.0 + 1e-8));
    }

    #[test]
    fn works_in_single_precision() {
        let b = LinearOp::<f32>::identity(4, (0.0, 1.0)).unwrap();
        let y = Signal::from_vec(vec![1.0f32, 2.0, -1.0, 0.5], (0.0, 1.0)).unwrap();
        let pen = Penalty::elastic_net(0.0f32, 1.0).unwrap();
        let rep = x_of_b(&b, &y, &pen, 1.0, &IstaConfig::default().with_tol(1e-6)).unwrap();
        assert!(rep.solution.distance(&y.scaled(0.5)) < 1e-5);
    }
}
