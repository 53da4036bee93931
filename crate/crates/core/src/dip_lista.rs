//! Deep image prior with a LISTA-like network: `L` weight-tied layers
//!
//! ```text
//! x^{l+1} = S_{lambda alpha alpha1}((1 - lambda alpha alpha2) x^l - lambda B^*(B x^l - y))
//! ```
//!
//! trained on the single measurement `y` by gradient descent over `B`, with
//! gradients from a hand-written reverse pass.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adp_iterative::DivergenceGuard;
use crate::error::{invalid_param, AdpError, Result};
use crate::operators::{operator_norm, LinearOp, Signal};
use crate::penalties::Penalty;
use crate::problem::AdpProblem;
use crate::scalar::Real;
use crate::variational::{max_step, IstaStep, SolveReport, Splitting, StopReason};

/// Seed of [`random_input`] when the caller has no preference.
pub const DEFAULT_INPUT_SEED: u64 = 0xd1b_1157a;

/// Depth of the block that is rebuilt and backpropagated through in each
/// step of the unbounded-depth scheme.
pub const DEFAULT_BLOCK_DEPTH: usize = 10;

#[derive(Debug, Clone)]
pub struct ListaNet<T> {
    pub b: LinearOp<T>,
    pub depth: usize,
    pub step: T,
    pub pen: Penalty<T>,
    pub alpha: T,
}

impl<T: Real> ListaNet<T> {
    /// Builds a net with step `lambda = 1 / |B|^2` when `step` is `None`, or
    /// `1 / (|B|^2 + alpha alpha2)` if the former is not a stable step.
    pub fn new(
        b: LinearOp<T>,
        depth: usize,
        step: Option<T>,
        pen: Penalty<T>,
        alpha: T,
    ) -> Result<Self> {
        if depth == 0 {
            return Err(invalid_param("depth", "must be at least 1"));
        }
        if !(alpha > T::zero()) {
            return Err(invalid_param(
                "alpha",
                format!("must be positive, got {alpha}"),
            ));
        }
        let norm_sq = operator_norm(&b, T::lit(1e-6)).powi(2);
        let step = match step {
            Some(s) => s,
            None if norm_sq > T::zero() => {
                let limit = max_step(norm_sq, alpha, &pen, Splitting::GradientL2);
                if T::one() / norm_sq < limit {
                    T::one() / norm_sq
                } else {
                    T::one() / (norm_sq + alpha * pen.weights().1)
                }
            }
            None => T::one(),
        };
        if !(step > T::zero()) || !step.is_finite() {
            return Err(invalid_param(
                "step",
                format!("must be positive, got {step}"),
            ));
        }
        if norm_sq > T::zero() {
            let limit = max_step(norm_sq, alpha, &pen, Splitting::GradientL2);
            if step >= limit {
                return Err(invalid_param(
                    "step",
                    format!("{step} is not below the stability limit {limit}"),
                ));
            }
        }
        Ok(Self {
            b,
            depth,
            step,
            pen,
            alpha,
        })
    }

    /// Same weights and step, different depth.
    pub fn with_depth(&self, depth: usize) -> Result<Self> {
        if depth == 0 {
            return Err(invalid_param("depth", "must be at least 1"));
        }
        Ok(Self {
            depth,
            ..self.clone()
        })
    }

    fn layer<'a>(&'a self, y: &'a Signal<T>) -> IstaStep<'a, T> {
        IstaStep::new(
            &self.b,
            y,
            &self.pen,
            self.alpha,
            self.step,
            Splitting::GradientL2,
        )
    }
}

/// Network output `x^L` for input `z`.
pub fn lista_forward<T: Real>(
    net: &ListaNet<T>,
    z: &Signal<T>,
    y: &Signal<T>,
) -> Result<Signal<T>> {
    net.b.check_domain(z, "network input")?;
    net.b.check_codomain(y, "network data")?;
    let layer = net.layer(y);
    let mut x = z.samples().clone();
    for _ in 0..net.depth {
        x = layer.apply(x.view()).0;
    }
    Ok(Signal::on_grid_unchecked(x, z.interval()))
}

/// Forward pass keeping what the reverse pass needs.
struct Tape<T> {
    inputs: Vec<Array1<T>>,
    residuals: Vec<Array1<T>>,
    masks: Vec<Vec<bool>>,
    output: Array1<T>,
}

fn record<T: Real>(net: &ListaNet<T>, z: &Signal<T>, y: &Signal<T>) -> Tape<T> {
    let layer = net.layer(y);
    let thr = layer.threshold;
    let mut tape = Tape {
        inputs: Vec::with_capacity(net.depth),
        residuals: Vec::with_capacity(net.depth),
        masks: Vec::with_capacity(net.depth),
        output: z.samples().clone(),
    };
    for _ in 0..net.depth {
        let (mut pre, residual) = layer.pre_activation(tape.output.view());
        // derivative 0 at the kink, 1 everywhere for a zero threshold
        tape.masks.push(
            pre.iter()
                .map(|v| thr == T::zero() || v.abs() > thr)
                .collect(),
        );
        layer.activate(&mut pre);
        tape.inputs.push(std::mem::replace(&mut tape.output, pre));
        tape.residuals.push(residual);
    }
    tape
}

/// Reverse pass through the recorded layers, seeded with the derivative of
/// the outer loss with respect to the raw output samples.
fn backprop<T: Real>(net: &ListaNet<T>, tape: &Tape<T>, seed: Array1<T>) -> Array2<T> {
    let b = net.b.matrix();
    let c = net.b.adjoint_scale();
    let lc = net.step * c;
    let keep = T::one() - net.step * net.alpha * net.pen.weights().1;
    let (m, n) = b.dim();
    let mut grad = Array2::<T>::zeros((m, n));
    let mut xbar = seed;
    for l in (0..net.depth).rev() {
        let mut pbar = xbar;
        for (v, &on) in pbar.iter_mut().zip(&tape.masks[l]) {
            if !on {
                *v = T::zero();
            }
        }
        let bp = b.dot(&pbar);
        let r = &tape.residuals[l];
        let x = &tape.inputs[l];
        for i in 0..m {
            let (ri, bpi) = (-lc * r[i], -lc * bp[i]);
            let mut row = grad.row_mut(i);
            for j in 0..n {
                row[j] += ri * pbar[j] + bpi * x[j];
            }
        }
        let back = b.t().dot(&bp);
        xbar = pbar * keep;
        xbar.scaled_add(-lc, &back);
    }
    grad
}

fn outer_seed<T: Real>(a: &LinearOp<T>, y: &Signal<T>, out: &Array1<T>) -> (T, Array1<T>) {
    let mut r = a.apply_raw(out.view());
    r -= y.samples();
    let loss = T::half() * y.h() * r.dot(&r);
    let mut seed = a.matrix().t().dot(&r);
    seed *= y.h();
    (loss, seed)
}

/// Gradient of `|A lista_forward(z) - y|^2 / 2` with respect to the entries
/// of `B`, together with the loss and the network output.
pub fn lista_loss_and_gradient<T: Real>(
    net: &ListaNet<T>,
    z: &Signal<T>,
    y: &Signal<T>,
    a: &LinearOp<T>,
) -> Result<(T, Signal<T>, Array2<T>)> {
    net.b.check_domain(z, "network input")?;
    net.b.check_codomain(y, "network data")?;
    a.check_domain(z, "outer operator")?;
    a.check_codomain(y, "outer operator")?;
    let tape = record(net, z, y);
    let (loss, seed) = outer_seed(a, y, &tape.output);
    let grad = backprop(net, &tape, seed);
    Ok((
        loss,
        Signal::on_grid_unchecked(tape.output, z.interval()),
        grad,
    ))
}

pub fn lista_backward<T: Real>(
    net: &ListaNet<T>,
    z: &Signal<T>,
    y: &Signal<T>,
    a: &LinearOp<T>,
) -> Result<Array2<T>> {
    Ok(lista_loss_and_gradient(net, z, y, a)?.2)
}

/// Componentwise uniform noise in `[0, 1]` on the domain grid of `op`.
pub fn random_input<T: Real>(op: &LinearOp<T>, seed: u64) -> Signal<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = Array1::from_shape_fn(op.ncols(), |_| T::lit(rng.random::<f64>()));
    Signal::on_grid_unchecked(samples, op.domain())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DipConfig<T> {
    /// Network depth for the fixed-depth net, block depth for the
    /// unbounded scheme.
    pub depth: usize,
    /// Gradient step on `B`; zero freezes the weights.
    pub lr: T,
    pub iters: usize,
    /// Layer step `lambda`; `1 / |B_0|^2` when unset. Kept fixed while `B`
    /// is trained.
    pub step: Option<T>,
    pub record_iterates: bool,
}

impl<T: Real> Default for DipConfig<T> {
    fn default() -> Self {
        Self {
            depth: DEFAULT_BLOCK_DEPTH,
            lr: T::lit(1e-2),
            iters: 100,
            step: None,
            record_iterates: false,
        }
    }
}

impl<T: Real> DipConfig<T> {
    fn validate(&self) -> Result<()> {
        if !(self.lr >= T::zero()) || !self.lr.is_finite() {
            return Err(invalid_param(
                "lr",
                format!("must be >= 0, got {}", self.lr),
            ));
        }
        if self.depth == 0 {
            return Err(invalid_param("depth", "must be at least 1"));
        }
        Ok(())
    }
}

fn descend<T: Real>(net: &mut ListaNet<T>, grad: &Array2<T>, lr: T, k: usize) -> Result<()> {
    if lr == T::zero() {
        return Ok(());
    }
    let mut next = net.b.matrix().clone();
    next.scaled_add(-lr, grad);
    net.b = net.b.with_matrix(next).map_err(|_| AdpError::Divergence {
        iteration: k,
        window: crate::adp_iterative::DIVERGENCE_WINDOW,
        loss: f64::INFINITY,
    })?;
    Ok(())
}

fn check_start<T: Real>(problem: &AdpProblem<T>, z0: &Signal<T>, b0: &LinearOp<T>) -> Result<()> {
    let a = &problem.operator;
    if b0.matrix().dim() != a.matrix().dim()
        || b0.domain() != a.domain()
        || b0.codomain() != a.codomain()
    {
        return Err(AdpError::InvalidDimension("B_0 must act like A".into()));
    }
    a.check_domain(z0, "network input")?;
    a.check_codomain(&problem.data, "data")
}

/// DIP with a fixed-depth net: gradient descent on `B` with the input `z0`
/// held fixed. The loss trace has `iters + 1` entries, the last one for the
/// returned output.
pub fn dip_lista_solve<T: Real>(
    problem: &AdpProblem<T>,
    cfg: &DipConfig<T>,
    z0: &Signal<T>,
    b0: &LinearOp<T>,
) -> Result<SolveReport<T>> {
    cfg.validate()?;
    check_start(problem, z0, b0)?;
    let a = &problem.operator;
    let y = &problem.data;
    let mut net = ListaNet::new(
        b0.clone(),
        cfg.depth,
        cfg.step,
        problem.penalty,
        problem.alpha,
    )?;

    let mut loss_trace = Vec::with_capacity(cfg.iters + 1);
    let mut residual_trace = Vec::with_capacity(cfg.iters + 1);
    let mut iterates = Vec::new();
    let mut guard = DivergenceGuard::default();
    let mut k = 0;
    loop {
        let (loss, out, grad) = lista_loss_and_gradient(&net, z0, y, a)?;
        loss_trace.push(loss);
        residual_trace.push(problem.residual_norm(&out));
        if cfg.record_iterates {
            iterates.push(out.clone());
        }
        guard.observe(k, loss.to_f64_lossy())?;
        if k == cfg.iters {
            return Ok(SolveReport {
                solution: out,
                loss_trace,
                residual_trace,
                iterations: k,
                stop_reason: StopReason::MaxIter,
                multiplier: None,
                operator: Some(net.b),
                iterates,
            });
        }
        descend(&mut net, &grad, cfg.lr, k)?;
        k += 1;
    }
}

/// DIP with unbounded depth: each step runs a block of `cfg.depth` layers
/// on the previous block's output and backpropagates through that block
/// only. With `lr = 0` this is plain ISTA on `B_0`.
pub fn dip_lista_inf_solve<T: Real>(
    problem: &AdpProblem<T>,
    cfg: &DipConfig<T>,
    z0: &Signal<T>,
    b0: &LinearOp<T>,
) -> Result<SolveReport<T>> {
    cfg.validate()?;
    check_start(problem, z0, b0)?;
    let a = &problem.operator;
    let y = &problem.data;
    let mut net = ListaNet::new(
        b0.clone(),
        cfg.depth,
        cfg.step,
        problem.penalty,
        problem.alpha,
    )?;

    let mut z = z0.clone();
    let mut loss_trace = Vec::with_capacity(cfg.iters + 1);
    let mut residual_trace = Vec::with_capacity(cfg.iters + 1);
    let mut iterates = Vec::new();
    let mut guard = DivergenceGuard::default();
    let mut k = 0;
    loop {
        let (loss, out, grad) = lista_loss_and_gradient(&net, &z, y, a)?;
        loss_trace.push(loss);
        residual_trace.push(problem.residual_norm(&out));
        if cfg.record_iterates {
            iterates.push(out.clone());
        }
        guard.observe(k, loss.to_f64_lossy())?;
        if k == cfg.iters {
            return Ok(SolveReport {
                solution: out,
                loss_trace,
                residual_trace,
                iterations: k,
                stop_reason: StopReason::MaxIter,
                multiplier: None,
                operator: Some(net.b),
                iterates,
            });
        }
        descend(&mut net, &grad, cfg.lr, k)?;
        z = out;
        k += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::make_integration_operator;
    use crate::variational::{x_of_b, IstaConfig};

    fn unit() -> (f64, f64) {
        (0.0, 1.0)
    }

    fn setup(n: usize) -> (LinearOp<f64>, Signal<f64>) {
        let a = make_integration_operator(n, unit()).unwrap();
        let y = Signal::from_fn(n, unit(), |t: f64| (4.0 * t).sin()).unwrap();
        (a, y)
    }

    #[test]
    fn fixed_point_is_invariant() {
        let (a, y) = setup(12);
        let pen = Penalty::elastic_net(0.05, 1.0).unwrap();
        let net = ListaNet::new(a.clone(), 1, None, pen, 0.01).unwrap();
        let cfg = IstaConfig::default()
            .with_splitting(Splitting::GradientL2)
            .with_step(net.step)
            .with_tol(1e-14);
        let x = x_of_b(&a, &y, &pen, 0.01, &cfg).unwrap().solution;
        let out = lista_forward(&net, &x, &y).unwrap();
        assert!(out.distance(&x) < 1e-12);
    }

    #[test]
    fn zero_operator_with_large_threshold_kills_input() {
        let n = 5;
        let b = LinearOp::zeros(n, n, unit(), unit()).unwrap();
        let pen = Penalty::elastic_net(100.0, 0.0).unwrap();
        let net = ListaNet::new(b, 1, Some(0.5), pen, 1.0).unwrap();
        let z = Signal::from_vec(vec![1.0, -2.0, 3.0, 0.5, 0.0], unit()).unwrap();
        let y = Signal::from_vec(vec![1.0; n], unit()).unwrap();
        assert!(lista_forward(&net, &z, &y).unwrap().is_zero());
    }

    #[test]
    fn deep_net_equals_manual_loop() {
        let (a, y) = setup(16);
        let pen = Penalty::elastic_net(0.1, 0.5).unwrap();
        let deep = ListaNet::new(a.clone(), 10, None, pen, 0.02).unwrap();
        let one = deep.with_depth(1).unwrap();
        let z = random_input(&a, 3);
        let mut x = z.clone();
        for _ in 0..10 {
            x = lista_forward(&one, &x, &y).unwrap();
        }
        assert_eq!(lista_forward(&deep, &z, &y).unwrap(), x);
    }

    #[test]
    fn single_smooth_layer_matches_hand_gradient() {
        // x' = (1 - l a a2) z - l c B^T (B z - y), loss = h/2 |A x' - y|^2
        let (a, y) = setup(6);
        let pen = Penalty::<f64>::squared_l2();
        let alpha = 0.1;
        let b = a.with_matrix(a.matrix() * 1.1).unwrap();
        let net = ListaNet::new(b.clone(), 1, None, pen, alpha).unwrap();
        let z = random_input(&a, 9);
        let grad = lista_backward(&net, &z, &y, &a).unwrap();

        let lc = net.step * b.adjoint_scale();
        let x1 = lista_forward(&net, &z, &y).unwrap();
        let s = a.matrix().t().dot(&(a.apply(&x1).samples() - y.samples())) * y.h();
        let r = b.apply(&z).samples() - y.samples();
        let bs = b.matrix().dot(&s);
        let zs = z.samples();
        for i in 0..6 {
            for j in 0..6 {
                let expect = -lc * (r[i] * s[j] + bs[i] * zs[j]);
                assert!((grad[[i, j]] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_iterations_return_forward_pass() {
        let (a, y) = setup(10);
        let pen = Penalty::elastic_net(0.1, 1.0).unwrap();
        let problem = AdpProblem::new(a.clone(), y.clone(), pen, 0.01).unwrap();
        let z = random_input(&a, DEFAULT_INPUT_SEED);
        let cfg = DipConfig {
            iters: 0,
            ..DipConfig::default()
        };
        let report = dip_lista_solve(&problem, &cfg, &z, &a).unwrap();
        let net = ListaNet::new(a.clone(), 10, None, pen, 0.01).unwrap();
        assert_eq!(report.solution, lista_forward(&net, &z, &y).unwrap());
        assert_eq!(report.loss_trace.len(), 1);
    }

    #[test]
    fn input_noise_is_seeded() {
        let (a, _) = setup(8);
        assert_eq!(random_input(&a, 5), random_input(&a, 5));
        assert_ne!(random_input(&a, 5), random_input(&a, 6));
        assert!(random_input(&a, 5)
            .samples()
            .iter()
            .all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn rejects_bad_nets() {
        let (a, _) = setup(8);
        let pen = Penalty::elastic_net(0.1, 1.0).unwrap();
        assert!(ListaNet::new(a.clone(), 0, None, pen, 0.1).is_err());
        assert!(ListaNet::new(a.clone(), 3, Some(1e3), pen, 0.1).is_err());
        assert!(ListaNet::new(a, 3, None, pen, 0.0).is_err());
    }

    #[test]
    fn default_step_stays_stable_for_heavy_l2_weight() {
        let (a, _) = setup(8);
        let norm_sq = operator_norm(&a, 1e-10).powi(2);
        let pen = Penalty::elastic_net(0.0, 1.0).unwrap();
        let net = ListaNet::new(a.clone(), 3, None, pen, 2.0 * norm_sq).unwrap();
        assert!((net.step - 1.0 / (3.0 * norm_sq)).abs() < 1e-4 / norm_sq);
        let light = ListaNet::new(a, 3, None, pen, 0.1 * norm_sq).unwrap();
        assert!((light.step - 1.0 / norm_sq).abs() < 1e-4 / norm_sq);
    }
}
