//! Randomized property checks on the solvers. Each check takes its sample
//! count so the CLI self-test can run a quick version and the acceptance
//! suite the full one; thresholds are fixed here.

use std::time::Instant;

use adp_core::adp_iterative::{
    adp_ift_solve, bregman_distance, ift_gradient, EarlyStop, IftConfig,
};
use adp_core::dip_lista::{lista_forward, random_input, ListaNet};
use adp_core::lemma_lab::{
    construct_b, equivalent_tikhonov_parameter, remark35_demo, verify_minimizer,
};
use adp_core::operators::make_integration_operator;
use adp_core::variational::{
    adp_exact_solve, adp_radius, tikhonov_l2_solve, x_of_b, x_of_b_from, IstaConfig,
};
use adp_core::{AdpError, AdpProblem, LinearOp64, Penalty64, Signal64};
use anyhow::{Context, Result};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const GRID: (f64, f64) = (0.0, 1.0);

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            passed,
            detail,
        }
    }

    /// A check that could not run counts as failed.
    fn errored(name: &str, err: anyhow::Error) -> Self {
        Self::new(name, false, format!("error: {err:#}"))
    }

    pub fn line(&self) -> String {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        format!("{tag} {}: {}", self.name, self.detail)
    }
}

fn settle(name: &str, res: Result<CheckOutcome>) -> CheckOutcome {
    res.unwrap_or_else(|err| CheckOutcome::errored(name, err))
}

fn random_op(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Result<LinearOp64> {
    Ok(LinearOp64::from_matrix(
        Array2::from_shape_fn((m, n), |_| rng.random_range(-1.0..1.0)),
        GRID,
        GRID,
    )?)
}

fn random_signal(rng: &mut ChaCha8Rng, n: usize) -> Result<Signal64> {
    Ok(Signal64::from_vec(
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        GRID,
    )?)
}

fn gaussian_unit(rng: &mut ChaCha8Rng, n: usize) -> Result<Signal64> {
    let e = Signal64::from_vec((0..n).map(|_| StandardNormal.sample(rng)).collect(), GRID)?;
    Ok(e.scaled(1.0 / e.norm()))
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    10f64.powf(rng.random_range(lo.log10()..hi.log10()))
}

/// Exact ADP with squared-l2 penalty against Tikhonov at the multiplier
/// found by the bisection.
pub fn equivalence(instances: usize, seed: u64) -> CheckOutcome {
    let name = "exact ADP equals Tikhonov at the Ivanov multiplier";
    settle(
        name,
        (|| {
            let start = Instant::now();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pen = Penalty64::squared_l2();
            let mut worst = 0.0f64;
            let mut worst_constraint = 0.0f64;
            for _ in 0..instances {
                let n = rng.random_range(2..=30);
                let a = random_op(&mut rng, n, n)?;
                let mut y = random_signal(&mut rng, n)?;
                while y.is_zero() {
                    y = random_signal(&mut rng, n)?;
                }
                let alpha = log_uniform(&mut rng, 1e-2, 1e2);
                let report = adp_exact_solve(&a, &y, &pen, alpha, 1e-12)?;
                let t = report
                    .multiplier
                    .context("exact ADP reports no multiplier")?;
                let tik = tikhonov_l2_solve(&a, &y, t)?;
                let rel = report.solution.distance(&tik) / tik.norm().max(f64::MIN_POSITIVE);
                worst = worst.max(rel);
                let r = adp_radius(&y, alpha);
                // the constraint is active unless the least-squares solution fits inside
                let gap = pen.pairing(&report.solution) - r;
                let gap = if t > 0.0 { gap.abs() } else { gap.max(0.0) };
                worst_constraint = worst_constraint.max(gap / r);
            }
            let secs = start.elapsed().as_secs_f64();
            Ok(CheckOutcome::new(
            name,
            worst <= 1e-6 && worst_constraint <= 1e-6 && secs <= 10.0,
            format!(
                "{instances} instances, max rel diff {worst:.2e} (<= 1e-6), max constraint gap {worst_constraint:.2e}, {secs:.2} s (<= 10 s)"
            ),
        ))
        })(),
    )
}

/// A sparse `x^` with at least one nonzero entry and a subgradient `v`
/// that is random on the zero set.
fn sparse_target(rng: &mut ChaCha8Rng, n: usize, pen: &Penalty64) -> Result<(Signal64, Signal64)> {
    let (a1, a2) = pen.weights();
    let mut xs: Vec<f64> = (0..n)
        .map(|_| {
            if rng.random_bool(0.4) {
                0.0
            } else {
                rng.random_range(-2.0..2.0)
            }
        })
        .collect();
    if xs.iter().all(|v| *v == 0.0) {
        xs[rng.random_range(0..n)] = 1.0;
    }
    let vs: Vec<f64> = xs
        .iter()
        .map(|&x| {
            if x == 0.0 {
                a1 * rng.random_range(-1.0..=1.0)
            } else {
                a1 * x.signum() + a2 * x
            }
        })
        .collect();
    Ok((Signal64::from_vec(xs, GRID)?, Signal64::from_vec(vs, GRID)?))
}

/// Operator construction followed by the minimizer check on feasible
/// targets; infeasible targets must be rejected.
pub fn round_trip(instances: usize, seed: u64) -> CheckOutcome {
    let name = "constructed operator round trip";
    settle(
        name,
        (|| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut worst_res = 0.0f64;
            let mut worst_dist = 0.0f64;
            for _ in 0..instances {
                let n = rng.random_range(2..=12);
                let pen =
                    Penalty64::elastic_net(rng.random_range(0.0..1.0), rng.random_range(0.1..1.0))?;
                let alpha = log_uniform(&mut rng, 1e-2, 1.0);
                let (xhat, v) = sparse_target(&mut rng, n, &pen)?;
                let y = gaussian_unit(&mut rng, n)?;
                let need = 4.0 * alpha * pen.pairing(&xhat);
                let y = y.scaled((rng.random_range(1.05..20.0) * need).sqrt());
                let b = construct_b(&xhat, &v, &y, &pen, alpha)?.materialize();
                let check = verify_minimizer(&b, &xhat, &y, &pen, alpha)?;
                worst_res = worst_res.max(check.residual);
                worst_dist = worst_dist.max(check.ista_distance);
            }
            let mut rejected = 0;
            for _ in 0..instances {
                let n = rng.random_range(2..=12);
                let pen =
                    Penalty64::elastic_net(rng.random_range(0.0..1.0), rng.random_range(0.1..1.0))?;
                let alpha = log_uniform(&mut rng, 1e-2, 1.0);
                let (xhat, v) = sparse_target(&mut rng, n, &pen)?;
                let y = gaussian_unit(&mut rng, n)?;
                let need = 4.0 * alpha * pen.pairing(&xhat);
                let y = y.scaled((rng.random_range(0.05..0.95) * need).sqrt());
                if matches!(
                    construct_b(&xhat, &v, &y, &pen, alpha),
                    Err(AdpError::Infeasible { .. })
                ) {
                    rejected += 1;
                }
            }
            Ok(CheckOutcome::new(
            name,
            worst_res <= 1e-10 && worst_dist <= 1e-6 && rejected == instances,
            format!(
                "{instances} feasible: max residual {worst_res:.2e} (<= 1e-10), max ISTA distance {worst_dist:.2e} (<= 1e-6); infeasible rejected {rejected}/{instances}"
            ),
        ))
        })(),
    )
}

fn outer_loss(a: &LinearOp64, x: &Signal64, y: &Signal64) -> f64 {
    0.5 * a.apply(x).distance(y).powi(2)
}

/// IFT hypergradient against central finite differences of the outer loss.
pub fn hypergradient(instances: usize, seed: u64) -> CheckOutcome {
    let name = "IFT hypergradient matches finite differences";
    settle(
        name,
        (|| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cfg = IstaConfig::default()
                .with_tol(1e-14)
                .with_max_iter(2_000_000);
            let eps = 1e-6;
            let mut worst = 0.0f64;
            for _ in 0..instances {
                let n = rng.random_range(3..=6);
                let a = LinearOp64::from_matrix(
                    Array2::from_shape_fn((n, n), |(i, j)| {
                        let diag = if i == j { 1.5 } else { 0.0 };
                        n as f64 * (diag + 0.3 * rng.random_range(-1.0..1.0))
                    }),
                    GRID,
                    GRID,
                )?;
                let b = a.with_matrix(
                    a.matrix()
                        .mapv(|v| v + 0.2 * n as f64 * rng.random_range(-1.0..1.0)),
                )?;
                let y = random_signal(&mut rng, n)?.scaled(2.0);
                let pen =
                    Penalty64::elastic_net(rng.random_range(0.0..0.5), rng.random_range(0.2..1.0))?;
                let alpha = log_uniform(&mut rng, 1e-2, 1e-1);
                let x = x_of_b(&b, &y, &pen, alpha, &cfg)?.solution;
                let grad = ift_gradient(&b, &x, &a, &y, &pen, alpha)?;
                let mut fd = Array2::zeros(grad.dim());
                for ((i, j), slot) in fd.indexed_iter_mut() {
                    let shifted = |s: f64| -> Result<f64> {
                        let mut m = b.matrix().clone();
                        m[[i, j]] += s;
                        let bs = b.with_matrix(m)?;
                        let xs = x_of_b_from(&bs, &y, &pen, alpha, &cfg, &x)?.solution;
                        Ok(outer_loss(&a, &xs, &y))
                    };
                    *slot = (shifted(eps)? - shifted(-eps)?) / (2.0 * eps);
                }
                let err = (&fd - &grad).mapv(|v| v * v).sum().sqrt();
                let scale = grad.mapv(|v| v * v).sum().sqrt().max(1e-8);
                worst = worst.max(err / scale);
            }
            Ok(CheckOutcome::new(
                name,
                worst <= 1e-4,
                format!(
                    "{instances} instances, max relative Frobenius error {worst:.2e} (<= 1e-4)"
                ),
            ))
        })(),
    )
}

/// The Tikhonov parameter reproducing the ADP solution never exceeds the
/// ADP parameter, and `|x(A)| <= |x_ADP|`.
pub fn ordering(instances: usize, seed: u64) -> CheckOutcome {
    let name = "equivalent Tikhonov parameter below the ADP parameter";
    settle(
        name,
        (|| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pen = Penalty64::squared_l2();
            let mut violations = 0;
            let mut worst_ratio = 0.0f64;
            for _ in 0..instances {
                let n = rng.random_range(2..=20);
                let a = random_op(&mut rng, n, n)?;
                let y = gaussian_unit(&mut rng, n)?.scaled(rng.random_range(0.1..3.0));
                let alpha = log_uniform(&mut rng, 1e-3, 1e2);
                let x_adp = adp_exact_solve(&a, &y, &pen, alpha, 1e-12)?.solution;
                let t = equivalent_tikhonov_parameter(&a, &y, &x_adp)?;
                let x_a = tikhonov_l2_solve(&a, &y, alpha)?;
                worst_ratio = worst_ratio.max(t / alpha);
                if t > alpha * (1.0 + 1e-8) || x_a.norm() > x_adp.norm() * (1.0 + 1e-8) {
                    violations += 1;
                }
            }
            Ok(CheckOutcome::new(
                name,
                violations == 0,
                format!(
                    "{instances} instances, {violations} violations, max t/alpha {worst_ratio:.4}"
                ),
            ))
        })(),
    )
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let m = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (lx, ly) = (x.ln(), y.ln());
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    (m * sxy - sx * sy) / (m * sxx - sx * sx)
}

#[derive(Debug, Clone)]
pub struct RateSetup {
    pub n: usize,
    /// `alpha = c * delta`.
    pub c: f64,
    pub beta: f64,
    pub lr: f64,
    pub iters: usize,
    pub deltas: Vec<f64>,
    pub seed: u64,
}

impl Default for RateSetup {
    fn default() -> Self {
        Self {
            n: 64,
            c: 10.0,
            beta: 1.0,
            lr: 0.25,
            iters: 300,
            deltas: vec![1e-1, 1e-2, 1e-3, 1e-4],
            seed: 5,
        }
    }
}

/// ADP-beta on the integration operator with `x = A^* w` and `alpha = c
/// delta`: the Bregman distance to `x` should decay like `delta`.
pub fn convergence_rate(setup: &RateSetup) -> CheckOutcome {
    let name = "ADP-beta convergence rate";
    settle(
        name,
        (|| {
            let start = Instant::now();
            let n = setup.n;
            let a = make_integration_operator(n, GRID)?;
            let w = Signal64::from_fn(n, GRID, |t| (std::f64::consts::PI * t).sin() + 0.5 * t)?;
            let x_true = a.adjoint_apply(&w);
            let y_true = a.apply(&x_true);
            let mut rng = ChaCha8Rng::seed_from_u64(setup.seed);
            let e = gaussian_unit(&mut rng, n)?;
            let pen = Penalty64::squared_l2();
            let cfg = IftConfig {
                lr: setup.lr,
                outer_iters: setup.iters,
                ..IftConfig::default()
            };
            let mut points = Vec::new();
            for &delta in &setup.deltas {
                let y = y_true.axpy(delta, &e);
                let problem =
                    AdpProblem::new(a.clone(), y, pen, setup.c * delta)?.with_beta(setup.beta)?;
                let x = adp_ift_solve(&problem, &cfg)?.solution;
                // for the squared-l2 penalty the subgradient at x is x itself
                points.push((delta, bregman_distance(&pen, &x, &x_true, &x_true)?));
            }
            let slope = loglog_slope(&points);
            let secs = start.elapsed().as_secs_f64();
            let dists: Vec<String> = points.iter().map(|p| format!("{:.2e}", p.1)).collect();
            Ok(CheckOutcome::new(
                name,
                slope >= 0.9 && secs <= 60.0,
                format!(
                    "distances [{}], slope {slope:.3} (>= 0.9), {secs:.1} s (<= 60 s)",
                    dists.join(", ")
                ),
            ))
        })(),
    )
}

/// Distances of a perturbed solution sequence to the unperturbed one must
/// shrink monotonically, by at least half per tenfold smaller perturbation.
pub fn ratio_test(distances: &[f64]) -> (bool, f64) {
    let mut worst = 0.0f64;
    let mut ok = distances.iter().all(|d| d.is_finite());
    for pair in distances.windows(2) {
        let ratio = if pair[0] > 0.0 {
            pair[1] / pair[0]
        } else {
            f64::INFINITY
        };
        worst = worst.max(ratio);
        ok &= pair[1] < pair[0] && ratio <= 0.5;
    }
    (ok, worst)
}

pub const STABILITY_LEVELS: usize = 5;

fn levels(eps0: f64) -> Vec<f64> {
    (0..STABILITY_LEVELS)
        .map(|k| eps0 * 10f64.powi(-(k as i32)))
        .collect()
}

fn stability_case(
    name: &str,
    base: impl Fn() -> Result<Signal64>,
    perturbed: impl Fn(f64) -> Result<Signal64>,
    eps0: f64,
) -> CheckOutcome {
    settle(
        name,
        (|| {
            let x_hat = base()?;
            let dists = levels(eps0)
                .into_iter()
                .map(|eps| Ok(perturbed(eps)?.distance(&x_hat)))
                .collect::<Result<Vec<f64>>>()?;
            let (ok, worst) = ratio_test(&dists);
            let shown: Vec<String> = dists.iter().map(|d| format!("{d:.2e}")).collect();
            Ok(CheckOutcome::new(
                name,
                ok,
                format!(
                    "distances [{}], worst ratio {worst:.3} (<= 0.5)",
                    shown.join(", ")
                ),
            ))
        })(),
    )
}

/// Geometric perturbations of the data (and of the operator for `x(B)`)
/// for the Tikhonov, exact ADP and ADP-beta solution maps.
pub fn stability(seed: u64) -> Vec<CheckOutcome> {
    let setup = (|| -> Result<_> {
        let n = 32;
        let a = make_integration_operator(n, GRID)?;
        let x_true =
            Signal64::from_fn(n, GRID, |t| if (0.3..0.6).contains(&t) { 1.0 } else { 0.2 })?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = a.apply(&x_true).axpy(0.01, &gaussian_unit(&mut rng, n)?);
        let e = gaussian_unit(&mut rng, n)?.scaled(y.norm());
        let mut dir = Array2::zeros((n, n));
        dir.mapv_inplace(|_: f64| StandardNormal.sample(&mut rng));
        let fro = dir.mapv(|v| v * v).sum().sqrt();
        let dir = dir.mapv(|v| v / fro);
        Ok((a, y, e, dir))
    })();
    let (a, y, e, dir) = match setup {
        Ok(s) => s,
        Err(err) => return vec![CheckOutcome::errored("stability setup", err)],
    };
    let eps0 = 1e-2;
    let elastic = Penalty64::elastic_net(0.01, 1.0).expect("valid weights");
    let l2 = Penalty64::squared_l2();
    let alpha = 0.05;
    let ista = IstaConfig::default()
        .with_tol(1e-15)
        .with_max_iter(2_000_000);
    let data = |eps: f64| y.axpy(eps, &e);

    let tikhonov = |yk: &Signal64| -> Result<Signal64> {
        Ok(x_of_b(&a, yk, &elastic, alpha, &ista)?.solution)
    };
    let exact = |yk: &Signal64| -> Result<Signal64> {
        Ok(adp_exact_solve(&a, yk, &l2, alpha, 1e-13)?.solution)
    };
    let ift = IftConfig {
        lr: 0.25,
        outer_iters: 50,
        early_stop: EarlyStop::FixedIterations(50),
        ..IftConfig::default()
    };
    let adp_beta = |yk: &Signal64| -> Result<Signal64> {
        let problem = AdpProblem::new(a.clone(), yk.clone(), l2, 0.05)?.with_beta(1.0)?;
        Ok(adp_ift_solve(&problem, &ift)?.solution)
    };
    let x_of = |eps: f64| -> Result<Signal64> {
        let b = a.with_matrix(a.matrix() + &(&dir * eps))?;
        Ok(x_of_b(&b, &y, &elastic, alpha, &ista)?.solution)
    };

    vec![
        stability_case(
            "stability of x(A) in the data (elastic net)",
            || tikhonov(&y),
            |eps| tikhonov(&data(eps)),
            eps0,
        ),
        stability_case(
            "stability of exact ADP in the data",
            || exact(&y),
            |eps| exact(&data(eps)),
            eps0,
        ),
        stability_case(
            "stability of ADP-beta in the data",
            || adp_beta(&y),
            |eps| adp_beta(&data(eps)),
            eps0,
        ),
        stability_case(
            "continuity of x(B) in B (elastic net)",
            || x_of(0.0),
            x_of,
            eps0,
        ),
    ]
}

pub const LISTA_DEPTHS: [usize; 4] = [10, 50, 250, 1250];

/// Distances `|lista_forward(L) - x(B)|` for the given depths, with `B = A`.
pub fn lista_depth_distances(
    a: &LinearOp64,
    y: &Signal64,
    pen: &Penalty64,
    alpha: f64,
    seed: u64,
    depths: &[usize],
) -> Result<(Vec<f64>, f64)> {
    let cfg = IstaConfig::default()
        .with_tol(1e-14)
        .with_max_iter(5_000_000);
    let target = x_of_b(a, y, pen, alpha, &cfg)?.solution;
    let z = random_input(a, seed);
    let net = ListaNet::new(a.clone(), 1, None, *pen, alpha)?;
    let dists = depths
        .iter()
        .map(|&d| Ok(lista_forward(&net.with_depth(d)?, &z, y)?.distance(&target)))
        .collect::<Result<Vec<f64>>>()?;
    Ok((dists, target.norm()))
}

/// Distances below this multiple of `|x(B)|` are at the accuracy of the
/// reference solve and no longer ordered meaningfully.
pub const LISTA_FLOOR: f64 = 1e-12;

/// Strictly decreasing distances until both members of a pair reach the
/// round-off floor, the last one at most `1e-4 |x(B)|`.
pub fn lista_depth_verdict(name: &str, dists: &[f64], target_norm: f64) -> CheckOutcome {
    let floor = LISTA_FLOOR * target_norm;
    let at_floor = dists
        .windows(2)
        .filter(|p| p[0] <= floor && p[1] <= floor)
        .count();
    let decreasing = dists
        .windows(2)
        .all(|p| p[1] < p[0] || (p[0] <= floor && p[1] <= floor));
    let last = dists.last().copied().unwrap_or(f64::NAN);
    let rel = last / target_norm;
    let shown: Vec<String> = dists.iter().map(|d| format!("{d:.2e}")).collect();
    CheckOutcome::new(
        name,
        decreasing && rel <= 1e-4,
        format!(
            "distances [{}], final relative {rel:.2e} (<= 1e-4), {at_floor} pair(s) at the round-off floor",
            shown.join(", ")
        ),
    )
}

/// Non-convexity of the pairing sublevel set in a planar example.
pub fn pairing_nonconvexity() -> CheckOutcome {
    let demo = remark35_demo();
    CheckOutcome::new(
        "pairing sublevel set is not convex",
        demo.margin() > 0.0,
        format!(
            "R~({:?}) = {}, R~({:?}) = {}, R~(midpoint) = {} against level {}",
            demo.x_a, demo.pairing_a, demo.x_b, demo.pairing_b, demo.pairing_mid, demo.level
        ),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_a_power_law() {
        let pts: Vec<(f64, f64)> = [1e-1, 1e-2, 1e-3]
            .iter()
            .map(|&d| (d, 3.0 * d * d))
            .collect();
        assert!((loglog_slope(&pts) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn ratio_test_rejects_slow_or_rising_sequences() {
        assert!(ratio_test(&[1.0, 0.1, 0.01]).0);
        assert!(!ratio_test(&[1.0, 0.6, 0.3]).0);
        assert!(!ratio_test(&[1.0, 0.1, 0.2]).0);
        assert!(!ratio_test(&[1.0, f64::NAN]).0);
    }

    #[test]
    fn lista_verdict_tolerates_only_the_round_off_floor() {
        assert!(lista_depth_verdict("a", &[1e-1, 1e-3, 1e-6, 1e-9], 1.0).passed);
        assert!(lista_depth_verdict("b", &[1e-1, 1e-5, 5e-14, 7e-14], 1.0).passed);
        assert!(!lista_depth_verdict("c", &[1e-1, 1e-5, 1e-5, 1e-9], 1.0).passed);
        assert!(!lista_depth_verdict("d", &[1e-1, 1e-2, 1e-3, 1e-3], 1.0).passed);
    }

    #[test]
    fn quick_checks_pass() {
        for outcome in [
            equivalence(5, 1),
            round_trip(5, 2),
            ordering(5, 3),
            pairing_nonconvexity(),
        ] {
            assert!(outcome.passed, "{}", outcome.line());
        }
    }
}
