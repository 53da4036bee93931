use adp_core::adp_iterative::bregman_distance;
use adp_core::lemma_lab::{construct_b, equivalent_tikhonov_parameter, verify_minimizer_with};
use adp_core::variational::{
    adp_exact_solve, inner_objective, ivanov_solve_with, tikhonov_l2_solve, x_of_b, IstaConfig,
    IvanovConfig,
};
use adp_core::{LinearOp, Penalty, Signal};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GRID: (f64, f64) = (0.0, 1.0);

fn op_from_seed(seed: u64, m: usize, n: usize) -> LinearOp<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    LinearOp::from_matrix(
        Array2::from_shape_fn((m, n), |_| rng.random_range(-1.0..1.0) * n as f64),
        GRID,
        GRID,
    )
    .unwrap()
}

fn signal(values: Vec<f64>) -> Signal<f64> {
    Signal::from_vec(values, GRID).unwrap()
}

fn elastic_net() -> impl Strategy<Value = Penalty<f64>> {
    (0.0..1.0f64, 0.05..1.0f64).prop_map(|(a1, a2)| Penalty::elastic_net(a1, a2).unwrap())
}

fn sparse_values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(
        prop_oneof![Just(0.0), -2.0..2.0f64, Just(0.0), 0.1..1.0f64],
        n,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn prox_output_satisfies_optimality(
        z in prop::collection::vec(-3.0..3.0f64, 2..20),
        pen in elastic_net(),
        step in 0.01..5.0f64,
    ) {
        let z = signal(z);
        let p = pen.prox(&z, step);
        let w = z.axpy(-1.0, &p).scaled(1.0 / step);
        prop_assert!(pen.subdifferential_distance(&p, &w) < 1e-9);
    }

    #[test]
    fn ista_objective_never_increases(
        seed in any::<u64>(),
        n in 2usize..12,
        y in prop::collection::vec(-1.0..1.0f64, 12),
        pen in elastic_net(),
        alpha in 1e-3..1.0f64,
    ) {
        let b = op_from_seed(seed, n, n);
        let y = signal(y[..n].to_vec());
        let cfg = IstaConfig::default().with_tol(1e-12).with_max_iter(500);
        let report = x_of_b(&b, &y, &pen, alpha, &cfg).unwrap();
        for pair in report.loss_trace.windows(2) {
            prop_assert!(pair[1] <= pair[0] + 1e-12 * pair[0].abs().max(1.0));
        }
        let last = *report.loss_trace.last().unwrap();
        let direct = inner_objective(&b, &y, &pen, alpha, &report.solution);
        prop_assert!((last - direct).abs() <= 1e-12 * direct.abs().max(1.0));
    }

    #[test]
    fn ivanov_solution_respects_the_constraint(
        seed in any::<u64>(),
        n in 2usize..10,
        y in prop::collection::vec(-1.0..1.0f64, 10),
        pen in elastic_net(),
        shrink in 0.01..0.9f64,
    ) {
        let a = op_from_seed(seed, n, n);
        let y = signal(y[..n].to_vec());
        prop_assume!(!y.is_zero());
        let ls = tikhonov_l2_solve(&a, &y, 1e-12).unwrap();
        let r = shrink * pen.pairing(&ls);
        prop_assume!(r > 1e-8);
        let cfg = IvanovConfig { tol: 1e-8, ..IvanovConfig::default() };
        let report = ivanov_solve_with(&a, &y, &pen, r, &cfg).unwrap();
        let used = pen.pairing(&report.solution);
        prop_assert!(used <= r * (1.0 + 1e-8), "pairing {} above radius {}", used, r);
        prop_assert!(used >= r * (1.0 - 1e-6), "constraint should be active: {} < {}", used, r);
    }

    #[test]
    fn constructed_operator_reproduces_the_target(
        xhat in sparse_values(8),
        y in prop::collection::vec(-1.0..1.0f64, 8),
        pen in elastic_net(),
        alpha in 1e-2..1.0f64,
        slack in 1.05..20.0f64,
    ) {
        let xhat = signal(xhat);
        let mut y = signal(y);
        prop_assume!(!y.is_zero());
        let need = 4.0 * alpha * pen.pairing(&xhat);
        if y.norm_sq() < slack * need {
            y = y.scaled((slack * need / y.norm_sq()).sqrt());
        }
        let v = pen.min_subgradient(&xhat);
        let b = construct_b(&xhat, &v, &y, &pen, alpha).unwrap().materialize();
        let cfg = IstaConfig::default().with_tol(1e-13).with_max_iter(400_000);
        let check = verify_minimizer_with(&b, &xhat, &y, &pen, alpha, &cfg).unwrap();
        prop_assert!(check.residual <= 1e-9, "residual {}", check.residual);
    }

    #[test]
    fn bregman_distance_is_nonnegative(
        x in sparse_values(10),
        x_tilde in prop::collection::vec(-2.0..2.0f64, 10),
        pen in elastic_net(),
    ) {
        let x = signal(x);
        let x_tilde = signal(x_tilde);
        let v = pen.min_subgradient(&x);
        let d = bregman_distance(&pen, &x_tilde, &x, &v).unwrap();
        prop_assert!(d >= -1e-12);
        prop_assert!(bregman_distance(&pen, &x, &x, &v).unwrap().abs() < 1e-12);
    }

    #[test]
    fn adp_parameter_dominates_the_equivalent_tikhonov_parameter(
        seed in any::<u64>(),
        n in 2usize..12,
        y in prop::collection::vec(-1.0..1.0f64, 12),
        log_alpha in -2.0..2.0f64,
    ) {
        let a = op_from_seed(seed, n, n);
        let y = signal(y[..n].to_vec());
        prop_assume!(y.norm() > 1e-3);
        let alpha = 10f64.powf(log_alpha);
        let pen = Penalty::squared_l2();
        let x_adp = adp_exact_solve(&a, &y, &pen, alpha, 1e-10).unwrap().solution;
        let t = equivalent_tikhonov_parameter(&a, &y, &x_adp).unwrap();
        prop_assert!(t <= alpha * (1.0 + 1e-8), "equivalent {} exceeds alpha {}", t, alpha);
        let x_a = tikhonov_l2_solve(&a, &y, alpha).unwrap();
        prop_assert!(x_a.norm() <= x_adp.norm() * (1.0 + 1e-8));
    }
}
