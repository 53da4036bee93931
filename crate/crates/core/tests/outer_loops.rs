use adp_core::adp_iterative::{adp_ift_solve, adp_ift_solve_from, EarlyStop, IftConfig};
use adp_core::dip_lista::{
    dip_lista_inf_solve, dip_lista_solve, lista_loss_and_gradient, random_input, DipConfig,
    ListaNet,
};
use adp_core::operators::{make_convolution_operator, make_integration_operator};
use adp_core::variational::{
    adp_exact_solve, tikhonov_l2_solve, x_of_b_from, IstaConfig, Splitting,
};
use adp_core::{AdpProblem, LinearOp, Penalty, Signal};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GRID: (f64, f64) = (0.0, 1.0);

fn smooth_data(a: &LinearOp<f64>, noise: f64, seed: u64) -> Signal<f64> {
    let truth = Signal::from_fn(a.ncols(), GRID, |t: f64| (3.0 * t).sin() + t * t).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clean = a.apply(&truth);
    let samples = clean
        .samples()
        .mapv(|v| v + noise * rng.random_range(-1.0..1.0));
    clean.with_samples(samples).unwrap()
}

#[test]
fn lista_gradient_matches_directional_differences() {
    let n = 12;
    let a = make_convolution_operator(n, GRID, 0.1).unwrap();
    let y = smooth_data(&a, 0.05, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let b = a
        .with_matrix(a.matrix().mapv(|v| v + 0.05 * rng.random_range(-1.0..1.0)))
        .unwrap();
    let z = random_input(&a, 3);
    for (pen, alpha) in [
        (Penalty::squared_l2(), 0.05),
        (Penalty::elastic_net(0.01, 0.5).unwrap(), 0.1),
    ] {
        let net = ListaNet::new(b.clone(), 7, None, pen, alpha).unwrap();
        let (_, _, grad) = lista_loss_and_gradient(&net, &z, &y, &a).unwrap();
        for trial in 0..4 {
            let dir = Array2::from_shape_fn((n, n), |_| rng.random_range(-1.0..1.0));
            let eps = 1e-6;
            let shifted = |s: f64| {
                let m = net.b.matrix() + &(dir.mapv(|d| s * d));
                let moved = ListaNet {
                    b: net.b.with_matrix(m).unwrap(),
                    ..net.clone()
                };
                lista_loss_and_gradient(&moved, &z, &y, &a).unwrap().0
            };
            let fd = (shifted(eps) - shifted(-eps)) / (2.0 * eps);
            let analytic: f64 = (&grad * &dir).sum();
            let scale = analytic.abs().max(fd.abs()).max(1e-8);
            assert!(
                (fd - analytic).abs() <= 1e-5 * scale,
                "trial {trial}: directional derivative {fd} vs {analytic}"
            );
        }
    }
}

#[test]
fn frozen_unbounded_network_is_plain_ista() {
    let n = 16;
    let a = make_integration_operator(n, GRID).unwrap();
    let y = smooth_data(&a, 0.01, 4);
    let pen = Penalty::elastic_net(0.02, 0.3).unwrap();
    let alpha = 0.05;
    let problem = AdpProblem::new(a.clone(), y.clone(), pen, alpha).unwrap();
    let z0 = random_input(&a, 5);
    let cfg = DipConfig {
        depth: 10,
        lr: 0.0,
        iters: 30,
        ..DipConfig::default()
    };
    let report = dip_lista_inf_solve(&problem, &cfg, &z0, &a).unwrap();
    let step = ListaNet::new(a.clone(), 10, None, pen, alpha).unwrap().step;
    let ista_cfg = IstaConfig::default()
        .with_step(step)
        .with_splitting(Splitting::GradientL2)
        .with_tol(1e-300)
        .with_max_iter((cfg.iters + 1) * cfg.depth);
    let ista = x_of_b_from(&a, &y, &pen, alpha, &ista_cfg, &z0).unwrap();
    assert_eq!(ista.iterations, (cfg.iters + 1) * cfg.depth);
    let gap = report.solution.distance(&ista.solution);
    assert!(gap <= 1e-12 * ista.solution.norm(), "gap {gap}");
    assert_eq!(report.operator.unwrap().matrix(), a.matrix());
}

#[test]
fn fixed_depth_training_lowers_the_data_misfit() {
    let n = 24;
    let a = make_convolution_operator(n, GRID, 0.05).unwrap();
    let y = smooth_data(&a, 0.02, 6);
    let problem =
        AdpProblem::new(a.clone(), y, Penalty::elastic_net(0.001, 0.2).unwrap(), 0.2).unwrap();
    let z0 = random_input(&a, 7);
    let cfg = DipConfig {
        depth: 10,
        lr: 0.5,
        iters: 100,
        ..DipConfig::default()
    };
    let report = dip_lista_solve(&problem, &cfg, &z0, &a).unwrap();
    assert_eq!(report.loss_trace.len(), cfg.iters + 1);
    assert!(report.loss_trace.last().unwrap() < &report.loss_trace[0]);
}

#[test]
fn heavy_proximity_weight_keeps_the_operator_near_a() {
    let n = 20;
    let a = make_integration_operator(n, GRID).unwrap();
    let y = smooth_data(&a, 0.01, 8);
    let pen = Penalty::squared_l2();
    let alpha = 0.05;
    let problem = AdpProblem::new(a.clone(), y.clone(), pen, alpha).unwrap();
    let run = |beta: f64| {
        let cfg = IftConfig {
            lr: 0.01,
            outer_iters: 200,
            beta: Some(beta),
            ..IftConfig::default()
        };
        adp_ift_solve(&problem, &cfg).unwrap()
    };
    let x_a = tikhonov_l2_solve(&a, &y, alpha).unwrap();
    let free = run(0.0);
    let tied = run(20.0);
    let moved_free = free.operator.as_ref().unwrap().frobenius_distance(&a);
    let moved_tied = tied.operator.as_ref().unwrap().frobenius_distance(&a);
    assert!(
        moved_tied < 0.2 * moved_free,
        "{moved_tied} vs {moved_free}"
    );
    assert!(tied.solution.distance(&x_a) < free.solution.distance(&x_a));
    for pair in tied.loss_trace.windows(2) {
        assert!(pair[1] <= pair[0] * (1.0 + 1e-12));
    }
}

#[test]
fn discrepancy_rule_stops_at_first_admissible_iterate() {
    let n = 32;
    let a = make_integration_operator(n, GRID).unwrap();
    let truth = Signal::from_fn(n, GRID, |t: f64| if t < 0.5 { 1.0 } else { 0.2 }).unwrap();
    let clean = a.apply(&truth);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let noisy = clean
        .with_samples(
            clean
                .samples()
                .mapv(|v| v + 0.01 * rng.random_range(-1.0..1.0)),
        )
        .unwrap();
    let delta = noisy.distance(&clean);
    let pen = Penalty::squared_l2();
    let x_exact = adp_exact_solve(&a, &noisy, &pen, 0.02, 1e-10)
        .unwrap()
        .solution;
    let residual = a.apply(&x_exact).distance(&noisy);
    let tau = 1.5;
    assert!(
        residual < tau * delta,
        "limit must satisfy the discrepancy rule"
    );

    let problem = AdpProblem::new(a.clone(), noisy, pen, 0.02).unwrap();
    let never = IftConfig {
        lr: 1.0,
        outer_iters: 400,
        ..IftConfig::default()
    };
    let full = adp_ift_solve(&problem, &never).unwrap();
    let first = full
        .residual_trace
        .iter()
        .position(|&r| r <= tau * delta)
        .expect("trajectory should reach the discrepancy level");
    assert!(first > 0);

    let stopped = adp_ift_solve(
        &problem,
        &IftConfig {
            early_stop: EarlyStop::Discrepancy { tau, delta },
            ..never
        },
    )
    .unwrap();
    assert_eq!(stopped.iterations, first);
    assert_eq!(stopped.residual_trace.len(), first + 1);

    let fixed = adp_ift_solve_from(
        &problem,
        &IftConfig {
            early_stop: EarlyStop::FixedIterations(first),
            ..never
        },
        &a,
    )
    .unwrap();
    assert_eq!(fixed.solution, stopped.solution);
}

#[test]
fn single_precision_pipeline_runs() {
    let n = 16;
    let a = make_integration_operator::<f32>(n, (0.0, 1.0)).unwrap();
    let truth = Signal::from_fn(n, (0.0f32, 1.0), |t| t * (1.0 - t)).unwrap();
    let y = a.apply(&truth);
    let pen = Penalty::<f32>::squared_l2();
    let exact = adp_exact_solve(&a, &y, &pen, 0.1, 1e-4).unwrap();
    let problem = AdpProblem::new(a, y, pen, 0.1f32).unwrap();
    let cfg = IftConfig {
        lr: 0.5f32,
        outer_iters: 20,
        ..IftConfig::default()
    };
    let report = adp_ift_solve(&problem, &cfg).unwrap();
    assert!(report.solution.samples().iter().all(|v| v.is_finite()));
    assert!(exact.solution.norm() > 0.0);
}
