//! The experiments: figure 1, the method grid and the initial value study.

use std::time::Instant;

use adp_core::adp_iterative::{adp_ift_solve, adp_ift_solve_from, EarlyStop, IftConfig};
use adp_core::dip_lista::{dip_lista_inf_solve, dip_lista_solve, random_input, DipConfig};
use adp_core::variational::{adp_exact_solve_with, tikhonov_l2_solve, IstaConfig, IvanovConfig};
use adp_core::{AdpProblem, LinearOp64, Penalty64, Signal64, SolveReport64};
use anyhow::{ensure, Context, Result};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::config::{EarlyStopRule, Experiment, ExperimentConfig, Method};
use crate::metrics::{fmt_float, metrics, Metrics};
use crate::presets::{build_instance, parse_preset, Cell, Instance, OperatorKind};

pub const ADP_IVANOV: &str = "adp_ivanov";
pub const ADP_IFT: &str = "adp_ift";
pub const DIP_LISTA_INF: &str = "dip_lista_inf";
pub const ADP_START: &str = "adp_start";
pub const ADP_EARLY_STOPPED: &str = "adp_early_stopped";
pub const ADP_LIMIT: &str = "adp_limit";
pub const TIKHONOV_BEST: &str = "tikhonov_best";

pub fn dip_fixed_label(depth: usize) -> String {
    format!("dip_lista_l{depth}")
}

/// Final output of one method on one cell.
#[derive(Debug, Clone)]
pub struct MethodRun {
    pub method: String,
    /// Effective weights `alpha * alpha1`, `alpha * alpha2`.
    pub alpha1: f64,
    pub alpha2: f64,
    pub solution: Signal64,
    pub metrics: Metrics,
    pub iterations: usize,
    pub wall_ms: f64,
}

/// Per-iteration history of an iterative method.
#[derive(Debug, Clone)]
pub struct Trace {
    pub method: String,
    pub loss: Vec<f64>,
    pub residual: Vec<f64>,
    /// Reconstruction error per iterate, when iterates were kept.
    pub l2_error: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Failure {
    pub method: String,
    pub message: String,
}

/// One point of an a-posteriori parameter sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub alpha1: f64,
    pub alpha2: f64,
    pub l2_error: f64,
    pub psnr: f64,
    /// Multiplier of the Ivanov solve; NaN for other sweeps.
    pub multiplier: f64,
    pub selected: bool,
}

#[derive(Debug, Clone)]
pub struct CellRecord {
    pub instance: Instance,
    pub runs: Vec<MethodRun>,
    pub traces: Vec<Trace>,
    pub failures: Vec<Failure>,
    pub sweep: Vec<SweepRow>,
}

impl CellRecord {
    pub fn id(&self) -> String {
        self.instance.cell.id()
    }

    pub fn run(&self, method: &str) -> Option<&MethodRun> {
        self.runs.iter().find(|r| r.method == method)
    }

    fn new(instance: Instance) -> Self {
        Self {
            instance,
            runs: Vec::new(),
            traces: Vec::new(),
            failures: Vec::new(),
            sweep: Vec::new(),
        }
    }

    fn fail(&mut self, method: &str, err: anyhow::Error) {
        self.failures.push(Failure {
            method: method.into(),
            message: format!("{err:#}"),
        });
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceRow {
    pub cell: String,
    pub method_a: String,
    pub method_b: String,
    pub distance: f64,
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub experiment: Experiment,
    pub config: ExperimentConfig,
    pub cells: Vec<CellRecord>,
    pub distances: Vec<DistanceRow>,
    /// Derived scalar results as key / value pairs.
    pub summary: Vec<(String, String)>,
}

impl RunRecord {
    pub fn cell(&self, id: &str) -> Option<&CellRecord> {
        self.cells.iter().find(|c| c.id() == id)
    }

    pub fn distance(&self, cell: &str, a: &str, b: &str) -> Option<f64> {
        self.distances
            .iter()
            .find(|d| {
                d.cell == cell
                    && ((d.method_a == a && d.method_b == b)
                        || (d.method_a == b && d.method_b == a))
            })
            .map(|d| d.distance)
    }

    pub fn summary_value(&self, key: &str) -> Option<&str> {
        self.summary
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

/// Runs the experiment selected in the config.
pub fn run(cfg: &ExperimentConfig) -> Result<RunRecord> {
    cfg.validate()?;
    match cfg.experiment {
        Experiment::Figure1 => run_figure1(cfg),
        Experiment::Grid => run_method_grid(cfg),
        Experiment::Initvals => run_initial_value_study(cfg),
    }
}

fn inner_config(cfg: &ExperimentConfig) -> IstaConfig<f64> {
    IstaConfig::default()
        .with_tol(cfg.solvers.inner_tol)
        .with_max_iter(cfg.solvers.inner_max_iter)
}

fn ivanov_config(cfg: &ExperimentConfig) -> IvanovConfig<f64> {
    IvanovConfig {
        tol: cfg.solvers.ivanov_tol,
        inner: inner_config(cfg),
        ..IvanovConfig::default()
    }
}

fn ift_config(cfg: &ExperimentConfig, delta: f64) -> IftConfig<f64> {
    let early_stop = match cfg.solvers.early_stop {
        EarlyStopRule::None => EarlyStop::Never,
        EarlyStopRule::Discrepancy { tau } => EarlyStop::Discrepancy { tau, delta },
        EarlyStopRule::Fixed { iters } => EarlyStop::FixedIterations(iters),
    };
    IftConfig {
        lr: cfg.solvers.ift_lr,
        outer_iters: cfg.solvers.ift_iters,
        inner: inner_config(cfg).with_exact_smooth(true),
        beta: None,
        early_stop,
        record_iterates: false,
    }
}

fn timed<R>(f: impl FnOnce() -> R) -> (R, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64() * 1e3)
}

fn method_run(
    method: &str,
    inst: &Instance,
    weights: (f64, f64),
    report: &SolveReport64,
    wall_ms: f64,
) -> Result<MethodRun> {
    Ok(MethodRun {
        method: method.into(),
        alpha1: weights.0,
        alpha2: weights.1,
        solution: report.solution.clone(),
        metrics: metrics(&report.solution, &inst.truth)?,
        iterations: report.iterations,
        wall_ms,
    })
}

fn trace(method: &str, report: &SolveReport64) -> Trace {
    Trace {
        method: method.into(),
        loss: report.loss_trace.clone(),
        residual: report.residual_trace.clone(),
        l2_error: Vec::new(),
    }
}

/// Best elastic-net weights for a cell by ADP Ivanov error. Returns the
/// selected penalty with its Ivanov report and solve time; the whole grid
/// lands in the record's sweep.
fn select_weights(
    cfg: &ExperimentConfig,
    record: &mut CellRecord,
) -> Option<(Penalty64, SolveReport64, f64)> {
    let alpha = cfg.penalty.alpha;
    let ivanov = ivanov_config(cfg);
    let mut best: Option<(usize, Penalty64, SolveReport64, f64, f64)> = None;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let inst = &record.instance;
    for &a1 in &cfg.penalty.alpha1 {
        for &a2 in cfg.alpha2_grid(inst.cell.operator) {
            let attempt = (|| -> Result<(Penalty64, SolveReport64, f64, Metrics)> {
                let pen = Penalty64::elastic_net(a1, a2)?;
                let (report, ms) = timed(|| {
                    adp_exact_solve_with(&inst.operator, &inst.data, &pen, alpha, &ivanov)
                });
                let report = report?;
                let m = metrics(&report.solution, &inst.truth)?;
                Ok((pen, report, ms, m))
            })();
            let mut row = SweepRow {
                alpha1: alpha * a1,
                alpha2: alpha * a2,
                l2_error: f64::NAN,
                psnr: f64::NAN,
                multiplier: f64::NAN,
                selected: false,
            };
            match attempt {
                Ok((pen, report, ms, m)) => {
                    row.l2_error = m.l2_error;
                    row.psnr = m.psnr;
                    row.multiplier = report.multiplier.unwrap_or(f64::NAN);
                    if best.as_ref().is_none_or(|b| m.l2_error < b.4) {
                        best = Some((rows.len(), pen, report, ms, m.l2_error));
                    }
                }
                Err(err) => failures.push((format!("sweep({a1},{a2})"), err)),
            }
            rows.push(row);
        }
    }
    for (label, err) in failures {
        record.fail(&label, err);
    }
    if let Some((idx, ..)) = best {
        rows[idx].selected = true;
    }
    record.sweep = rows;
    best.map(|(_, pen, report, ms, _)| (pen, report, ms))
}

fn effective(cfg: &ExperimentConfig, pen: &Penalty64) -> (f64, f64) {
    let (a1, a2) = pen.weights();
    (cfg.penalty.alpha * a1, cfg.penalty.alpha * a2)
}

fn problem_for(cfg: &ExperimentConfig, inst: &Instance, pen: Penalty64) -> Result<AdpProblem<f64>> {
    Ok(AdpProblem::new(
        inst.operator.clone(),
        inst.data.clone(),
        pen,
        cfg.penalty.alpha,
    )?
    .with_beta(cfg.penalty.beta)?
    .with_delta(inst.delta)?)
}

fn grid_cell(cfg: &ExperimentConfig, inst: Instance) -> CellRecord {
    let mut record = CellRecord::new(inst);
    let Some((pen, ivanov_report, ivanov_ms)) = select_weights(cfg, &mut record) else {
        for m in &cfg.solvers.methods {
            record.fail(
                method_label(cfg, *m).as_str(),
                anyhow::anyhow!("no admissible penalty weights in the sweep"),
            );
        }
        return record;
    };
    let weights = effective(cfg, &pen);
    let problem = match problem_for(cfg, &record.instance, pen) {
        Ok(p) => p,
        Err(err) => {
            record.fail("problem", err);
            return record;
        }
    };
    let z0 = random_input(&record.instance.operator, record.instance.seeds.input);
    let a = record.instance.operator.clone();

    for &method in &cfg.solvers.methods {
        let label = method_label(cfg, method);
        let outcome = (|| -> Result<(SolveReport64, f64)> {
            Ok(match method {
                Method::AdpIvanov => (ivanov_report.clone(), ivanov_ms),
                Method::AdpIft => {
                    let (r, ms) =
                        timed(|| adp_ift_solve(&problem, &ift_config(cfg, record.instance.delta)));
                    (r?, ms)
                }
                Method::DipListaInf => {
                    let dip = DipConfig {
                        depth: cfg.solvers.block_depth,
                        lr: cfg.solvers.dip_lr,
                        iters: cfg.solvers.dip_iters,
                        ..DipConfig::default()
                    };
                    let (r, ms) = timed(|| dip_lista_inf_solve(&problem, &dip, &z0, &a));
                    (r?, ms)
                }
                Method::DipListaFixed => {
                    let dip = DipConfig {
                        depth: cfg.solvers.dip_depth,
                        lr: cfg.solvers.dip_lr,
                        iters: cfg.solvers.dip_iters,
                        ..DipConfig::default()
                    };
                    let (r, ms) = timed(|| dip_lista_solve(&problem, &dip, &z0, &a));
                    (r?, ms)
                }
            })
        })();
        match outcome.and_then(|(report, ms)| {
            let run = method_run(&label, &record.instance, weights, &report, ms)?;
            Ok((run, report))
        }) {
            Ok((run, report)) => {
                if method != Method::AdpIvanov {
                    record.traces.push(trace(&label, &report));
                }
                record.runs.push(run);
            }
            Err(err) => record.fail(&label, err),
        }
    }
    record
}

pub fn method_label(cfg: &ExperimentConfig, method: Method) -> String {
    match method {
        Method::AdpIvanov => ADP_IVANOV.into(),
        Method::AdpIft => ADP_IFT.into(),
        Method::DipListaInf => DIP_LISTA_INF.into(),
        Method::DipListaFixed => dip_fixed_label(cfg.solvers.dip_depth),
    }
}

fn pairwise_distances(cells: &[CellRecord]) -> Vec<DistanceRow> {
    let mut rows = Vec::new();
    for cell in cells {
        for (i, a) in cell.runs.iter().enumerate() {
            for b in &cell.runs[i + 1..] {
                rows.push(DistanceRow {
                    cell: cell.id(),
                    method_a: a.method.clone(),
                    method_b: b.method.clone(),
                    distance: a.solution.distance(&b.solution),
                });
            }
        }
    }
    rows
}

fn instances(cfg: &ExperimentConfig, cells: &[Cell]) -> Result<Vec<Instance>> {
    cells
        .iter()
        .map(|&c| build_instance(cfg, c).with_context(|| format!("building {}", c.id())))
        .collect()
}

/// ADP Ivanov, ADP IFT and both DIP LISTA variants on every cell of the
/// preset, with the same weights for all methods of a cell.
pub fn run_method_grid(cfg: &ExperimentConfig) -> Result<RunRecord> {
    let cells = parse_preset(&cfg.preset)?;
    let insts = instances(cfg, &cells)?;
    let records: Vec<CellRecord> = insts
        .into_par_iter()
        .map(|inst| grid_cell(cfg, inst))
        .collect();
    let distances = pairwise_distances(&records);
    let mut summary = Vec::new();
    for cell in &records {
        if let Some(sel) = cell.sweep.iter().find(|s| s.selected) {
            summary.push((format!("{}/alpha1", cell.id()), fmt_float(sel.alpha1)));
            summary.push((format!("{}/alpha2", cell.id()), fmt_float(sel.alpha2)));
        }
        summary.push((
            format!("{}/delta", cell.id()),
            fmt_float(cell.instance.delta),
        ));
    }
    Ok(RunRecord {
        experiment: Experiment::Grid,
        config: cfg.clone(),
        cells: records,
        distances,
        summary,
    })
}

fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let (l, h) = (lo.ln(), hi.ln());
    (0..points)
        .map(|i| (l + (h - l) * i as f64 / (points - 1) as f64).exp())
        .collect()
}

/// ADP gradient descent with squared-l2 penalty against Tikhonov: start
/// iterate, discrepancy-stopped iterate, exact limit and the best Tikhonov
/// reconstruction over a parameter grid.
pub fn run_figure1(cfg: &ExperimentConfig) -> Result<RunRecord> {
    let cells = parse_preset(&cfg.preset)?;
    ensure!(
        cells
            .iter()
            .all(|c| c.operator == OperatorKind::Integration),
        "figure1 needs an integration preset, got '{}'",
        cfg.preset
    );
    let inst = build_instance(cfg, cells[0])?;
    let f1 = &cfg.figure1;
    let a = &inst.operator;
    let y = &inst.data;
    let mut record = CellRecord::new(inst.clone());

    let mut best: Option<(f64, Signal64, Metrics)> = None;
    for t in log_grid(f1.tikhonov_min, f1.tikhonov_max, f1.tikhonov_points) {
        let x = tikhonov_l2_solve(a, y, t)?;
        let m = metrics(&x, &inst.truth)?;
        record.sweep.push(SweepRow {
            alpha1: 0.0,
            alpha2: t,
            l2_error: m.l2_error,
            psnr: m.psnr,
            multiplier: f64::NAN,
            selected: false,
        });
        if best.as_ref().is_none_or(|b| m.l2_error < b.2.l2_error) {
            best = Some((t, x, m));
        }
    }
    let (alpha_tik, x_tik, m_tik) = best.context("empty Tikhonov grid")?;
    for row in &mut record.sweep {
        row.selected = row.alpha2 == alpha_tik;
    }
    let alpha = match f1.alpha {
        Some(alpha) => alpha,
        None => y.norm_sq() / (4.0 * f1.kappa * x_tik.norm_sq()),
    };

    let pen = Penalty64::squared_l2();
    let problem = AdpProblem::new(a.clone(), y.clone(), pen, alpha)?.with_delta(inst.delta)?;
    let ift = IftConfig {
        lr: f1.lr,
        outer_iters: f1.iters,
        inner: inner_config(cfg).with_exact_smooth(true),
        record_iterates: true,
        ..IftConfig::default()
    };
    let (traj, ift_ms) = timed(|| adp_ift_solve(&problem, &ift));
    let traj = traj?;
    let errors = traj
        .iterates
        .iter()
        .map(|x| x.distance(&inst.truth))
        .collect::<Vec<_>>();
    let level = f1.tau * inst.delta;
    let stop = traj.residual_trace.iter().position(|&r| r <= level);
    let stop_k = stop.unwrap_or(traj.iterates.len() - 1);

    let (limit, limit_ms) = timed(|| adp_exact_solve_with(a, y, &pen, alpha, &ivanov_config(cfg)));
    let limit = limit?;

    let adp_weights = (0.0, alpha);
    let start = &traj.iterates[0];
    let early = &traj.iterates[stop_k];
    let rows = [
        (ADP_START, start.clone(), 0, 0.0, adp_weights),
        (
            ADP_EARLY_STOPPED,
            early.clone(),
            stop_k,
            ift_ms,
            adp_weights,
        ),
        (
            ADP_LIMIT,
            limit.solution.clone(),
            limit.iterations,
            limit_ms,
            adp_weights,
        ),
        (TIKHONOV_BEST, x_tik.clone(), 0, 0.0, (0.0, alpha_tik)),
    ];
    for (method, x, iterations, wall_ms, (w1, w2)) in rows {
        record.runs.push(MethodRun {
            method: method.into(),
            alpha1: w1,
            alpha2: w2,
            metrics: metrics(&x, &inst.truth)?,
            solution: x,
            iterations,
            wall_ms,
        });
    }
    record.traces.push(Trace {
        method: ADP_IFT.into(),
        loss: traj.loss_trace.clone(),
        residual: traj.residual_trace.clone(),
        l2_error: errors,
    });

    let err = |m: &str| {
        record
            .run(m)
            .map(|r| r.metrics.l2_error)
            .unwrap_or(f64::NAN)
    };
    let (e_start, e_early, e_limit) = (err(ADP_START), err(ADP_EARLY_STOPPED), err(ADP_LIMIT));
    let yes_no = |b: bool| if b { "yes" } else { "no" }.to_string();
    let summary = vec![
        ("alpha_adp".into(), fmt_float(alpha)),
        ("alpha_tikhonov_best".into(), fmt_float(alpha_tik)),
        ("delta".into(), fmt_float(inst.delta)),
        ("data_psnr".into(), fmt_float(inst.data_psnr)),
        ("discrepancy_level".into(), fmt_float(level)),
        (
            "stop_iteration".into(),
            stop.map(|k| k.to_string()).unwrap_or_else(|| "none".into()),
        ),
        ("early_le_start".into(), yes_no(e_early <= e_start)),
        ("early_le_limit".into(), yes_no(e_early <= e_limit)),
        (
            "early_le_tikhonov".into(),
            yes_no(e_early <= m_tik.l2_error),
        ),
        (
            "start_norm_le_limit_norm".into(),
            yes_no(start.norm() <= limit.solution.norm()),
        ),
        (
            "ift_final_distance_to_limit".into(),
            fmt_float(traj.solution.distance(&limit.solution)),
        ),
    ];
    Ok(RunRecord {
        experiment: Experiment::Figure1,
        config: cfg.clone(),
        cells: vec![record],
        distances: Vec::new(),
        summary,
    })
}

/// `A` plus Gaussian matrix noise of relative Frobenius size `scale`.
pub fn perturbed_operator(a: &LinearOp64, scale: f64, seed: u64) -> Result<LinearOp64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (m, n) = a.matrix().dim();
    let noise = Array2::from_shape_fn((m, n), |_| StandardNormal.sample(&mut rng));
    let a_norm = a.matrix().mapv(|v| v * v).sum().sqrt();
    let e_norm = noise.mapv(|v: f64| v * v).sum().sqrt();
    let matrix = a.matrix() + &(noise * (scale * a_norm / e_norm));
    Ok(a.with_matrix(matrix)?)
}

pub fn start_label(method: &str, start: usize) -> String {
    format!("{method}@b0_{start}")
}

fn initvals_cell(cfg: &ExperimentConfig, inst: Instance) -> CellRecord {
    let mut record = CellRecord::new(inst);
    let Some((pen, ivanov_report, ivanov_ms)) = select_weights(cfg, &mut record) else {
        record.fail(
            ADP_IVANOV,
            anyhow::anyhow!("no admissible penalty weights in the sweep"),
        );
        return record;
    };
    let weights = effective(cfg, &pen);
    match method_run(
        ADP_IVANOV,
        &record.instance,
        weights,
        &ivanov_report,
        ivanov_ms,
    ) {
        Ok(run) => record.runs.push(run),
        Err(err) => record.fail(ADP_IVANOV, err),
    }
    let problem = match problem_for(cfg, &record.instance, pen) {
        Ok(p) => p,
        Err(err) => {
            record.fail("problem", err);
            return record;
        }
    };
    let a = record.instance.operator.clone();
    let z0 = random_input(&a, record.instance.seeds.input);
    let mut starts = vec![a.clone()];
    for j in 0..cfg.initvals.perturbed_starts {
        let seed = record.instance.seeds.perturbation.wrapping_add(j as u64);
        match perturbed_operator(&a, cfg.initvals.perturbation, seed) {
            Ok(b0) => starts.push(b0),
            Err(err) => record.fail(&format!("b0_{}", j + 1), err),
        }
    }
    let dip = DipConfig {
        depth: cfg.solvers.block_depth,
        lr: cfg.solvers.dip_lr,
        iters: cfg.solvers.dip_iters,
        ..DipConfig::default()
    };
    let ift = ift_config(cfg, record.instance.delta);
    for (j, b0) in starts.iter().enumerate() {
        for method in [ADP_IFT, DIP_LISTA_INF] {
            let label = start_label(method, j);
            let (outcome, ms) = timed(|| {
                if method == ADP_IFT {
                    adp_ift_solve_from(&problem, &ift, b0)
                } else {
                    dip_lista_inf_solve(&problem, &dip, &z0, b0)
                }
            });
            let done = outcome.map_err(anyhow::Error::from).and_then(|report| {
                let run = method_run(&label, &record.instance, weights, &report, ms)?;
                Ok((run, report))
            });
            match done {
                Ok((run, report)) => {
                    record.traces.push(trace(&label, &report));
                    record.runs.push(run);
                }
                Err(err) => record.fail(&label, err),
            }
        }
    }
    record
}

/// ADP IFT and DIP LISTA L=inf from `B_0 = A` and from randomly perturbed
/// copies of `A`, next to ADP Ivanov which needs no start.
pub fn run_initial_value_study(cfg: &ExperimentConfig) -> Result<RunRecord> {
    let cells = parse_preset(&cfg.preset)?;
    ensure!(
        cells
            .iter()
            .all(|c| c.operator == OperatorKind::Convolution),
        "initvals needs a convolution preset, got '{}'",
        cfg.preset
    );
    let insts = instances(cfg, &cells)?;
    let records: Vec<CellRecord> = insts
        .into_par_iter()
        .map(|inst| initvals_cell(cfg, inst))
        .collect();
    let distances = pairwise_distances(&records);
    let mut summary = vec![("b0_0".to_string(), "A".to_string())];
    for j in 1..=cfg.initvals.perturbed_starts {
        summary.push((
            format!("b0_{j}"),
            format!(
                "A + gaussian perturbation, relative frobenius size {}",
                cfg.initvals.perturbation
            ),
        ));
    }
    Ok(RunRecord {
        experiment: Experiment::Initvals,
        config: cfg.clone(),
        cells: records,
        distances,
        summary,
    })
}
