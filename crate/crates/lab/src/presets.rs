//! Ground truths, forward operators, noisy data and the preset cells.

use std::f64::consts::PI;

use adp_core::operators::{make_convolution_operator, make_integration_operator};
use adp_core::{LinearOp64, Signal64};
use anyhow::{bail, ensure, Result};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    Integration,
    Convolution,
}

impl OperatorKind {
    pub const ALL: [OperatorKind; 2] = [OperatorKind::Integration, OperatorKind::Convolution];

    pub fn name(self) -> &'static str {
        match self {
            OperatorKind::Integration => "integration",
            OperatorKind::Convolution => "convolution",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Truth {
    /// Piecewise constant: 0, then 1 on `[0.3, 0.6)`, then 0.5.
    Step,
    /// Tent of height 1 on `[0.25, 0.75]`.
    Hat,
    /// `sin(2 pi t) + sin(6 pi t) / 2`.
    Sines,
}

impl Truth {
    pub const ALL: [Truth; 3] = [Truth::Step, Truth::Hat, Truth::Sines];

    pub fn name(self) -> &'static str {
        match self {
            Truth::Step => "step",
            Truth::Hat => "hat",
            Truth::Sines => "sines",
        }
    }

    /// Value at relative position `s` in the unit interval.
    pub fn eval(self, s: f64) -> f64 {
        match self {
            Truth::Step => {
                if s < 0.3 {
                    0.0
                } else if s < 0.6 {
                    1.0
                } else {
                    0.5
                }
            }
            Truth::Hat => (1.0 - (s - 0.5).abs() / 0.25).max(0.0),
            Truth::Sines => (2.0 * PI * s).sin() + 0.5 * (6.0 * PI * s).sin(),
        }
    }

    pub fn sample(self, n: usize, interval: (f64, f64)) -> Result<Signal64> {
        let (a, b) = interval;
        Ok(Signal64::from_fn(n, interval, |t| {
            self.eval((t - a) / (b - a))
        })?)
    }
}

/// The three ground truths on the midpoint grid, in the order step, hat, sines.
pub fn make_ground_truths(n: usize, interval: (f64, f64)) -> Result<[Signal64; 3]> {
    Ok([
        Truth::Step.sample(n, interval)?,
        Truth::Hat.sample(n, interval)?,
        Truth::Sines.sample(n, interval)?,
    ])
}

/// One operator / ground truth combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub operator: OperatorKind,
    pub truth: Truth,
}

impl Cell {
    pub fn all() -> Vec<Cell> {
        OperatorKind::ALL
            .iter()
            .flat_map(|&operator| {
                Truth::ALL
                    .iter()
                    .map(move |&truth| Cell { operator, truth })
            })
            .collect()
    }

    pub fn id(&self) -> String {
        format!("{}-{}", self.operator.name(), self.truth.name())
    }

    /// Position in [`Cell::all`]; seeds derive from it, so a cell gets the
    /// same data whichever preset selects it.
    pub fn index(&self) -> usize {
        Cell::all().iter().position(|c| c == self).unwrap_or(0)
    }
}

/// Resolves a preset id to its cells.
pub fn parse_preset(id: &str) -> Result<Vec<Cell>> {
    if id == "all" {
        return Ok(Cell::all());
    }
    if let Some(op) = OperatorKind::ALL.iter().find(|op| op.name() == id) {
        return Ok(Truth::ALL
            .iter()
            .map(|&truth| Cell {
                operator: *op,
                truth,
            })
            .collect());
    }
    match Cell::all().into_iter().find(|c| c.id() == id) {
        Some(cell) => Ok(vec![cell]),
        None => bail!(
            "unknown preset '{id}'; expected all, integration, convolution or <operator>-<truth>"
        ),
    }
}

pub fn build_operator(cfg: &ExperimentConfig, kind: OperatorKind) -> Result<LinearOp64> {
    let n = cfg.problem.n;
    let interval = cfg.interval();
    Ok(match kind {
        OperatorKind::Integration => make_integration_operator(n, interval)?,
        OperatorKind::Convolution => make_convolution_operator(n, interval, cfg.problem.sigma)?,
    })
}

/// Independent streams of randomness for one cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellSeeds {
    pub noise: u64,
    pub input: u64,
    pub perturbation: u64,
}

pub fn cell_seeds(master: u64, index: usize) -> CellSeeds {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index as u64);
    CellSeeds {
        noise: rng.next_u64(),
        input: rng.next_u64(),
        perturbation: rng.next_u64(),
    }
}

/// `20 log10(peak / rmse)` with the rmse taken over samples.
pub fn psnr_of(peak: f64, residual: &[f64]) -> f64 {
    let mse = residual.iter().map(|r| r * r).sum::<f64>() / residual.len() as f64;
    if mse == 0.0 {
        return f64::INFINITY;
    }
    20.0 * (peak / mse.sqrt()).log10()
}

/// Adds Gaussian noise scaled so that the data PSNR (peak `max|y|`) is
/// exactly `target_psnr`. Returns the noisy data and `delta = |noise|`.
pub fn add_noise(y: &Signal64, target_psnr: f64, seed: u64) -> Result<(Signal64, f64)> {
    ensure!(!y.is_zero(), "noise level is undefined for zero data");
    ensure!(
        target_psnr > 0.0 && target_psnr.is_finite(),
        "target PSNR must be positive, got {target_psnr}"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise: Vec<f64> = (0..y.len())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let rms = (noise.iter().map(|e| e * e).sum::<f64>() / noise.len() as f64).sqrt();
    let target_rms = y.max_abs() / 10f64.powf(target_psnr / 20.0);
    for e in &mut noise {
        *e *= target_rms / rms;
    }
    let noise = Signal64::from_vec(noise, y.interval())?;
    let noisy = y.try_add(&noise)?;
    Ok((noisy, noise.norm()))
}

/// Everything a method needs for one cell.
#[derive(Debug, Clone)]
pub struct Instance {
    pub cell: Cell,
    pub operator: LinearOp64,
    pub truth: Signal64,
    pub clean: Signal64,
    pub data: Signal64,
    pub delta: f64,
    pub data_psnr: f64,
    pub seeds: CellSeeds,
}

pub fn build_instance(cfg: &ExperimentConfig, cell: Cell) -> Result<Instance> {
    let operator = build_operator(cfg, cell.operator)?;
    let truth = cell.truth.sample(cfg.problem.n, cfg.interval())?;
    let clean = operator.try_apply(&truth)?;
    let seeds = cell_seeds(cfg.seed, cell.index());
    let (data, delta) = add_noise(&clean, cfg.psnr(cell.operator), seeds.noise)?;
    let residual = data.try_sub(&clean)?;
    let data_psnr = psnr_of(
        clean.max_abs(),
        residual.samples().as_slice().unwrap_or(&[]),
    );
    Ok(Instance {
        cell,
        operator,
        truth,
        clean,
        data,
        delta,
        data_psnr,
        seeds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truths_are_nonzero_and_step_has_three_levels() {
        let truths = make_ground_truths(128, (0.0, 1.0)).unwrap();
        for t in &truths {
            assert!(t.norm() > 0.0);
        }
        let mut levels: Vec<f64> = truths[0].samples().to_vec();
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        assert_eq!(levels, vec![0.0, 0.5, 1.0]);
        assert_eq!(truths, make_ground_truths(128, (0.0, 1.0)).unwrap());
    }

    #[test]
    fn presets_resolve() {
        assert_eq!(parse_preset("all").unwrap().len(), 6);
        assert_eq!(parse_preset("convolution").unwrap().len(), 3);
        let one = parse_preset("integration-hat").unwrap();
        assert_eq!(one[0].id(), "integration-hat");
        assert_eq!(one[0].index(), 1);
        assert!(parse_preset("hat").is_err());
    }

    #[test]
    fn noise_hits_the_target_psnr() {
        let cfg = ExperimentConfig::default();
        for (kind, target) in [
            (OperatorKind::Integration, 40.0),
            (OperatorKind::Convolution, 45.0),
        ] {
            let a = build_operator(&cfg, kind).unwrap();
            let y = a.apply(&Truth::Step.sample(128, (0.0, 1.0)).unwrap());
            let (noisy, delta) = add_noise(&y, target, 3).unwrap();
            let r = noisy.try_sub(&y).unwrap();
            let psnr = psnr_of(y.max_abs(), r.samples().as_slice().unwrap());
            assert!((psnr - target).abs() < 0.1, "{psnr}");
            assert!((delta - r.norm()).abs() < 1e-15);
            assert_eq!(add_noise(&y, target, 3).unwrap().0, noisy);
        }
        let zero = Signal64::zeros(8, (0.0, 1.0)).unwrap();
        assert!(add_noise(&zero, 40.0, 1).is_err());
    }

    #[test]
    fn cell_seeds_differ_between_cells() {
        let a = cell_seeds(7, 0);
        let b = cell_seeds(7, 1);
        assert_ne!(a, b);
        assert_eq!(a, cell_seeds(7, 0));
        assert_ne!(a.noise, a.input);
    }
}
