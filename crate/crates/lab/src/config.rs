//! Experiment configuration, read from TOML.
//!
//! Every field has a default, so a config file only needs the keys it
//! changes. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use crate::presets::{parse_preset, OperatorKind};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Figure1,
    Grid,
    Initvals,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Figure1 => "figure1",
            Experiment::Grid => "grid",
            Experiment::Initvals => "initvals",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    AdpIvanov,
    AdpIft,
    DipListaInf,
    DipListaFixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EarlyStopRule {
    None,
    /// Stop once `|A x - y| <= tau * delta`.
    Discrepancy {
        tau: f64,
    },
    Fixed {
        iters: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub experiment: Experiment,
    /// `all`, `integration`, `convolution` or `<operator>-<truth>`.
    pub preset: String,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    /// Write measured wall times; off by default so outputs are reproducible.
    pub record_timing: bool,
    pub problem: ProblemConfig,
    pub penalty: PenaltyConfig,
    pub solvers: SolverConfig,
    pub figure1: Figure1Config,
    pub initvals: InitvalsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub n: usize,
    pub interval: [f64; 2],
    /// Gaussian kernel width of the convolution operator.
    pub sigma: f64,
    pub psnr_integration: f64,
    pub psnr_convolution: f64,
}

/// Penalty `alpha (alpha1 |x|_1 + alpha2 |x|^2 / 2)`. The weights
/// `(alpha1, alpha2)` are chosen per cell from the grid below by the
/// smallest ADP Ivanov error; one-element lists fix them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenaltyConfig {
    pub alpha: f64,
    pub beta: f64,
    pub alpha1: Vec<f64>,
    pub alpha2_integration: Vec<f64>,
    pub alpha2_convolution: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub methods: Vec<Method>,
    pub ivanov_tol: f64,
    pub inner_tol: f64,
    pub inner_max_iter: usize,
    pub ift_lr: f64,
    pub ift_iters: usize,
    pub early_stop: EarlyStopRule,
    pub dip_lr: f64,
    pub dip_iters: usize,
    /// Depth of the fixed-depth network.
    pub dip_depth: usize,
    /// Layers per step of the unbounded network.
    pub block_depth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Figure1Config {
    /// ADP weight; when unset it is `|y|^2 / (4 kappa |x_tik|^2)` with
    /// `x_tik` the best Tikhonov reconstruction.
    pub alpha: Option<f64>,
    pub kappa: f64,
    pub lr: f64,
    pub iters: usize,
    pub tau: f64,
    pub tikhonov_min: f64,
    pub tikhonov_max: f64,
    pub tikhonov_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitvalsConfig {
    /// Relative Frobenius size of the random perturbation of `A`.
    pub perturbation: f64,
    pub perturbed_starts: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            experiment: Experiment::Grid,
            preset: "all".into(),
            seed: 7,
            out_dir: None,
            record_timing: false,
            problem: ProblemConfig::default(),
            penalty: PenaltyConfig::default(),
            solvers: SolverConfig::default(),
            figure1: Figure1Config::default(),
            initvals: InitvalsConfig::default(),
        }
    }
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            n: 128,
            interval: [0.0, 1.0],
            sigma: 0.03,
            psnr_integration: 40.0,
            psnr_convolution: 45.0,
        }
    }
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.0,
            alpha1: vec![0.0, 0.001, 0.003, 0.01, 0.03],
            alpha2_integration: vec![0.0125, 0.025, 0.05, 0.1, 0.2],
            alpha2_convolution: vec![0.06, 0.12, 0.25, 0.5, 1.0],
        }
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            methods: vec![
                Method::AdpIvanov,
                Method::AdpIft,
                Method::DipListaInf,
                Method::DipListaFixed,
            ],
            ivanov_tol: 1e-8,
            inner_tol: 1e-10,
            inner_max_iter: 200_000,
            ift_lr: 1.0,
            ift_iters: 2000,
            early_stop: EarlyStopRule::None,
            dip_lr: 1.0,
            dip_iters: 2000,
            dip_depth: 10,
            block_depth: 10,
        }
    }
}

impl Default for Figure1Config {
    fn default() -> Self {
        Self {
            alpha: None,
            kappa: 2.0,
            lr: 1.0,
            iters: 300,
            tau: 1.1,
            tikhonov_min: 1e-6,
            tikhonov_max: 1.0,
            tikhonov_points: 61,
        }
    }
}

impl Default for InitvalsConfig {
    fn default() -> Self {
        Self {
            perturbation: 0.1,
            perturbed_starts: 2,
        }
    }
}

impl ExperimentConfig {
    pub fn for_experiment(experiment: Experiment) -> Self {
        let preset = match experiment {
            Experiment::Figure1 => "integration-step",
            Experiment::Grid => "all",
            Experiment::Initvals => "convolution",
        };
        Self {
            experiment,
            preset: preset.into(),
            ..Self::default()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).context("parsing experiment config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml_str(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.problem.interval[0], self.problem.interval[1])
    }

    pub fn psnr(&self, op: OperatorKind) -> f64 {
        match op {
            OperatorKind::Integration => self.problem.psnr_integration,
            OperatorKind::Convolution => self.problem.psnr_convolution,
        }
    }

    pub fn alpha2_grid(&self, op: OperatorKind) -> &[f64] {
        match op {
            OperatorKind::Integration => &self.penalty.alpha2_integration,
            OperatorKind::Convolution => &self.penalty.alpha2_convolution,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            bail!(
                "unsupported schema_version {}, expected {SCHEMA_VERSION}",
                self.schema_version
            );
        }
        parse_preset(&self.preset)?;
        let p = &self.problem;
        ensure!(p.n >= 2, "problem.n must be at least 2");
        ensure!(
            p.interval[0].is_finite() && p.interval[1].is_finite() && p.interval[1] > p.interval[0],
            "problem.interval must be an increasing pair"
        );
        ensure!(
            p.sigma > 0.0 && p.sigma.is_finite(),
            "problem.sigma must be positive"
        );
        for (name, v) in [
            ("psnr_integration", p.psnr_integration),
            ("psnr_convolution", p.psnr_convolution),
        ] {
            ensure!(v > 0.0 && v.is_finite(), "problem.{name} must be positive");
        }

        let pen = &self.penalty;
        ensure!(
            pen.alpha > 0.0 && pen.alpha.is_finite(),
            "penalty.alpha must be positive"
        );
        ensure!(
            pen.beta >= 0.0 && pen.beta.is_finite(),
            "penalty.beta must be >= 0"
        );
        for (name, grid) in [
            ("alpha1", &pen.alpha1),
            ("alpha2_integration", &pen.alpha2_integration),
            ("alpha2_convolution", &pen.alpha2_convolution),
        ] {
            ensure!(!grid.is_empty(), "penalty.{name} must not be empty");
            ensure!(
                grid.iter().all(|v| *v >= 0.0 && v.is_finite()),
                "penalty.{name} entries must be finite and >= 0"
            );
        }
        for (name, grid) in [
            ("alpha2_integration", &pen.alpha2_integration),
            ("alpha2_convolution", &pen.alpha2_convolution),
        ] {
            ensure!(
                grid.iter().all(|v| *v > 0.0),
                "penalty.{name} entries must be positive"
            );
        }

        let s = &self.solvers;
        ensure!(!s.methods.is_empty(), "solvers.methods must not be empty");
        ensure!(s.ivanov_tol > 0.0, "solvers.ivanov_tol must be positive");
        ensure!(s.inner_tol > 0.0, "solvers.inner_tol must be positive");
        ensure!(
            s.inner_max_iter > 0,
            "solvers.inner_max_iter must be positive"
        );
        ensure!(
            s.ift_lr > 0.0 && s.ift_lr.is_finite(),
            "solvers.ift_lr must be positive"
        );
        ensure!(
            s.dip_lr >= 0.0 && s.dip_lr.is_finite(),
            "solvers.dip_lr must be >= 0"
        );
        ensure!(s.dip_depth > 0, "solvers.dip_depth must be positive");
        ensure!(s.block_depth > 0, "solvers.block_depth must be positive");
        if let EarlyStopRule::Discrepancy { tau } = s.early_stop {
            ensure!(tau > 1.0, "solvers.early_stop tau must exceed 1");
        }

        let f = &self.figure1;
        if let Some(alpha) = f.alpha {
            ensure!(
                alpha > 0.0 && alpha.is_finite(),
                "figure1.alpha must be positive"
            );
        }
        ensure!(f.kappa > 0.0, "figure1.kappa must be positive");
        ensure!(f.lr > 0.0, "figure1.lr must be positive");
        ensure!(f.tau > 1.0, "figure1.tau must exceed 1");
        ensure!(
            f.tikhonov_min > 0.0 && f.tikhonov_max > f.tikhonov_min && f.tikhonov_points >= 2,
            "figure1 Tikhonov grid needs 0 < min < max and at least 2 points"
        );

        let iv = &self.initvals;
        ensure!(
            iv.perturbation > 0.0 && iv.perturbation.is_finite(),
            "initvals.perturbation must be positive"
        );
        ensure!(
            iv.perturbed_starts >= 1,
            "initvals.perturbed_starts must be at least 1"
        );
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = ExperimentConfig::for_experiment(Experiment::Initvals);
        cfg.solvers.early_stop = EarlyStopRule::Discrepancy { tau: 1.2 };
        cfg.figure1.alpha = Some(3.0);
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            "schema_version = 2",
            "preset = \"integration-circle\"",
            "[problem]\npsnr_integration = 0.0",
            "[penalty]\nalpha1 = []",
            "[solvers]\nmethods = [\"adp_magic\"]",
            "[solvers]\nearly_stop = { discrepancy = { tau = 0.5 } }",
            "unknown_key = 1",
        ] {
            assert!(ExperimentConfig::from_toml_str(text).is_err(), "{text}");
        }
    }
}
