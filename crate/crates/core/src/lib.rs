//! Analytic deep prior (ADP) solvers for linear ill-posed inverse problems.
//!
//! The crate is generic over the scalar type through [`Real`]; the `*64`
//! and `*32` aliases below fix it to `f64` / `f32`.
//!
//! Modules:
//! * [`operators`]: grid signals, dense forward operators, norm estimation.
//! * [`penalties`]: elastic net and squared-l2 penalties, proximal maps,
//!   subgradients and the pairing functional.
//! * [`variational`]: ISTA for `x(B)`, Tikhonov, Ivanov and exact ADP.
//! * [`adp_iterative`]: gradient descent over the operator `B` with
//!   implicit-function-theorem hypergradients, ADP-beta, kernel
//!   parametrization, Bregman distances.
//! * [`dip_lista`]: deep-prior fitting of LISTA-like networks of finite and
//!   growing depth.
//! * [`lemma_lab`]: constructive operators realizing a prescribed
//!   regularized solution, feasibility certificates, parameter relations.

pub mod adp_iterative;
pub mod dip_lista;
pub mod error;
pub mod lemma_lab;
mod linalg;
pub mod operators;
pub mod penalties;
pub mod problem;
pub mod scalar;
pub mod variational;

pub use adp_iterative::{EarlyStop, IftConfig, KernelParam};
pub use dip_lista::{DipConfig, ListaNet};
pub use error::{AdpError, Result};
pub use lemma_lab::{Feasibility, MinimizerCheck, RankTwoB, Root};
pub use operators::{LinearOp, Signal};
pub use penalties::{ElasticNet, Penalty, SquaredL2};
pub use problem::AdpProblem;
pub use scalar::Real;
pub use variational::{IstaConfig, IvanovConfig, SolveReport, Splitting, StopReason};

pub type Signal64 = Signal<f64>;
pub type Signal32 = Signal<f32>;
pub type LinearOp64 = LinearOp<f64>;
pub type LinearOp32 = LinearOp<f32>;
pub type Penalty64 = Penalty<f64>;
pub type Penalty32 = Penalty<f32>;
pub type AdpProblem64 = AdpProblem<f64>;
pub type SolveReport64 = SolveReport<f64>;
pub type IftConfig64 = IftConfig<f64>;
pub type DipConfig64 = DipConfig<f64>;
