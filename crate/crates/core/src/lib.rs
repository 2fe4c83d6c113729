//! Neural-network differential-equation solvers with internal error
//! estimation and correction.
//!
//! A primary network `N` is trained against the collocation residual of
//! `F[u] = A[u] + b(u) + g = 0`. Once frozen, a correction network is trained
//! against the error equation `A[e] + B'(N, e) + F[N] = 0`, whose unique
//! solution is the true error `Φ − N`. The corrected estimate is `N + ê`, and
//! the step can be repeated on the running sum.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, configuration and
//! the command line live in the `nnde` companion crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod correction;
pub mod error;
pub mod expr;
pub mod jet;
pub mod metrics;
pub mod model;
pub mod net;
pub mod problem;
pub mod trainer;

mod math;

pub use error::{Error, Result};
pub use expr::Expr;
pub use jet::Jet2;
pub use correction::{bprime, bprime_de, error_residual, linear_indicator, BPrimeForm};
pub use metrics::{validate, ErrorStats, MetricsRow, ValidationSummary};
pub use model::{CorrectedModel, Correction, ExprModel, HardConstraint, Predictor, Stage, StageArch};
pub use net::{forward_jet, param_gradient, Activation, JetAdjoint, NetJet, NetworkConfig, ParameterVector};
pub use problem::{
    manufacture, BoundaryMode, DomainSpec, LinearOpSpec, NonlinearitySpec, ProblemSpec, SourceSpec,
    Zoo,
};
pub use trainer::{
    solve_and_correct, loss_correction, loss_primary, sample_boundary, sample_interior, train,
    SolveAndCorrectConfig, SolveAndCorrectOutcome, Clock, CorrectionScale, NoClock, Objective, OptimizerConfig, StopReason,
    TrainFailure, TrainRecord, TrainReport,
};
