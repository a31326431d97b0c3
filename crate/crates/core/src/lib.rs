//! Partially observable linear contextual bandits.
//!
//! The policy never sees the stochastic contexts `x_i(t)`; it only receives
//! noisy linear observations `y_i(t) = A x_i(t) + xi_i(t)`. This crate holds
//! the generative model, the Thompson sampling policies that learn the
//! transformed parameters `eta_i = D^T mu_i` from observations alone, the
//! baselines they are compared against, and the regret bookkeeping used to
//! check their scaling behaviour.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, configuration
//! and parallel orchestration live in the companion `pobandit-lab` crate.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod datasets;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod policy;
pub mod rng;
pub mod simulation;

pub use error::{Error, Result};
pub use linalg::{Cholesky, DenseMatrix, SpdMatrix};
pub use metrics::{AggregateCurves, RunTrace};
pub use model::{ArmMode, ArmSet, Environment, MarginEstimate, ObservationModel, Round};
pub use policy::{Policy, PolicyDecision, PolicyKind, PosteriorState};
pub use rng::{Purpose, RandomStream, StreamKey};
