//! Optimal tracking of a hidden symmetric two-state Markov drift observed
//! through Brownian noise.
//!
//! The optimal tracker switches its guess when the posterior mean `M` of the
//! hidden state crosses `-B` (while guessing `+1`) or `+B` (while guessing
//! `-1`). This crate computes `B` and the value function from a
//! continuous/smooth fit problem for the generator of `M`, and checks the
//! answer by simulating the signal, the observations and the exact filter.
//!
//! Module map:
//! - [`model`]: parameters, `Ṽ`, the operator `L`.
//! - [`ode`]: the decreasing solution `φ` of `L f = 0`.
//! - [`boundary`]: `(K, B)` and the pasted value function.
//! - [`simulate`]: hidden signal, observations, posterior-mean filter.
//! - [`policy`]: control rules and discounted cost accumulation.
//! - [`montecarlo`]: replicated cost estimates with common random numbers.
//! - [`diffusion`]: scale function, speed measure, boundary checks.

// Negated comparisons below are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boundary;
pub mod diffusion;
pub mod error;
pub mod model;
pub mod montecarlo;
pub mod numerics;
pub mod ode;
pub mod policy;
pub mod simulate;

pub use boundary::{
    solve_free_boundary, FitReport, FitTolerances, FreeBoundary, RootOptions, ValueFunction,
};
pub use error::{Error, Result};
pub use model::{ModelParams, RawParams, Regime};
pub use ode::{solve_phi, PhiOptions, PhiSolution};
