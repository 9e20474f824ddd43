//! Simulation and limit-law verification for the linear dynamics
//! `x' = -κx + Ax` with a large random interaction matrix `A = n^{-1/2} W`.
//!
//! The crate is organised bottom-up:
//!
//! * [`ensembles`] samples interaction matrices and initial vectors,
//! * [`propagator`] computes `x(t)` through the exponential action and
//!   estimates operator norms,
//! * [`empirics`] turns trajectories into empirical distributions and
//!   Monte Carlo estimators,
//! * [`laws`] evaluates the closed-form limit laws and the stability
//!   classification,
//! * [`harness`] runs replicated experiments and assembles reports,
//! * [`report`] writes those reports as CSV.
//!
//! Replica-level work runs on rayon when the `parallel` feature is enabled
//! (the default) and falls back to a plain loop otherwise; see [`par`].

pub mod empirics;
pub mod ensembles;
mod error;
pub mod harness;
pub mod laws;
pub mod matrix;
pub mod par;
pub mod propagator;
pub mod quadrature;
pub mod report;
pub mod rng;

pub use error::{Error, Result};
pub use matrix::Matrix;
