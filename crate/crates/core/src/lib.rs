//! Monodromy operators of the 1-D time-periodic Schrödinger equation
//! `ih psi_t = -psi_xx + V(x,t) psi` in a truncated Fourier basis, their
//! explicit near-diagonal decomposition, and the unitary conjugations that
//! bring them to almost diagonal form.
//!
//! Pipeline: [`potential`] → [`propagator`] → [`decomposition`] →
//! [`conjugation`] → [`blockdiag`], with [`bounds`] providing the decay-fit
//! and lattice-sum utilities shared by all stages.

// `!(x <= limit)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blockdiag;
pub mod bounds;
pub mod conjugation;
pub mod decomposition;
pub mod error;
pub mod grid;
pub mod potential;
pub mod propagator;

pub use error::{Error, Result};
pub use grid::{bracket, Frame, ModeGrid, OperatorMatrix, StateVector};
pub use potential::{FourierPotential, GaugePhase, PotentialSpec, SmoothnessClass};
pub use propagator::{IntegratorConfig, Method, PERIOD};
