// Copyright 2026 The kdlab Authors
// SPDX-License-Identifier: Apache-2.0

//! Numerical laboratory for the kinetic limit of a lattice particle coupled
//! to thermal reservoirs.
//!
//! The crate is organised bottom-up:
//!
//! * [`torus`] discretizes the momentum torus and evaluates dispersion laws.
//! * [`reservoir`] holds the reservoir spectral density, its correlation
//!   function and the half-line transforms.
//! * [`fiber`] assembles the rate kernel, the linear Boltzmann fiber
//!   generator, the Gibbs state and the one-loop fiber kernel.
//! * [`spectral`] extracts the leading eigenvalue, the gap and the diffusion
//!   tensor, and evolves fibers with the semigroup.
//! * [`kmc`] simulates the jump process on the same grid.
//! * [`pairing`] implements the pairing calculus of the Dyson expansion.
//!
//! Data-parallel loops go through [`exec::Execution`], which falls back to
//! sequential iteration when the `parallel` feature is disabled.

// `!(x > 0.0)` is deliberate: it rejects NaN along with the out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod exec;
pub mod fiber;
pub mod kmc;
pub mod pairing;
pub mod quadrature;
pub mod reservoir;
pub mod spectral;
pub mod torus;

pub use error::{Error, Result};
pub use exec::Execution;

pub use nalgebra::Complex;

/// Complex double used throughout the crate.
pub type C64 = Complex<f64>;
