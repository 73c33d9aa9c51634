// Copyright 2026 The kdlab Authors
// SPDX-License-Identifier: Apache-2.0

use crate::C64;

/// Errors raised by the numerical modules.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid construction parameters (grid sizes, counts, shapes).
    #[error("configuration error: {0}")]
    Config(String),

    /// An argument lies outside the domain where the quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// Two candidate leading eigenvalues could not be told apart.
    #[error("leading eigenvalue is ambiguous: {first} and {second} (tolerance {tolerance:e})")]
    Ambiguous { first: C64, second: C64, tolerance: f64 },

    /// A symmetry the construction relies on is violated numerically.
    #[error("symmetry violation: {0}")]
    Symmetry(String),

    /// A numerical certification did not pass.
    #[error("certification failed: {0}")]
    Certification(String),

    /// A decomposition or iteration did not converge.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
