// Copyright 2026 The kdlab Authors
// SPDX-License-Identifier: Apache-2.0

//! Execution strategy for the data-parallel loops.
//!
//! Every parallel loop in the crate is an indexed map whose results are
//! collected in index order, so the output never depends on scheduling.

/// How indexed work is dispatched.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    /// Use the rayon pool when the `parallel` feature is enabled; otherwise
    /// identical to [`Execution::Sequential`].
    #[default]
    Parallel,
    Sequential,
}

impl Execution {
    /// Whether this mode will actually run on the rayon pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// Evaluates `f(0..n)` and returns the results in index order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }
}
