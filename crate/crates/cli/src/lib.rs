// Copyright 2026 The kdlab Authors
// SPDX-License-Identifier: Apache-2.0

//! Configuration, dispatch and deterministic output for the `kdlab` binary.

// `!(x > 0.0)` is deliberate: it rejects NaN along with the out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

use std::path::{Path, PathBuf};

pub use commands::Command;
pub use config::{ParseError, RunConfig};

/// Exit codes of the binary.
pub mod exit {
    pub const OK: i32 = 0;
    pub const OTHER: i32 = 1;
    pub const PARSE: i32 = 2;
    pub const PRECONDITION: i32 = 3;
    pub const CERTIFICATION: i32 = 4;
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Parse(#[from] ParseError),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("certification failed: {0}")]
    Certification(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Other(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Parse(_) => exit::PARSE,
            RunError::Precondition(_) => exit::PRECONDITION,
            RunError::Certification(_) => exit::CERTIFICATION,
            RunError::Io(_) | RunError::Other(_) => exit::OTHER,
        }
    }
}

impl From<kdlab_core::Error> for RunError {
    fn from(e: kdlab_core::Error) -> Self {
        use kdlab_core::Error as E;
        match e {
            E::Config(_) | E::Domain(_) | E::Ambiguous { .. } | E::Symmetry(_) => RunError::Precondition(e.to_string()),
            E::Certification(m) => RunError::Certification(m),
            E::Numerical(_) => RunError::Other(e.to_string()),
        }
    }
}

/// Result of a completed run. `failure` is set when a certification did not
/// pass; the outputs are written regardless.
#[derive(Debug)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub failure: Option<String>,
}

pub fn load_config(path: &Path) -> Result<RunConfig, RunError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| RunError::Io(format!("cannot read {}: {e}", path.display())))?;
    Ok(RunConfig::parse(&text)?)
}

/// Runs `command` and writes its outputs to `cfg.out`.
pub fn run(command: Command, cfg: &RunConfig) -> Result<Outcome, RunError> {
    let product = commands::execute(command, cfg)?;
    let mut echo = cfg.clone();
    // the directory is where results go, not what they are
    echo.out = PathBuf::from(".");
    let report = output::Report {
        command: command.name().to_string(),
        versions: serde_json::json!({
            "kdlab": env!("CARGO_PKG_VERSION"),
            "rng": kdlab_core::kmc::RNG_ALGORITHM,
        }),
        config: echo.emit(),
        result: product.result,
        files: Vec::new(),
    };
    let files = output::emit(&cfg.out, report, &product.tables)?;
    Ok(Outcome {
        files,
        failure: product.failure,
    })
}
