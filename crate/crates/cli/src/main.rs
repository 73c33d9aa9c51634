// Copyright 2026 The kdlab Authors
// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use kdlab::{exit, load_config, run, Command, RunError};

#[derive(Parser, Debug)]
#[command(name = "kdlab", version, about = "Kinetic diffusion laboratory", after_long_help = help_tail())]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Run configuration (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides `kmc.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; `KDLAB_THREADS` takes precedence.
    #[arg(long)]
    threads: Option<usize>,
}

fn help_tail() -> String {
    format!(
        "Exit codes: 0 success, 1 I/O or other failure, 2 parse error, 3 precondition error, 4 certification failure.\n\n{}",
        kdlab::config::reference()
    )
}

fn threads(flag: Option<usize>) -> Result<Option<usize>, RunError> {
    let parse_error = |message: String| {
        RunError::Parse(kdlab::ParseError {
            line: None,
            key: "KDLAB_THREADS".into(),
            message,
        })
    };
    match std::env::var("KDLAB_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(parse_error(format!("expected a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(flag.filter(|&n| n > 0)),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::PARSE } else { exit::OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("kdlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(cli: Cli) -> Result<i32, RunError> {
    let threads = threads(cli.threads)?;
    let mut cfg = load_config(&cli.config)?;
    if let Some(dir) = cli.out {
        cfg.out = dir;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| RunError::Other(format!("thread pool: {e}")))?;
    }
    let start = Instant::now();
    let outcome = run(cli.command, &cfg)?;
    eprintln!(
        "kdlab {}: {} files in {} ({:.2} s)",
        cli.command.name(),
        outcome.files.len(),
        cfg.out.display(),
        start.elapsed().as_secs_f64()
    );
    match outcome.failure {
        Some(reason) => {
            eprintln!("kdlab: certification failed: {reason}");
            Ok(exit::CERTIFICATION)
        }
        None => Ok(exit::OK),
    }
}
