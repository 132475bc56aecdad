//! Command-line front end: every subcommand writes CSV and JSON results plus
//! a manifest from which the run can be repeated exactly.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | finished, every expected outcome observed |
//! | 1 | finished, but an expected outcome was not observed |
//! | 2 | bad arguments |
//! | 3 | a fixed-length neuron was asked for a different length |
//! | 4 | runtime failure (I/O, numerics, corrupt input) |

pub mod args;
pub mod bench;
pub mod manifest;
pub mod run;

use std::path::{Path, PathBuf};
use std::time::Instant;

use args::Command;
use manifest::{manifest_path, write_json, RunManifest};

pub const EXIT_OK: i32 = 0;
pub const EXIT_UNEXPECTED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_LENGTH_MISMATCH: i32 = 3;
pub const EXIT_FAILURE: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] spikescan::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(spikescan::Error::LengthMismatch { .. }) => EXIT_LENGTH_MISMATCH,
            _ => EXIT_FAILURE,
        }
    }
}

/// What a finished command observed.
#[derive(Clone, Debug, PartialEq)]
pub enum Status {
    Ok,
    Unexpected(String),
    LengthMismatch(String),
}

impl Status {
    pub fn exit_code(&self) -> i32 {
        match self {
            Status::Ok => EXIT_OK,
            Status::Unexpected(_) => EXIT_UNEXPECTED,
            Status::LengthMismatch(_) => EXIT_LENGTH_MISMATCH,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub status: Status,
    pub outputs: Vec<PathBuf>,
    /// Human-readable summary for stdout.
    pub summary: String,
    pub manifest: Option<PathBuf>,
}

/// Caps the worker pool at `SPIKESCAN_THREADS` when set.
pub fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("SPIKESCAN_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| CliError::Usage(format!("SPIKESCAN_THREADS must be a positive integer, got '{raw}'")))?;
    // A second initialisation in the same process is harmless to ignore.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Runs a command and records its manifest.
pub fn execute(cmd: &Command) -> Result<Outcome, CliError> {
    if let Command::Replay(r) = cmd {
        let recorded = RunManifest::load(&r.manifest)?;
        let mut config = recorded.config;
        if matches!(config, Command::Replay(_)) {
            return Err(CliError::Usage("a manifest cannot replay another replay".into()));
        }
        if let Some(out) = &r.out {
            config.set_out(out.clone());
        }
        return execute(&config);
    }
    let start = Instant::now();
    let mut outcome = run::dispatch(cmd)?;
    let out = cmd.out().expect("non-replay commands have an output");
    let path = manifest_path(cmd, out);
    let m = RunManifest {
        command: cmd.name().into(),
        config: cmd.clone(),
        seed: cmd.seed(),
        version: env!("CARGO_PKG_VERSION").into(),
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
        outputs: outcome.outputs.clone(),
        exit_code: outcome.status.exit_code(),
    };
    write_json(&path, &m)?;
    outcome.manifest = Some(path);
    Ok(outcome)
}
