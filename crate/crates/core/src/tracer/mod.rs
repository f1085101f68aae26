//! Runs a target under ptrace and records every call of the watched
//! functions.
//!
//! Each watched function gets a software breakpoint at its entry. On entry
//! the return address is read from the stack and a one-shot breakpoint is
//! planted there; exits are matched to entries through a per-thread shadow
//! stack keyed by (return address, stack pointer after return).

mod ptrace;
mod snapshot;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Duration;

use thiserror::Error;

use crate::debuginfo::{DebugIndex, ResolveError};
use crate::model::TraceSession;
use crate::par::{self, Exec};

pub use snapshot::{
    entry_locations, read_return_value, snapshot_params, snapshot_value, FakeMemory, Location, MemoryReader,
    RegisterFile,
};

pub const TIMEOUT_ENV: &str = "IOTRACE_TIMEOUT";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceConfig {
    pub max_deref_depth: usize,
    pub string_cap_bytes: usize,
    pub discard_on_failure: bool,
    pub functions: Vec<String>,
    pub timeout_seconds: u64,
}

impl TraceConfig {
    pub fn new<I, S>(functions: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        TraceConfig {
            max_deref_depth: 3,
            string_cap_bytes: 256,
            discard_on_failure: false,
            functions: functions.into_iter().map(Into::into).collect(),
            timeout_seconds: 300,
        }
    }

    pub fn validate(&self) -> Result<(), TraceError> {
        if self.functions.is_empty() {
            return Err(TraceError::InvalidConfig("no functions to watch".into()));
        }
        if self.max_deref_depth == 0 {
            return Err(TraceError::InvalidConfig("max_deref_depth must be at least 1".into()));
        }
        if self.string_cap_bytes == 0 || self.timeout_seconds == 0 {
            return Err(TraceError::InvalidConfig("string cap and timeout must be positive".into()));
        }
        Ok(())
    }

    /// The configured timeout, unless `IOTRACE_TIMEOUT` holds a positive
    /// number of seconds.
    pub fn effective_timeout(&self) -> Duration {
        let secs = std::env::var(TIMEOUT_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<u64>().ok())
            .filter(|&s| s > 0)
            .unwrap_or(self.timeout_seconds);
        Duration::from_secs(secs)
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("invalid trace configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Resolve(#[from] ResolveError),
    #[error("failed to launch {path}: {message}")]
    LaunchFailure { path: PathBuf, message: String },
    #[error("cannot plant breakpoint for {0}")]
    BreakpointFailure(String),
    #[error("target exceeded its time budget and was killed")]
    TraceTimeout { partial: Box<TraceSession> },
    #[error("ptrace: {0}")]
    Ptrace(String),
}

/// One traced run of a target, plus its captured standard output.
#[derive(Clone, Debug)]
pub struct TraceRun {
    pub session: TraceSession,
    pub stdout: Option<Vec<u8>>,
}

/// Builder for a single traced run.
#[derive(Clone, Debug)]
pub struct Tracer<'a> {
    binary: PathBuf,
    argv: Vec<String>,
    index: &'a DebugIndex,
    config: TraceConfig,
    capture_stdout: bool,
    env: Vec<(OsString, OsString)>,
}

impl<'a> Tracer<'a> {
    pub fn new(binary: impl AsRef<Path>, index: &'a DebugIndex, config: TraceConfig) -> Self {
        Tracer {
            binary: binary.as_ref().to_path_buf(),
            argv: Vec::new(),
            index,
            config,
            capture_stdout: false,
            env: Vec::new(),
        }
    }

    pub fn args<I, S>(mut self, argv: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.argv = argv.into_iter().map(Into::into).collect();
        self
    }

    pub fn capture_stdout(mut self, yes: bool) -> Self {
        self.capture_stdout = yes;
        self
    }

    pub fn env(mut self, key: impl Into<OsString>, value: impl Into<OsString>) -> Self {
        self.env.push((key.into(), value.into()));
        self
    }

    pub fn run(&self) -> Result<TraceRun, TraceError> {
        self.config.validate()?;
        let watched = self
            .config
            .functions
            .iter()
            .map(|name| self.index.resolve_function(name).cloned())
            .collect::<Result<Vec<_>, _>>()?;
        let mut run = ptrace::run(self, &watched)?;
        let session = &mut run.session;
        session.normalize();
        if self.config.discard_on_failure && !session.exit_status.success() {
            session.records.clear();
            session.discarded = true;
        }
        if session.timed_out {
            return Err(TraceError::TraceTimeout { partial: Box::new(run.session) });
        }
        Ok(run)
    }
}

/// Traces `binary` with `argv`, watching `config.functions`.
pub fn trace(
    binary: impl AsRef<Path>,
    argv: &[String],
    index: &DebugIndex,
    config: &TraceConfig,
) -> Result<TraceSession, TraceError> {
    Tracer::new(binary, index, config.clone())
        .args(argv.iter().cloned())
        .run()
        .map(|r| r.session)
}

/// Runs one traced process per argument list. Each run stays on the thread
/// that launched it.
pub fn trace_many(
    exec: Exec,
    binary: impl AsRef<Path>,
    argvs: &[Vec<String>],
    index: &DebugIndex,
    config: &TraceConfig,
) -> Vec<Result<TraceSession, TraceError>> {
    let binary = binary.as_ref();
    par::map(exec, argvs, |argv| trace(binary, argv, index, config))
}
