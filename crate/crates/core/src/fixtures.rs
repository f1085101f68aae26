//! Bundled C fixture library and test driver.
//!
//! The library has twelve functions covering the value shapes the tracer
//! handles; eight carry doc comments and the driver exercises six of those.
//! The oracle build compiles the same sources with `-DIOTRACE_ORACLE`, which
//! turns on value-printing hooks that write a CSV truth log
//! (`function,event,call_seq,param,value`) to `$IOTRACE_TRUTH_LOG`.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde::Deserialize;
use thiserror::Error;

pub const FUNCTIONS: [&str; 12] = [
    "bprint_channel_layout",
    "clamp_u",
    "count_char",
    "gcd",
    "list_length",
    "make_point",
    "number_as_double",
    "overwrite_param",
    "rect_area",
    "reset_counter",
    "scale",
    "sum_first",
];

pub const DOCUMENTED: [&str; 8] = [
    "bprint_channel_layout",
    "clamp_u",
    "count_char",
    "gcd",
    "make_point",
    "rect_area",
    "reset_counter",
    "scale",
];

/// Documented functions the default driver mode calls.
pub const EXERCISED_DOCUMENTED: [&str; 6] = [
    "bprint_channel_layout",
    "clamp_u",
    "count_char",
    "gcd",
    "make_point",
    "scale",
];

const SOURCES: &[(&str, &str)] = &[
    ("lib/iolib.h", include_str!("../fixtures/lib/iolib.h")),
    ("lib/iolib.c", include_str!("../fixtures/lib/iolib.c")),
    ("oracle/truth.h", include_str!("../fixtures/oracle/truth.h")),
    ("oracle/truth.c", include_str!("../fixtures/oracle/truth.c")),
    ("driver/driver.c", include_str!("../fixtures/driver/driver.c")),
    ("collide/first.c", include_str!("../fixtures/collide/first.c")),
    ("collide/second.c", include_str!("../fixtures/collide/second.c")),
    ("collide/main.c", include_str!("../fixtures/collide/main.c")),
];

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("C toolchain missing: {0}")]
    ToolchainMissing(String),
    #[error("unsupported fixture configuration: {0}")]
    UnsupportedConfiguration(String),
    #[error("compilation failed: {command}\n{stderr}")]
    Compile { command: String, stderr: String },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("truth log: {0}")]
    TruthLog(#[from] csv::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BuildMode {
    /// Debug info, no optimization, no hooks.
    Traced,
    /// Same sources with the truth-log hooks compiled in.
    Oracle,
}

#[derive(Clone, Debug)]
pub struct BuildOptions {
    pub mode: BuildMode,
    pub extra_cflags: Vec<String>,
}

impl BuildOptions {
    pub fn new(mode: BuildMode) -> Self {
        BuildOptions { mode, extra_cflags: Vec::new() }
    }
}

#[derive(Clone, Debug)]
pub struct FixtureBuild {
    /// Root of the written source tree.
    pub source_root: PathBuf,
    /// The library sources (what `--src` points at).
    pub lib_dir: PathBuf,
    pub driver: PathBuf,
    /// Two compilation units each defining a `static helper`; traced mode only.
    pub collide: Option<PathBuf>,
    pub mode: BuildMode,
}

/// Writes the fixture sources under `dir` and returns `dir`.
pub fn write_sources(dir: &Path) -> io::Result<PathBuf> {
    for (rel, text) in SOURCES {
        let path = dir.join(rel);
        fs::create_dir_all(path.parent().expect("relative paths have parents"))?;
        fs::write(&path, text)?;
    }
    Ok(dir.to_path_buf())
}

fn compiler() -> String {
    std::env::var("CC").unwrap_or_else(|_| "cc".to_string())
}

fn compile(cc: &str, args: &[String]) -> Result<(), FixtureError> {
    let out = Command::new(cc)
        .args(args)
        .output()
        .map_err(|e| FixtureError::ToolchainMissing(format!("{cc}: {e}")))?;
    if !out.status.success() {
        return Err(FixtureError::Compile {
            command: format!("{cc} {}", args.join(" ")),
            stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
        });
    }
    Ok(())
}

pub fn build_fixtures(mode: BuildMode, out_dir: &Path) -> Result<FixtureBuild, FixtureError> {
    build_with(&BuildOptions::new(mode), out_dir)
}

/// Compiles the fixtures into `out_dir`. Optimized builds are rejected: the
/// tracer relies on debug-faithful binaries.
pub fn build_with(opts: &BuildOptions, out_dir: &Path) -> Result<FixtureBuild, FixtureError> {
    if let Some(flag) = opts
        .extra_cflags
        .iter()
        .find(|f| f.starts_with("-O") && f.as_str() != "-O0")
    {
        return Err(FixtureError::UnsupportedConfiguration(format!(
            "{flag}: fixtures must be built without optimization"
        )));
    }
    let cc = compiler();
    fs::create_dir_all(out_dir)?;
    let out_dir = fs::canonicalize(out_dir)?;
    let root = write_sources(&out_dir.join("src"))?;
    let p = |rel: &str| root.join(rel).display().to_string();

    let mut common: Vec<String> = vec!["-g".into(), "-O0".into(), "-fno-omit-frame-pointer".into()];
    common.extend(opts.extra_cflags.iter().cloned());

    let mut args = common.clone();
    args.extend([format!("-I{}", p("lib")), format!("-I{}", p("oracle"))]);
    args.extend([p("lib/iolib.c"), p("driver/driver.c")]);
    let driver = match opts.mode {
        BuildMode::Traced => out_dir.join("driver"),
        BuildMode::Oracle => {
            args.extend(["-DIOTRACE_ORACLE".into(), p("oracle/truth.c")]);
            out_dir.join("driver-oracle")
        }
    };
    args.extend(["-o".into(), driver.display().to_string()]);
    compile(&cc, &args)?;

    let collide = if opts.mode == BuildMode::Traced {
        let path = out_dir.join("collide");
        let mut args = common;
        args.extend([p("collide/first.c"), p("collide/second.c"), p("collide/main.c")]);
        args.extend(["-o".into(), path.display().to_string()]);
        compile(&cc, &args)?;
        Some(path)
    } else {
        None
    };

    Ok(FixtureBuild {
        lib_dir: root.join("lib"),
        source_root: root,
        driver,
        collide,
        mode: opts.mode,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthEvent {
    Entry,
    Exit,
}

/// One line of the oracle's truth log.
#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
pub struct TruthEntry {
    pub function: String,
    pub event: TruthEvent,
    pub call_seq: u64,
    pub param: String,
    pub value: String,
}

pub fn parse_truth_log(text: &str) -> Result<Vec<TruthEntry>, FixtureError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for row in reader.deserialize() {
        out.push(row?);
    }
    Ok(out)
}
