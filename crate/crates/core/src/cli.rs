//! The `iotrace` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error, 3 the target
//! failed and `--discard-on-failure` was set.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use crate::aggregator::{build_tuples, export_viewer_json};
use crate::debuginfo::{load_debug_info, DebugIndex};
use crate::docgen::{build_pages, extract_doc_comments, render_site, source_files, DocComment};
use crate::model::{decode_session, encode_session, IOExample, TraceSession};
use crate::par::Exec;
use crate::selector::{default_seed, select_sessions, SelectionStrategy};
use crate::tracer::{trace_many, TraceConfig, TraceError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_TARGET_FAILED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "iotrace", version, about = "Record C function inputs and outputs and document them")]
pub struct Cli {
    /// Run sequentially instead of on the thread pool.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the names of the binary's functions, one per line.
    Discover(DiscoverArgs),
    /// Run the target and record calls of the watched functions.
    Trace(TraceArgs),
    /// Pick one recorded call per function.
    Select(SelectArgs),
    /// Render the HTML documentation site.
    Doc(DocArgs),
    /// Write the viewer JSON of one function.
    Export(ExportArgs),
    /// Print source, documented and with-example function counts.
    Report(ReportArgs),
    /// Discover, trace, select, document, export and report in one go.
    All(AllArgs),
}

#[derive(Debug, Args)]
pub struct DiscoverArgs {
    #[arg(long)]
    pub binary: PathBuf,
    /// Only functions declared under this directory.
    #[arg(long)]
    pub src: Option<PathBuf>,
    /// Glob over function names.
    #[arg(long)]
    pub filter: Option<String>,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct TraceOptions {
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_depth: u64,
    #[arg(long, default_value_t = 256, value_parser = clap::value_parser!(u64).range(1..))]
    pub string_cap: u64,
    #[arg(long)]
    pub discard_on_failure: bool,
    /// Seconds before the target is killed.
    #[arg(long, default_value_t = 300, value_parser = clap::value_parser!(u64).range(1..))]
    pub timeout: u64,
    /// Argument list for a further run after the main one; repeatable.
    #[arg(long = "run", value_name = "ARGS")]
    pub runs: Vec<String>,
    /// Arguments for the target.
    #[arg(last = true)]
    pub args: Vec<String>,
}

#[derive(Debug, Args)]
pub struct TraceArgs {
    #[arg(long)]
    pub binary: PathBuf,
    /// File listing one function name per line.
    #[arg(long, conflicts_with = "function")]
    pub functions: Option<PathBuf>,
    #[arg(long)]
    pub function: Vec<String>,
    /// Watch every function declared under this directory.
    #[arg(long, conflicts_with_all = ["functions", "function"])]
    pub src: Option<PathBuf>,
    #[command(flatten)]
    pub opts: TraceOptions,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Random,
    First,
    Last,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long, value_enum, default_value_t = StrategyArg::Random)]
    pub strategy: StrategyArg,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DocArgs {
    #[arg(long)]
    pub src: PathBuf,
    #[arg(long)]
    pub examples: Option<PathBuf>,
    #[arg(long)]
    pub binary: PathBuf,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub function: String,
    pub input: PathBuf,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub binary: PathBuf,
    #[arg(long)]
    pub src: PathBuf,
    #[arg(long)]
    pub examples: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AllArgs {
    #[arg(long)]
    pub binary: PathBuf,
    #[arg(long)]
    pub src: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub opts: TraceOptions,
    #[arg(short, long)]
    pub out: PathBuf,
}

/// A failure carrying its exit code and a module-prefixed message.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn runtime(module: &str, err: impl fmt::Display) -> CliError {
    CliError { code: EXIT_RUNTIME, message: format!("{module}: {err}") }
}

fn usage(message: impl Into<String>) -> CliError {
    CliError { code: EXIT_USAGE, message: message.into() }
}

type Result<T> = std::result::Result<T, CliError>;

/// Parses `argv` (including the program name) and runs the command.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("iotrace: {e}");
            e.code
        }
    }
}

pub fn execute(cli: &Cli) -> Result<i32> {
    let exec = if cli.sequential { Exec::Sequential } else { Exec::Parallel };
    match &cli.command {
        Command::Discover(a) => discover(a).map(|_| EXIT_OK),
        Command::Trace(a) => trace_cmd(exec, a),
        Command::Select(a) => select_cmd(a).map(|_| EXIT_OK),
        Command::Doc(a) => doc_cmd(exec, a).map(|_| EXIT_OK),
        Command::Export(a) => export_cmd(a).map(|_| EXIT_OK),
        Command::Report(a) => {
            let c = report_cmd(a)?;
            print!("{c}");
            Ok(EXIT_OK)
        }
        Command::All(a) => all_cmd(exec, a),
    }
}

fn load(binary: &Path) -> Result<DebugIndex> {
    load_debug_info(binary).map_err(|e| runtime("debuginfo", e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| runtime("io", format!("{}: {e}", dir.display())))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| runtime("io", format!("{}: {e}", path.display())))
}

fn finish(mut w: impl Write, path: &Path) -> Result<()> {
    w.flush().map_err(|e| runtime("io", format!("{}: {e}", path.display())))
}

/// Names of functions declared under `src`, qualified with their file when a
/// static name is defined more than once.
fn source_functions(index: &DebugIndex, src: &Path) -> Vec<String> {
    let sigs = index.functions_under(src);
    let mut names: Vec<String> = sigs
        .iter()
        .map(|s| {
            if index.functions.get(&s.name).is_some_and(|v| v.len() > 1) {
                format!("{}:{}", s.decl_file.display(), s.name)
            } else {
                s.name.clone()
            }
        })
        .collect();
    names.sort();
    names.dedup();
    names
}

fn discover(a: &DiscoverArgs) -> Result<()> {
    let index = load(&a.binary)?;
    let mut names = index.list_functions(a.filter.as_deref());
    if let Some(src) = &a.src {
        let under: BTreeSet<String> = index.functions_under(src).into_iter().map(|s| s.name.clone()).collect();
        names.retain(|n| under.contains(n));
    }
    let text: String = names.iter().map(|n| format!("{n}\n")).collect();
    match &a.out {
        Some(path) => {
            let mut w = create(path)?;
            w.write_all(text.as_bytes()).map_err(|e| runtime("io", e))?;
            finish(w, path)
        }
        None => io::stdout().write_all(text.as_bytes()).map_err(|e| runtime("io", e)),
    }
}

fn trace_config(opts: &TraceOptions, functions: Vec<String>) -> TraceConfig {
    let mut c = TraceConfig::new(functions);
    c.max_deref_depth = opts.max_depth as usize;
    c.string_cap_bytes = opts.string_cap as usize;
    c.discard_on_failure = opts.discard_on_failure;
    c.timeout_seconds = opts.timeout;
    c
}

fn run_lists(opts: &TraceOptions) -> Vec<Vec<String>> {
    let mut lists = vec![opts.args.clone()];
    lists.extend(opts.runs.iter().map(|r| r.split_whitespace().map(String::from).collect()));
    lists
}

/// Output path of run `i` when several runs share one `--out`.
pub fn run_output(out: &Path, i: usize, runs: usize) -> PathBuf {
    if runs == 1 {
        return out.to_path_buf();
    }
    let name = out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let (stem, ext) = match name.find('.') {
        Some(dot) => (&name[..dot], &name[dot..]),
        None => (name.as_str(), ""),
    };
    out.with_file_name(format!("{stem}.{i}{ext}"))
}

/// Traces every run and writes the sessions. Returns the written paths and
/// whether any target failed with discarding enabled.
fn trace_runs(
    exec: Exec,
    binary: &Path,
    index: &DebugIndex,
    config: &TraceConfig,
    opts: &TraceOptions,
    out: &Path,
) -> Result<(Vec<PathBuf>, bool)> {
    let lists = run_lists(opts);
    let results = trace_many(exec, binary, &lists, index, config);
    let mut paths = Vec::new();
    let mut discarded = false;
    let mut timeout = None;
    for (i, r) in results.into_iter().enumerate() {
        let session = match r {
            Ok(s) => s,
            Err(TraceError::TraceTimeout { partial }) => {
                timeout = Some(runtime("tracer", format!("run {i} exceeded its time budget; partial session written")));
                *partial
            }
            Err(e) => return Err(runtime("tracer", e)),
        };
        if !session.exit_status.success() {
            warn!("tracer: run {i} ended with {}", session.exit_status);
        }
        discarded |= session.discarded;
        let path = run_output(out, i, lists.len());
        let mut w = create(&path)?;
        encode_session(&session, &mut w).map_err(|e| runtime("model", e))?;
        finish(w, &path)?;
        info!("wrote {} ({} records)", path.display(), session.record_count());
        paths.push(path);
    }
    match timeout {
        Some(e) => Err(e),
        None => Ok((paths, discarded)),
    }
}

fn trace_cmd(exec: Exec, a: &TraceArgs) -> Result<i32> {
    let index = load(&a.binary)?;
    let functions = if let Some(file) = &a.functions {
        let text = fs::read_to_string(file).map_err(|e| runtime("io", format!("{}: {e}", file.display())))?;
        text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect()
    } else if let Some(src) = &a.src {
        source_functions(&index, src)
    } else {
        a.function.clone()
    };
    if functions.is_empty() {
        return Err(usage("trace: give --functions, --function or --src"));
    }
    let config = trace_config(&a.opts, functions);
    let (_, discarded) = trace_runs(exec, &a.binary, &index, &config, &a.opts, &a.out)?;
    Ok(if discarded { EXIT_TARGET_FAILED } else { EXIT_OK })
}

fn read_session(path: &Path) -> Result<TraceSession> {
    let f = File::open(path).map_err(|e| runtime("io", format!("{}: {e}", path.display())))?;
    decode_session(BufReader::new(f)).map_err(|e| runtime("model", format!("{}: {e}", path.display())))
}

fn strategy(kind: StrategyArg, seed: Option<u64>, sessions: &[TraceSession]) -> SelectionStrategy {
    match kind {
        StrategyArg::First => SelectionStrategy::First,
        StrategyArg::Last => SelectionStrategy::Last,
        StrategyArg::Random => SelectionStrategy::Random(seed.unwrap_or_else(|| {
            let s = default_seed(sessions.first().map_or("", |s| s.created_at.as_str()));
            eprintln!("select: no --seed given, using {s}");
            s
        })),
    }
}

fn write_examples(examples: &[IOExample], out: &Path) -> Result<()> {
    let mut w = create(out)?;
    serde_json::to_writer_pretty(&mut w, examples).map_err(|e| runtime("selector", e))?;
    w.write_all(b"\n").map_err(|e| runtime("io", e))?;
    finish(w, out)
}

fn select_cmd(a: &SelectArgs) -> Result<()> {
    let sessions = a.inputs.iter().map(|p| read_session(p)).collect::<Result<Vec<_>>>()?;
    let examples = select_sessions(&sessions, strategy(a.strategy, a.seed, &sessions));
    write_examples(&examples, &a.out)
}

fn read_examples(path: Option<&Path>) -> Result<Vec<IOExample>> {
    let Some(path) = path else { return Ok(Vec::new()) };
    let f = File::open(path).map_err(|e| runtime("io", format!("{}: {e}", path.display())))?;
    serde_json::from_reader(BufReader::new(f)).map_err(|e| runtime("selector", format!("{}: {e}", path.display())))
}

fn doc_comments(src: &Path) -> Result<std::collections::BTreeMap<String, DocComment>> {
    let files = source_files(src).map_err(|e| runtime("docgen", format!("{}: {e}", src.display())))?;
    Ok(extract_doc_comments(&files))
}

fn doc_cmd(exec: Exec, a: &DocArgs) -> Result<()> {
    let index = load(&a.binary)?;
    let docs = doc_comments(&a.src)?;
    let examples = read_examples(a.examples.as_deref())?;
    let pages = build_pages(exec, &index, &docs, &examples).map_err(|e| runtime("docgen", e))?;
    render_site(&a.out, &pages).map_err(|e| runtime("docgen", e))?;
    Ok(())
}

fn export_cmd(a: &ExportArgs) -> Result<()> {
    let session = read_session(&a.input)?;
    let records = session
        .records
        .get(&a.function)
        .ok_or_else(|| runtime("aggregator", format!("no records for {}", a.function)))?;
    let set = build_tuples(records).map_err(|e| runtime("aggregator", e))?;
    let mut w = create(&a.out)?;
    export_viewer_json(&set, &mut w).map_err(|e| runtime("aggregator", e))?;
    finish(w, &a.out)
}

/// The three function counts of the coverage report.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Coverage {
    pub library: String,
    pub source: usize,
    pub documented: usize,
    pub with_examples: usize,
}

impl fmt::Display for Coverage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<16} {:>20} {:>18} {:>28}", "library", "functions in source", "functions in docs", "functions with I/O examples")?;
        writeln!(f, "{:<16} {:>20} {:>18} {:>28}", self.library, self.source, self.documented, self.with_examples)
    }
}

/// Counts functions declared under the source tree, those of them with a doc
/// comment, and the documented ones that have an example.
pub fn coverage(
    library: &str,
    source: &BTreeSet<String>,
    docs: &std::collections::BTreeMap<String, DocComment>,
    examples: &[IOExample],
) -> Coverage {
    let documented: BTreeSet<&String> = docs.keys().filter(|n| source.contains(*n)).collect();
    let with_examples: BTreeSet<&str> = examples
        .iter()
        .map(|e| e.function())
        .filter(|n| documented.iter().any(|d| d.as_str() == *n))
        .collect();
    Coverage {
        library: library.to_string(),
        source: source.len(),
        documented: documented.len(),
        with_examples: with_examples.len(),
    }
}

pub fn report_cmd(a: &ReportArgs) -> Result<Coverage> {
    let index = load(&a.binary)?;
    let source: BTreeSet<String> = index.functions_under(&a.src).into_iter().map(|s| s.name.clone()).collect();
    let docs = doc_comments(&a.src)?;
    let examples = read_examples(a.examples.as_deref())?;
    let library = fs::canonicalize(&a.src)
        .ok()
        .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .unwrap_or_else(|| a.src.display().to_string());
    Ok(coverage(&library, &source, &docs, &examples))
}

fn all_cmd(exec: Exec, a: &AllArgs) -> Result<i32> {
    let out = &a.out;
    let functions_file = out.join("functions.txt");
    discover(&DiscoverArgs {
        binary: a.binary.clone(),
        src: Some(a.src.clone()),
        filter: None,
        out: Some(functions_file.clone()),
    })?;
    let index = load(&a.binary)?;
    let functions = source_functions(&index, &a.src);
    if functions.is_empty() {
        return Err(runtime("debuginfo", format!("no functions declared under {}", a.src.display())));
    }
    let config = trace_config(&a.opts, functions);
    let (traces, discarded) = trace_runs(exec, &a.binary, &index, &config, &a.opts, &out.join("trace.iotrace.jsonl"))?;
    let examples_file = out.join("examples.json");
    select_cmd(&SelectArgs { strategy: StrategyArg::Random, seed: a.seed, inputs: traces.clone(), out: examples_file.clone() })?;
    doc_cmd(exec, &DocArgs {
        src: a.src.clone(),
        examples: Some(examples_file.clone()),
        binary: a.binary.clone(),
        out: out.join("site"),
    })?;
    let first = read_session(&traces[0])?;
    for (name, records) in &first.records {
        if records.iter().any(|r| r.is_completed()) {
            export_cmd(&ExportArgs {
                function: name.clone(),
                input: traces[0].clone(),
                out: out.join("viewer").join(format!("{name}.viewer.json")),
            })?;
        }
    }
    let c = report_cmd(&ReportArgs { binary: a.binary.clone(), src: a.src.clone(), examples: Some(examples_file) })?;
    print!("{c}");
    Ok(if discarded { EXIT_TARGET_FAILED } else { EXIT_OK })
}
