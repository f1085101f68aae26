#![allow(dead_code)]

pub mod gen;

use std::path::PathBuf;
use std::sync::OnceLock;

use iotrace::fixtures::{build_fixtures, BuildMode, FixtureBuild};

fn build(mode: BuildMode, tag: &str) -> FixtureBuild {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR"))
        .join(format!("fixtures-{tag}-{}", std::process::id()));
    build_fixtures(mode, &dir).expect("fixture build")
}

pub fn traced() -> &'static FixtureBuild {
    static B: OnceLock<FixtureBuild> = OnceLock::new();
    B.get_or_init(|| build(BuildMode::Traced, "traced"))
}

pub fn oracle() -> &'static FixtureBuild {
    static B: OnceLock<FixtureBuild> = OnceLock::new();
    B.get_or_init(|| build(BuildMode::Oracle, "oracle"))
}

pub fn index() -> &'static iotrace::debuginfo::DebugIndex {
    static I: OnceLock<iotrace::debuginfo::DebugIndex> = OnceLock::new();
    I.get_or_init(|| iotrace::debuginfo::load_debug_info(&traced().driver).expect("debug info"))
}

use std::collections::BTreeMap;
use std::process::Command;

use iotrace::docgen::flatten_example;
use iotrace::fixtures::{parse_truth_log, TruthEntry, TruthEvent};
use iotrace::model::{IOExample, TraceSession};

/// Runs the oracle build with `args` and returns its stdout and truth log.
pub fn run_oracle(args: &[&str]) -> (Vec<u8>, Vec<TruthEntry>) {
    let log = tempfile::NamedTempFile::new().unwrap();
    let out = Command::new(&oracle().driver)
        .args(args)
        .env("IOTRACE_TRUTH_LOG", log.path())
        .output()
        .expect("oracle run");
    let text = std::fs::read_to_string(log.path()).unwrap();
    (out.stdout, parse_truth_log(&text).expect("truth log"))
}

/// Two rendered values agree when equal as text, or equal after parsing
/// both as `f64` or both as `f32` (the oracle prints `%.17g` / `%.9g`).
pub fn same_value(ours: &str, truth: &str) -> bool {
    if ours == truth {
        return true;
    }
    match (ours.parse::<f64>(), truth.parse::<f64>()) {
        (Ok(a), Ok(b)) if a == b || (a.is_nan() && b.is_nan()) => true,
        _ => matches!((ours.parse::<f32>(), truth.parse::<f32>()), (Ok(a), Ok(b)) if a == b),
    }
}

/// Result of comparing a traced session with a truth log.
#[derive(Debug, Default)]
pub struct OracleDiff {
    pub functions_checked: usize,
    pub functions_matching: usize,
    pub calls_checked: usize,
    pub calls_matching: usize,
    pub values_checked: usize,
    pub mismatches: Vec<String>,
}

/// Checks, per function in `functions`: record count equals the truth log's
/// call count, and every value the truth log prints matches the traced row
/// with the same access path (entry values against "before", exit values
/// against "after").
pub fn compare_with_oracle(session: &TraceSession, truth: &[TruthEntry], functions: &[&str]) -> OracleDiff {
    let mut diff = OracleDiff::default();
    let mut by_call: BTreeMap<(&str, u64), Vec<&TruthEntry>> = BTreeMap::new();
    for t in truth {
        by_call.entry((t.function.as_str(), t.call_seq)).or_default().push(t);
    }
    for f in functions {
        diff.functions_checked += 1;
        let records = session.records.get(*f).cloned().unwrap_or_default();
        let truth_calls: Vec<u64> = by_call.keys().filter(|(n, _)| n == f).map(|(_, s)| *s).collect();
        let mut ok = records.len() == truth_calls.len();
        if !ok {
            diff.mismatches.push(format!("{f}: {} records vs {} oracle calls", records.len(), truth_calls.len()));
        }
        for r in &records {
            diff.calls_checked += 1;
            let Some(entries) = by_call.get(&(*f, r.call_id)) else {
                diff.mismatches.push(format!("{f}#{}: not in the oracle log", r.call_id));
                ok = false;
                continue;
            };
            let rows = match flatten_example(&IOExample { source_session: String::new(), record: r.clone() }) {
                Ok(rows) => rows,
                Err(e) => {
                    diff.mismatches.push(format!("{f}#{}: {e}", r.call_id));
                    ok = false;
                    continue;
                }
            };
            let mut call_ok = r.is_completed() || entries.iter().all(|e| e.event == TruthEvent::Entry);
            for e in entries {
                diff.values_checked += 1;
                let row = rows.iter().find(|row| row.path == e.param);
                let ours = row.map(|row| match e.event {
                    TruthEvent::Entry => row.before.as_str(),
                    TruthEvent::Exit => row.after.as_str(),
                });
                if !ours.is_some_and(|o| same_value(o, &e.value)) {
                    call_ok = false;
                    diff.mismatches.push(format!(
                        "{f}#{} {:?} {}: traced {:?}, oracle {:?}",
                        r.call_id, e.event, e.param, ours, e.value
                    ));
                }
            }
            if call_ok {
                diff.calls_matching += 1;
            } else {
                ok = false;
            }
        }
        if ok {
            diff.functions_matching += 1;
        }
    }
    diff
}

/// Stdout and exit code of an untraced run of the traced build.
pub fn run_plain(args: &[&str]) -> (Vec<u8>, Option<i32>) {
    let out = Command::new(&traced().driver).args(args).output().expect("driver run");
    (out.stdout, out.status.code())
}

/// First-call examples from one traced run of the driver suite.
pub fn fixture_examples() -> &'static Vec<IOExample> {
    static E: OnceLock<Vec<IOExample>> = OnceLock::new();
    E.get_or_init(|| {
        let config = iotrace::tracer::TraceConfig::new(iotrace::fixtures::FUNCTIONS);
        let run = iotrace::tracer::Tracer::new(&traced().driver, index(), config)
            .capture_stdout(true)
            .run()
            .expect("trace");
        iotrace::selector::select_sessions(&[run.session], iotrace::selector::SelectionStrategy::First)
    })
}
