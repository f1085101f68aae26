//! Proptest generators and the checks shared by the property suite and the
//! acceptance harness. Every check returns `Err(description)` on violation.

use std::collections::{BTreeMap, BTreeSet};

use proptest::collection::vec;
use proptest::option;
use proptest::prelude::*;

use iotrace::aggregator::{cofilter, histograms, CallTuple, CallTupleSet, Histogram};
use iotrace::docgen::{flatten_example, NO_VALUE};
use iotrace::model::{
    decode_str, encode_to_string, BaseEncoding, CallRecord, CallStatus, ExitStatus, Field, IOExample, Param,
    PointerTarget, TraceSession, Value,
};
use iotrace::par::Exec;
use iotrace::selector::{select_record, SelectionStrategy};

pub fn encoding() -> impl Strategy<Value = BaseEncoding> {
    prop_oneof![
        Just(BaseEncoding::SignedInt),
        Just(BaseEncoding::UnsignedInt),
        Just(BaseEncoding::Float),
        Just(BaseEncoding::Bool),
        Just(BaseEncoding::Char),
    ]
}

pub fn scalar() -> impl Strategy<Value = Value> {
    (prop_oneof![Just(1usize), Just(2), Just(4), Just(8)], encoding())
        .prop_flat_map(|(n, e)| vec(any::<u8>(), n).prop_map(move |raw| Value::scalar(raw, e)))
}

fn unique_fields(fields: Vec<(String, Value)>) -> Vec<Field> {
    let mut seen = BTreeSet::new();
    fields
        .into_iter()
        .filter(|(n, _)| seen.insert(n.clone()))
        .map(|(n, v)| Field::new(n, v))
        .collect()
}

pub fn value() -> impl Strategy<Value = Value> {
    let leaf = prop_oneof![
        4 => scalar(),
        1 => (any::<i64>(), "[A-Z_]{1,8}").prop_map(|(value, name)| Value::Enum { value, name }),
        2 => (any::<String>(), any::<bool>()).prop_map(|(text, truncated)| Value::CString { text, truncated }),
        1 => Just(Value::null()),
        1 => any::<u64>().prop_map(|address| Value::Pointer { target: PointerTarget::Unreadable { address } }),
        1 => (vec(any::<u8>(), 0..8), option::of("[a-z]{0,6}")).prop_map(|(raw, note)| Value::Opaque { raw, note }),
        1 => Just(Value::Void),
    ];
    leaf.prop_recursive(4, 32, 4, |inner| {
        prop_oneof![
            (any::<u64>(), option::of(inner.clone())).prop_map(|(a, p)| Value::pointer(a, p)),
            vec(("[a-z_]{1,6}", inner.clone()), 0..4).prop_map(|f| Value::Struct { fields: unique_fields(f) }),
            (vec(any::<u8>(), 0..8), vec(("[a-z]{1,4}", inner.clone()), 1..3))
                .prop_map(|(raw, m)| Value::Union { raw, members: unique_fields(m) }),
            inner.prop_map(Value::array_head),
        ]
    })
}

/// Inputs as (name, entry value, exit value) with unique names.
fn params() -> impl Strategy<Value = Vec<(String, Value, Value)>> {
    vec(("[a-z]{1,5}", value(), value()), 0..4).prop_map(|ps| {
        let mut seen = BTreeSet::new();
        ps.into_iter().filter(|(n, _, _)| seen.insert(n.clone())).collect()
    })
}

pub fn record(function: String, call_id: u64) -> impl Strategy<Value = CallRecord> {
    (any::<bool>(), params(), value(), option::of(any::<u64>())).prop_map(move |(done, ps, ret, pc)| {
        let inputs = ps.iter().map(|(n, v, _)| Param::new(n.clone(), v.clone())).collect();
        if done {
            CallRecord {
                function: function.clone(),
                call_id,
                status: CallStatus::Completed,
                inputs,
                outputs: ps.into_iter().map(|(n, _, v)| Param::new(n, v)).collect(),
                return_value: Some(ret),
                exit_pc: pc,
            }
        } else {
            CallRecord {
                function: function.clone(),
                call_id,
                status: CallStatus::Interrupted,
                inputs,
                outputs: Vec::new(),
                return_value: None,
                exit_pc: None,
            }
        }
    })
}

fn records_for(function: String) -> impl Strategy<Value = Vec<CallRecord>> {
    vec(1u64..4, 0..5).prop_flat_map(move |gaps| {
        let ids: Vec<u64> = gaps.iter().scan(0, |acc, g| { *acc += g; Some(*acc) }).collect();
        ids.into_iter().map(|id| record(function.clone(), id)).collect::<Vec<_>>()
    })
}

fn exit_status() -> impl Strategy<Value = ExitStatus> {
    prop_oneof![
        any::<i32>().prop_map(ExitStatus::Code),
        (1i32..32, "SIG[A-Z]{2,6}").prop_map(|(signal, name)| ExitStatus::Signal { signal, name }),
    ]
}

pub fn session() -> impl Strategy<Value = TraceSession> {
    let functions = vec("[a-z_]{1,8}", 0..4).prop_map(|v| v.into_iter().collect::<BTreeSet<_>>());
    let records = functions.prop_flat_map(|fs| fs.into_iter().map(records_for).collect::<Vec<_>>());
    (
        ".{0,20}",
        vec(".{0,8}", 0..3),
        exit_status(),
        records,
        "[0-9]{4}-[0-9]{2}-[0-9]{2}T[0-9]{2}:[0-9]{2}:[0-9]{2}Z",
        any::<(bool, bool)>(),
    )
        .prop_map(|(target, argv, status, records, created_at, (discarded, timed_out))| {
            let mut s = TraceSession::new(target, argv);
            s.exit_status = status;
            s.created_at = created_at;
            s.discarded = discarded;
            s.timed_out = timed_out;
            for r in records.into_iter().flatten() {
                s.push(r);
            }
            s
        })
}

pub fn check_round_trip(s: &TraceSession) -> Result<(), String> {
    let text = encode_to_string(s);
    let back = decode_str(&text).map_err(|e| format!("decode failed: {e}"))?;
    if &back != s {
        return Err(format!("session changed in round trip:\n{text}"));
    }
    if encode_to_string(&back) != text {
        return Err("re-encoding is not byte-identical".into());
    }
    Ok(())
}

/// Records with increasing call ids; `true` marks a completed call.
pub fn selector_input() -> impl Strategy<Value = Vec<CallRecord>> {
    vec((1u64..5, prop::bool::weighted(0.8)), 0..20).prop_map(|spec| {
        let mut id = 0;
        spec.into_iter()
            .map(|(gap, done)| {
                id += gap;
                CallRecord {
                    function: "f".into(),
                    call_id: id,
                    status: if done { CallStatus::Completed } else { CallStatus::Interrupted },
                    inputs: vec![Param::new("x", Value::scalar(id.to_le_bytes().to_vec(), BaseEncoding::UnsignedInt))],
                    outputs: if done { vec![Param::new("x", Value::Void)] } else { Vec::new() },
                    return_value: done.then_some(Value::Void),
                    exit_pc: None,
                }
            })
            .collect()
    })
}

pub fn check_selector(records: &[CallRecord], seed: u64) -> Result<(), String> {
    let done: Vec<u64> = records.iter().filter(|r| r.is_completed()).map(|r| r.call_id).collect();
    for strategy in [SelectionStrategy::Random(seed), SelectionStrategy::First, SelectionStrategy::Last] {
        let a = select_record(records, strategy).map(|r| r.call_id);
        let b = select_record(records, strategy).map(|r| r.call_id);
        if a != b {
            return Err(format!("{strategy:?} is not deterministic: {a:?} vs {b:?}"));
        }
        match a {
            None if done.is_empty() => {}
            None => return Err(format!("{strategy:?} picked nothing from {done:?}")),
            Some(id) if !done.contains(&id) => return Err(format!("{strategy:?} picked {id}, not a completed call")),
            Some(_) => {}
        }
    }
    let first = select_record(records, SelectionStrategy::First).map(|r| r.call_id);
    let last = select_record(records, SelectionStrategy::Last).map(|r| r.call_id);
    if first != done.iter().min().copied() || last != done.iter().max().copied() {
        return Err(format!("first/last {first:?}/{last:?} over {done:?}"));
    }
    Ok(())
}

/// Per-record selection share over `seeds` seeds of `n` completed records.
pub fn selection_shares(n: usize, seeds: u64) -> Vec<f64> {
    let records: Vec<CallRecord> = (1..=n as u64)
        .map(|id| CallRecord {
            function: "f".into(),
            call_id: id,
            status: CallStatus::Completed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            return_value: Some(Value::Void),
            exit_pc: None,
        })
        .collect();
    let mut counts = vec![0u64; n];
    for seed in 0..seeds {
        let id = select_record(&records, SelectionStrategy::Random(seed)).unwrap().call_id;
        counts[id as usize - 1] += 1;
    }
    counts.iter().map(|&c| c as f64 / seeds as f64).collect()
}

/// A tuple set plus an anchor (variable index, value).
pub fn tuple_set() -> impl Strategy<Value = (CallTupleSet, usize, String)> {
    (1usize..=6, 0usize..=1000)
        .prop_flat_map(|(nv, nt)| {
            let cell = prop_oneof![3 => "-?[0-9]{1,2}", 1 => "[a-c]", 1 => "[0-9]\\.[05]"];
            (vec(vec(cell, nv), nt), 0..nv, "-?[0-9]{1,2}|[a-c]")
        })
        .prop_map(|(rows, var, fallback)| {
            let nv = var + 1;
            let nv = rows.first().map_or(nv, |r| r.len());
            let variables: Vec<String> = (0..nv).map(|i| format!("v{i}")).collect();
            // Anchor on an observed value most of the time.
            let value = rows.get(rows.len() / 2).map_or(fallback, |r| r[var].clone());
            let tuples = rows
                .into_iter()
                .enumerate()
                .map(|(i, values)| CallTuple { call_id: i as u64 + 1, values })
                .collect();
            (CallTupleSet { function: "f".into(), variables, tuples }, var, value)
        })
}

fn as_counts(h: &Histogram) -> BTreeMap<String, usize> {
    h.bins.iter().map(|b| (b.value.clone(), b.count)).collect()
}

/// Cofilter against a scan-and-count oracle, plus conservation, dominance
/// and sequential/parallel agreement.
pub fn check_aggregator(set: &CallTupleSet, var: usize, value: &str) -> Result<(), String> {
    let anchor = &set.variables[var];
    let full = histograms(Exec::Parallel, set);
    let filtered = cofilter(Exec::Parallel, set, anchor, value).map_err(|e| e.to_string())?;
    if histograms(Exec::Sequential, set) != full {
        return Err("sequential and parallel histograms differ".into());
    }
    if cofilter(Exec::Sequential, set, anchor, value).map_err(|e| e.to_string())? != filtered {
        return Err("sequential and parallel cofilter differ".into());
    }
    for (j, name) in set.variables.iter().enumerate() {
        let mut oracle_full: BTreeMap<String, usize> = BTreeMap::new();
        let mut oracle_filtered: BTreeMap<String, usize> = BTreeMap::new();
        for t in &set.tuples {
            *oracle_full.entry(t.values[j].clone()).or_default() += 1;
            if t.values[var] == value {
                *oracle_filtered.entry(t.values[j].clone()).or_default() += 1;
            }
        }
        let (f, c) = (&full[name], &filtered[name]);
        if as_counts(f) != oracle_full {
            return Err(format!("{name}: histogram differs from oracle"));
        }
        if as_counts(c) != oracle_filtered {
            return Err(format!("{name}: cofilter differs from oracle"));
        }
        if f.total() != set.tuples.len() {
            return Err(format!("{name}: unfiltered total {} != {}", f.total(), set.tuples.len()));
        }
        if c.total() != full[anchor].count(value) {
            return Err(format!("{name}: filtered total {} != anchor bin {}", c.total(), full[anchor].count(value)));
        }
        if let Some(b) = c.bins.iter().find(|b| b.count > f.count(&b.value)) {
            return Err(format!("{name}: bin {} exceeds its unfiltered count", b.value));
        }
        if c.bins.iter().any(|b| b.count == 0) {
            return Err(format!("{name}: empty bin emitted"));
        }
    }
    Ok(())
}

/// Recorded gcd calls dominated by a = 0, with a = 25 only ever paired with
/// b in {1, 25} and returning 1.
pub fn gcd_replay_dataset() -> CallTupleSet {
    let mut rows: Vec<[String; 3]> = Vec::new();
    let mut add = |a: i64, b: i64, r: i64| rows.push([a.to_string(), b.to_string(), r.to_string()]);
    for k in 0..141 {
        let b = k % 9 + 1;
        add(0, b, b);
    }
    for (a, n) in [(1, 12), (3, 7), (4, 5)] {
        for k in 0..n {
            add(a, k + 1, 1);
        }
    }
    for k in 0..30 {
        add(25, if k % 2 == 0 { 1 } else { 25 }, 1);
    }
    CallTupleSet {
        function: "gcd".into(),
        variables: vec!["a".into(), "b".into(), "return".into()],
        tuples: rows
            .into_iter()
            .enumerate()
            .map(|(i, v)| CallTuple { call_id: i as u64 + 1, values: v.to_vec() })
            .collect(),
    }
}

pub fn check_gcd_replay() -> Result<(), String> {
    let set = gcd_replay_dataset();
    let full = histograms(Exec::Parallel, &set);
    let a = &full["a"];
    if a.support() != ["0", "1", "3", "4", "25"] {
        return Err(format!("a support {:?}", a.support()));
    }
    let max = a.bins.iter().max_by_key(|b| b.count).unwrap();
    if max.value != "0" || a.bins.iter().filter(|b| b.count == max.count).count() != 1 {
        return Err(format!("most frequent a is {}", max.value));
    }
    let f = cofilter(Exec::Parallel, &set, "a", "25").map_err(|e| e.to_string())?;
    if f["b"].support() != ["1", "25"] || f["return"].support() != ["1"] {
        return Err(format!("cofilter a=25: b {:?}, return {:?}", f["b"].support(), f["return"].support()));
    }
    Ok(())
}

fn perturb(v: &Value, salt: u8) -> Value {
    match v {
        Value::Scalar { raw, .. } => {
            let raw: Vec<u8> = raw.iter().map(|b| b ^ salt).collect();
            Value::Scalar { text: format!("{}#{salt}", hex_text(&raw)), raw }
        }
        Value::CString { text, truncated } => Value::CString { text: format!("{text}{salt}"), truncated: *truncated },
        Value::Pointer { target: PointerTarget::Valid { address, pointee } } => Value::Pointer {
            target: PointerTarget::Valid { address: *address, pointee: pointee.as_ref().map(|p| Box::new(perturb(p, salt))) },
        },
        Value::Struct { fields } => Value::Struct { fields: fields.iter().map(|f| Field::new(&f.name, perturb(&f.value, salt))).collect() },
        Value::Union { raw, members } => Value::Union {
            raw: raw.clone(),
            members: members.iter().map(|f| Field::new(&f.name, perturb(&f.value, salt))).collect(),
        },
        Value::ArrayHead { first, note } => Value::ArrayHead { first: Box::new(perturb(first, salt)), note: note.clone() },
        other => other.clone(),
    }
}

fn hex_text(raw: &[u8]) -> String {
    raw.iter().map(|b| format!("{b:02x}")).collect()
}

/// A completed example whose exit values have the entry values' shape.
pub fn example() -> impl Strategy<Value = IOExample> {
    (vec(("[a-z]{1,5}", value()), 0..4), value(), any::<u8>()).prop_map(|(ps, ret, salt)| {
        let mut seen = BTreeSet::new();
        let ps: Vec<(String, Value)> = ps.into_iter().filter(|(n, _)| seen.insert(n.clone())).collect();
        IOExample {
            source_session: "prop".into(),
            record: CallRecord {
                function: "f".into(),
                call_id: 1,
                status: CallStatus::Completed,
                inputs: ps.iter().map(|(n, v)| Param::new(n.clone(), v.clone())).collect(),
                outputs: ps.iter().map(|(n, v)| Param::new(n.clone(), perturb(v, salt))).collect(),
                return_value: Some(ret),
                exit_pc: None,
            },
        }
    })
}

/// Structural soundness of the flattened before/after table.
pub fn check_table(ex: &IOExample) -> Result<(), String> {
    let rows = flatten_example(ex).map_err(|e| e.to_string())?;
    let r = &ex.record;
    let mut roots: Vec<&str> = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        match row.parent {
            None => {
                if row.depth != 0 {
                    return Err(format!("root row {} at depth {}", row.path, row.depth));
                }
                roots.push(&row.path);
            }
            Some(p) => {
                if p >= i {
                    return Err(format!("row {i} has a later parent {p}"));
                }
                let parent = &rows[p];
                if !parent.collapsible || parent.depth + 1 != row.depth {
                    return Err(format!("{} under {}: bad nesting", row.path, parent.path));
                }
                let base = parent.path.trim_end_matches("[0]");
                if !row.path.contains(base) {
                    return Err(format!("{} does not extend {}", row.path, parent.path));
                }
            }
        }
        let has_child = rows.iter().any(|c| c.parent == Some(i));
        if row.collapsible != has_child {
            return Err(format!("{}: collapsible={} but has_child={has_child}", row.path, row.collapsible));
        }
    }
    // Roots are the parameters (an array parameter roots at `name[0]`), then `return`.
    let mut expected: Vec<String> = r.inputs.iter().map(|p| p.name.clone()).collect();
    if r.return_value.as_ref().is_some_and(|v| *v != Value::Void) {
        expected.push("return".into());
    }
    let stripped: Vec<String> = roots
        .iter()
        .map(|p| {
            let mut p = *p;
            while let Some(q) = p.strip_suffix("[0]") {
                p = q;
            }
            p.to_string()
        })
        .collect();
    if stripped != expected {
        return Err(format!("roots {roots:?}, expected {expected:?}"));
    }
    for row in rows.iter().filter(|row| row.parent.is_none() && row.path.starts_with("return")) {
        if row.before != NO_VALUE {
            return Err(format!("return row before cell is {:?}", row.before));
        }
    }
    for (p, row) in r.inputs.iter().zip(rows.iter().filter(|row| row.parent.is_none())) {
        if !matches!(p.value, Value::ArrayHead { .. }) && row.before != p.value.text() {
            return Err(format!("{}: before {:?} != {:?}", p.name, row.before, p.value.text()));
        }
    }
    Ok(())
}

/// `render_scalar` against independent formatting of the same bytes.
pub fn check_scalar(raw: &[u8], enc: BaseEncoding) -> Result<(), String> {
    let v = Value::scalar(raw.to_vec(), enc);
    let again = Value::scalar(raw.to_vec(), enc);
    if v != again {
        return Err("rendering is not deterministic".into());
    }
    let text = v.text();
    let want = match (enc, raw.len()) {
        (BaseEncoding::SignedInt, 1) => (raw[0] as i8).to_string(),
        (BaseEncoding::SignedInt, 2) => i16::from_le_bytes([raw[0], raw[1]]).to_string(),
        (BaseEncoding::SignedInt, 4) => i32::from_le_bytes(raw.try_into().unwrap()).to_string(),
        (BaseEncoding::SignedInt, 8) => i64::from_le_bytes(raw.try_into().unwrap()).to_string(),
        (BaseEncoding::UnsignedInt, 4) => u32::from_le_bytes(raw.try_into().unwrap()).to_string(),
        (BaseEncoding::UnsignedInt, 8) => u64::from_le_bytes(raw.try_into().unwrap()).to_string(),
        (BaseEncoding::Bool, _) => (raw.iter().any(|&b| b != 0)).to_string(),
        (BaseEncoding::Float, 8) => {
            let f = f64::from_le_bytes(raw.try_into().unwrap());
            if f.is_nan() {
                "nan".into()
            } else {
                let back: f64 = text.parse().map_err(|_| format!("{text} does not parse"))?;
                if back.to_bits() != f.to_bits() {
                    return Err(format!("{text} does not round-trip {f:e}"));
                }
                text.clone()
            }
        }
        (BaseEncoding::Float, 4) => {
            let f = f32::from_le_bytes(raw.try_into().unwrap());
            if f.is_nan() {
                "nan".into()
            } else {
                let back: f32 = text.parse().map_err(|_| format!("{text} does not parse"))?;
                if back.to_bits() != f.to_bits() {
                    return Err(format!("{text} does not round-trip {f:e}"));
                }
                text.clone()
            }
        }
        (BaseEncoding::Char, 1) if (0x20..0x7f).contains(&raw[0]) && raw[0] != b'\'' && raw[0] != b'\\' => {
            format!("'{}'", raw[0] as char)
        }
        _ => text.clone(),
    };
    if text != want {
        return Err(format!("{raw:?} as {enc:?}: {text} != {want}"));
    }
    Ok(())
}

/// Coverage counts on a bit-masked subset of the fixture's functions, doc
/// comments and examples: nesting plus agreement with plain set arithmetic.
pub fn check_report_subset(keep_src: u16, keep_doc: u16, keep_ex: u16) -> Result<(), String> {
    use iotrace::docgen::{extract_doc_comments, source_files};
    let kept = |mask: u16, i: usize| mask & (1 << (i % 16)) != 0;
    let lib = &super::traced().lib_dir;
    let source: BTreeSet<String> = super::index()
        .functions_under(lib)
        .into_iter()
        .enumerate()
        .filter(|(i, _)| kept(keep_src, *i))
        .map(|(_, s)| s.name.clone())
        .collect();
    let docs: BTreeMap<_, _> = extract_doc_comments(&source_files(lib).map_err(|e| e.to_string())?)
        .into_iter()
        .enumerate()
        .filter(|(i, _)| kept(keep_doc, *i))
        .map(|(_, kv)| kv)
        .collect();
    let examples: Vec<IOExample> = super::fixture_examples()
        .iter()
        .enumerate()
        .filter(|(i, _)| kept(keep_ex, *i))
        .map(|(_, e)| e.clone())
        .collect();
    let c = iotrace::cli::coverage("lib", &source, &docs, &examples);
    if !(c.with_examples <= c.documented && c.documented <= c.source) {
        return Err(format!("counts do not nest: {c:?}"));
    }
    let documented: BTreeSet<&String> = docs.keys().filter(|d| source.contains(*d)).collect();
    let with: BTreeSet<&str> = examples
        .iter()
        .map(|e| e.function())
        .filter(|f| documented.iter().any(|d| d == f))
        .collect();
    if (c.source, c.documented, c.with_examples) != (source.len(), documented.len(), with.len()) {
        return Err(format!("{c:?} disagrees with set arithmetic"));
    }
    Ok(())
}
