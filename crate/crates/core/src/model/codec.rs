//! JSONL encoding of trace sessions (`*.iotrace.jsonl`).
//!
//! Line 1 is a header object; every following line is one call record.
//! Records are written grouped by function name, then by call id.

use std::collections::HashSet;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::session::{CallRecord, ExitStatus, TraceSession};

pub const IOTRACE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("line {line}: malformed JSON: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("duplicate call id {id} for function `{function}`")]
    DuplicateCallId { function: String, id: u64 },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    iotrace_version: u32,
    target: String,
    argv: Vec<String>,
    exit_status: ExitStatus,
    word_size_bits: u32,
    tool_version: String,
    created_at: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    discarded: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    timed_out: bool,
}

pub fn encode_session<W: Write>(session: &TraceSession, mut out: W) -> io::Result<()> {
    let header = Header {
        iotrace_version: IOTRACE_VERSION,
        target: session.target.clone(),
        argv: session.argv.clone(),
        exit_status: session.exit_status.clone(),
        word_size_bits: session.word_size_bits,
        tool_version: session.tool_version.clone(),
        created_at: session.created_at.clone(),
        discarded: session.discarded,
        timed_out: session.timed_out,
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for record in session.records.values().flatten() {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn encode_to_string(session: &TraceSession) -> String {
    let mut buf = Vec::new();
    encode_session(session, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("JSON output is UTF-8")
}

fn classify(line: usize, err: serde_json::Error) -> DecodeError {
    use serde_json::error::Category;
    match err.classify() {
        Category::Data => DecodeError::SchemaViolation(format!("line {line}: {err}")),
        Category::Io => DecodeError::Io(err.into()),
        Category::Syntax | Category::Eof => {
            DecodeError::MalformedLine { line, message: err.to_string() }
        }
    }
}

pub fn decode_session<R: BufRead>(input: R) -> Result<TraceSession, DecodeError> {
    let mut lines = input.lines().enumerate().map(|(i, l)| (i + 1, l));
    let header: Header = loop {
        match lines.next() {
            None => return Err(DecodeError::SchemaViolation("missing header line".into())),
            Some((_, Ok(l))) if l.trim().is_empty() => continue,
            Some((n, Ok(l))) => break serde_json::from_str(&l).map_err(|e| classify(n, e))?,
            Some((_, Err(e))) => return Err(e.into()),
        }
    };
    if header.iotrace_version != IOTRACE_VERSION {
        return Err(DecodeError::SchemaViolation(format!(
            "unsupported iotrace_version {}",
            header.iotrace_version
        )));
    }
    let mut session = TraceSession {
        target: header.target,
        argv: header.argv,
        exit_status: header.exit_status,
        word_size_bits: header.word_size_bits,
        records: Default::default(),
        tool_version: header.tool_version,
        created_at: header.created_at,
        discarded: header.discarded,
        timed_out: header.timed_out,
    };
    let mut seen = HashSet::new();
    for (n, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: CallRecord = serde_json::from_str(&line).map_err(|e| classify(n, e))?;
        if !seen.insert((record.function.clone(), record.call_id)) {
            return Err(DecodeError::DuplicateCallId { function: record.function, id: record.call_id });
        }
        record
            .check()
            .map_err(|m| DecodeError::SchemaViolation(format!("line {n}: {m}")))?;
        session.push(record);
    }
    session.check().map_err(DecodeError::SchemaViolation)?;
    Ok(session)
}

pub fn decode_str(text: &str) -> Result<TraceSession, DecodeError> {
    decode_session(text.as_bytes())
}
