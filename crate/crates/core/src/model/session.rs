use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::value::{opt_hex_addr, Value};

pub const WORD_SIZE_BITS: u32 = 64;

/// A named parameter value inside a snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: Value,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Value) -> Self {
        Param { name: name.into(), value }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallStatus {
    Completed,
    /// The process terminated before the exit breakpoint fired.
    Interrupted,
}

/// One invocation of a watched function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub function: String,
    pub call_id: u64,
    pub status: CallStatus,
    pub inputs: Vec<Param>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub outputs: Vec<Param>,
    #[serde(rename = "return", default, skip_serializing_if = "Option::is_none")]
    pub return_value: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_hex_addr")]
    pub exit_pc: Option<u64>,
}

impl CallRecord {
    pub fn is_completed(&self) -> bool {
        self.status == CallStatus::Completed
    }

    /// Checks the per-record invariants; returns a description of the first
    /// violation.
    pub fn check(&self) -> Result<(), String> {
        if self.call_id == 0 {
            return Err(format!("{}: call_id must be positive", self.function));
        }
        match self.status {
            CallStatus::Interrupted => {
                if !self.outputs.is_empty() || self.return_value.is_some() {
                    return Err(format!(
                        "{}#{}: interrupted call carries outputs or a return value",
                        self.function, self.call_id
                    ));
                }
            }
            CallStatus::Completed => {
                let ins = self.inputs.iter().map(|p| &p.name);
                let outs = self.outputs.iter().map(|p| &p.name);
                if !ins.eq(outs) {
                    return Err(format!(
                        "{}#{}: input and output parameter lists differ",
                        self.function, self.call_id
                    ));
                }
                if self.return_value.is_none() {
                    return Err(format!(
                        "{}#{}: completed call lacks a return value",
                        self.function, self.call_id
                    ));
                }
            }
        }
        Ok(())
    }
}

/// How the traced process terminated.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExitStatus {
    Code(i32),
    Signal { signal: i32, name: String },
}

impl ExitStatus {
    pub fn success(&self) -> bool {
        matches!(self, ExitStatus::Code(0))
    }
}

impl fmt::Display for ExitStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExitStatus::Code(c) => write!(f, "exit code {c}"),
            ExitStatus::Signal { name, .. } => write!(f, "killed by {name}"),
        }
    }
}

/// All records from one run of one target binary.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceSession {
    pub target: String,
    pub argv: Vec<String>,
    pub exit_status: ExitStatus,
    pub word_size_bits: u32,
    /// Function name to records, ordered by ascending call id.
    pub records: BTreeMap<String, Vec<CallRecord>>,
    pub tool_version: String,
    /// ISO-8601 UTC.
    pub created_at: String,
    /// Records were dropped because the target failed.
    pub discarded: bool,
    /// The target was killed after exceeding its time budget.
    pub timed_out: bool,
}

impl TraceSession {
    pub fn new(target: impl Into<String>, argv: Vec<String>) -> Self {
        TraceSession {
            target: target.into(),
            argv,
            exit_status: ExitStatus::Code(0),
            word_size_bits: WORD_SIZE_BITS,
            records: BTreeMap::new(),
            tool_version: crate::TOOL_VERSION.to_string(),
            created_at: chrono::Utc::now().format("%Y-%m-%dT%H:%M:%SZ").to_string(),
            discarded: false,
            timed_out: false,
        }
    }

    /// Stable identifier used to attribute examples to this session.
    pub fn id(&self) -> String {
        let base = std::path::Path::new(&self.target)
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| self.target.clone());
        if self.argv.is_empty() {
            base
        } else {
            format!("{base} {}", self.argv.join(" "))
        }
    }

    pub fn record_count(&self) -> usize {
        self.records.values().map(Vec::len).sum()
    }

    pub fn push(&mut self, record: CallRecord) {
        self.records.entry(record.function.clone()).or_default().push(record);
    }

    /// Sorts every per-function list by call id.
    pub fn normalize(&mut self) {
        for list in self.records.values_mut() {
            list.sort_by_key(|r| r.call_id);
        }
    }

    /// Checks every session invariant.
    pub fn check(&self) -> Result<(), String> {
        if self.word_size_bits != WORD_SIZE_BITS {
            return Err(format!("unsupported word size {}", self.word_size_bits));
        }
        for (name, list) in &self.records {
            let mut prev = 0;
            for r in list {
                if &r.function != name {
                    return Err(format!("record for {} filed under {name}", r.function));
                }
                r.check()?;
                if r.call_id <= prev {
                    return Err(format!("{name}: call ids not strictly increasing at {}", r.call_id));
                }
                prev = r.call_id;
            }
        }
        Ok(())
    }
}

/// The single call chosen to document a function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IOExample {
    pub source_session: String,
    #[serde(flatten)]
    pub record: CallRecord,
}

impl IOExample {
    pub fn function(&self) -> &str {
        &self.record.function
    }
}
