//! Per-variable value frequencies over every recorded call of a function,
//! with cross-filtering on one variable's value.
//!
//! Values are binned by their exact rendered text and taken at entry (plus
//! the return value). The viewer JSON carries the raw tuples so a client can
//! recompute any filter; this module is the reference implementation.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CallRecord, Value};
use crate::par::{self, Exec};

pub const VIEWER_VERSION: u32 = 1;
pub const RETURN: &str = "return";

const CHUNK: usize = 256;

#[derive(Debug, Error)]
pub enum AggregateError {
    #[error("no completed calls with values to chart")]
    EmptyInput,
    #[error("records belong to different functions ({0} and {1})")]
    MixedFunctions(String, String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("viewer JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported viewer_version {0}")]
    Version(u32),
    #[error("viewer JSON: tuple {call_id} does not cover the variable list")]
    RaggedTuple { call_id: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CallTuple {
    pub call_id: u64,
    /// One rendered value per variable, in variable order.
    pub values: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CallTupleSet {
    pub function: String,
    pub variables: Vec<String>,
    pub tuples: Vec<CallTuple>,
}

impl CallTupleSet {
    pub fn variable_index(&self, name: &str) -> Result<usize, AggregateError> {
        self.variables
            .iter()
            .position(|v| v == name)
            .ok_or_else(|| AggregateError::UnknownVariable(name.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bin {
    pub value: String,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub variable: String,
    /// Numeric order when every label is a number, else lexicographic.
    pub bins: Vec<Bin>,
}

impl Histogram {
    pub fn from_counts(variable: impl Into<String>, counts: HashMap<String, usize>) -> Self {
        let mut bins: Vec<Bin> = counts.into_iter().map(|(value, count)| Bin { value, count }).collect();
        sort_bins(&mut bins);
        Histogram { variable: variable.into(), bins }
    }

    pub fn count(&self, value: &str) -> usize {
        self.bins.iter().find(|b| b.value == value).map_or(0, |b| b.count)
    }

    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }

    pub fn support(&self) -> Vec<&str> {
        self.bins.iter().map(|b| b.value.as_str()).collect()
    }
}

fn sort_bins(bins: &mut [Bin]) {
    let numbers: Option<Vec<f64>> = bins.iter().map(|b| b.value.parse::<f64>().ok()).collect();
    match numbers {
        Some(_) => bins.sort_by(|x, y| {
            let (a, b) = (x.value.parse::<f64>().unwrap(), y.value.parse::<f64>().unwrap());
            a.partial_cmp(&b).unwrap_or(Ordering::Equal).then_with(|| x.value.cmp(&y.value))
        }),
        None => bins.sort_by(|x, y| x.value.cmp(&y.value)),
    }
}

/// Tuples over the completed records of one function. Variables are the
/// parameters in declaration order, then `return` for non-void functions.
pub fn build_tuples(records: &[CallRecord]) -> Result<CallTupleSet, AggregateError> {
    let done: Vec<&CallRecord> = records.iter().filter(|r| r.is_completed()).collect();
    let first = done.first().ok_or(AggregateError::EmptyInput)?;
    if let Some(other) = done.iter().find(|r| r.function != first.function) {
        return Err(AggregateError::MixedFunctions(first.function.clone(), other.function.clone()));
    }
    let has_return = first.return_value.as_ref().is_some_and(|v| *v != Value::Void);
    let mut variables: Vec<String> = first.inputs.iter().map(|p| p.name.clone()).collect();
    if has_return {
        variables.push(RETURN.to_string());
    }
    if variables.is_empty() {
        return Err(AggregateError::EmptyInput);
    }
    let tuples = done
        .iter()
        .map(|r| {
            let mut values: Vec<String> = r.inputs.iter().map(|p| p.value.text()).collect();
            if has_return {
                values.push(r.return_value.as_ref().map(Value::text).unwrap_or_default());
            }
            CallTuple { call_id: r.call_id, values }
        })
        .collect();
    Ok(CallTupleSet { function: first.function.clone(), variables, tuples })
}

fn count_into(exec: Exec, set: &CallTupleSet, keep: impl Fn(&CallTuple) -> bool + Sync) -> Vec<HashMap<String, usize>> {
    let n = set.variables.len();
    par::fold_chunks(
        exec,
        &set.tuples,
        CHUNK,
        || vec![HashMap::new(); n],
        |mut acc, t| {
            if keep(t) {
                for (i, v) in t.values.iter().enumerate() {
                    *acc[i].entry(v.clone()).or_insert(0) += 1;
                }
            }
            acc
        },
        |mut a, b| {
            for (x, y) in a.iter_mut().zip(b) {
                for (k, c) in y {
                    *x.entry(k).or_insert(0) += c;
                }
            }
            a
        },
    )
}

fn assemble(set: &CallTupleSet, counts: Vec<HashMap<String, usize>>) -> BTreeMap<String, Histogram> {
    set.variables
        .iter()
        .zip(counts)
        .map(|(v, c)| (v.clone(), Histogram::from_counts(v.clone(), c)))
        .collect()
}

pub fn histogram(set: &CallTupleSet, variable: &str) -> Result<Histogram, AggregateError> {
    let i = set.variable_index(variable)?;
    let mut counts = HashMap::new();
    for t in &set.tuples {
        *counts.entry(t.values[i].clone()).or_insert(0) += 1;
    }
    Ok(Histogram::from_counts(variable, counts))
}

/// Unfiltered histograms of every variable.
pub fn histograms(exec: Exec, set: &CallTupleSet) -> BTreeMap<String, Histogram> {
    assemble(set, count_into(exec, set, |_| true))
}

/// Histograms over only the tuples where `variable` equals `value`.
pub fn cofilter(exec: Exec, set: &CallTupleSet, variable: &str, value: &str) -> Result<BTreeMap<String, Histogram>, AggregateError> {
    let i = set.variable_index(variable)?;
    Ok(assemble(set, count_into(exec, set, |t| t.values[i] == value)))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ViewerTuple {
    call_id: u64,
    values: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ViewerFile {
    viewer_version: u32,
    function: String,
    variables: Vec<String>,
    tuples: Vec<ViewerTuple>,
    histograms: Vec<Histogram>,
}

/// Writes viewer JSON: the raw tuples plus precomputed unfiltered histograms
/// in variable order.
pub fn export_viewer_json<W: Write>(set: &CallTupleSet, out: W) -> Result<(), AggregateError> {
    let hist = histograms(Exec::Sequential, set);
    let file = ViewerFile {
        viewer_version: VIEWER_VERSION,
        function: set.function.clone(),
        variables: set.variables.clone(),
        tuples: set
            .tuples
            .iter()
            .map(|t| ViewerTuple {
                call_id: t.call_id,
                values: set.variables.iter().cloned().zip(t.values.iter().cloned()).collect(),
            })
            .collect(),
        histograms: set.variables.iter().map(|v| hist[v].clone()).collect(),
    };
    serde_json::to_writer_pretty(out, &file)?;
    Ok(())
}

/// Reads viewer JSON back into tuples and the histograms stored with them.
pub fn import_viewer_json<R: Read>(input: R) -> Result<(CallTupleSet, Vec<Histogram>), AggregateError> {
    let file: ViewerFile = serde_json::from_reader(input)?;
    if file.viewer_version != VIEWER_VERSION {
        return Err(AggregateError::Version(file.viewer_version));
    }
    let tuples = file
        .tuples
        .into_iter()
        .map(|t| {
            let values: Option<Vec<String>> = file.variables.iter().map(|v| t.values.get(v).cloned()).collect();
            match values {
                Some(values) if t.values.len() == file.variables.len() => Ok(CallTuple { call_id: t.call_id, values }),
                _ => Err(AggregateError::RaggedTuple { call_id: t.call_id }),
            }
        })
        .collect::<Result<_, _>>()?;
    Ok((CallTupleSet { function: file.function, variables: file.variables, tuples }, file.histograms))
}
