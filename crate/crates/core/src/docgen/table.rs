//! Flattening a before/after value pair into indented table rows.

use thiserror::Error;

use crate::model::{Field, IOExample, PointerTarget, Value, FIRST_ITEM_NOTE};

/// Shown in the "before" cells of the return value.
pub const NO_VALUE: &str = "\u{2014}";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IOTableRow {
    /// Access path, e.g. `bp->str` or `vals[0]`.
    pub path: String,
    /// What the name cell shows.
    pub display: String,
    pub depth: usize,
    pub before: String,
    pub after: String,
    pub collapsible: bool,
    pub parent: Option<usize>,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("{path}: before and after values differ in shape ({before} vs {after})")]
pub struct ShapeMismatch {
    pub path: String,
    pub before: String,
    pub after: String,
}

/// One column of a row: a value, or the text to show in its absence.
#[derive(Clone, Copy)]
enum Side<'a> {
    Value(&'a Value),
    Missing(&'static str),
}

impl<'a> Side<'a> {
    fn text(self) -> String {
        match self {
            Side::Value(v) => v.text(),
            Side::Missing(t) => t.to_string(),
        }
    }

    fn value(self) -> Option<&'a Value> {
        match self {
            Side::Value(v) => Some(v),
            Side::Missing(_) => None,
        }
    }

    fn children(self, path: &str) -> Vec<(String, &'a Value)> {
        self.value().map(|v| child_values(v, path)).unwrap_or_default()
    }

    /// The side of a child row that this side has no value for.
    fn child_missing(self) -> Side<'static> {
        match self {
            Side::Missing(t) => Side::Missing(t),
            Side::Value(_) => Side::Missing(""),
        }
    }
}

/// Rows for every parameter in declaration order, then `return` unless the
/// function returns void.
pub fn flatten_example(example: &IOExample) -> Result<Vec<IOTableRow>, ShapeMismatch> {
    let r = &example.record;
    let mut rows = Vec::new();
    for (i, input) in r.inputs.iter().enumerate() {
        let after = r.outputs.get(i).map_or(Side::Missing(""), |p| Side::Value(&p.value));
        emit(&mut rows, &input.name, Side::Value(&input.value), after, 0, None)?;
    }
    if let Some(ret) = &r.return_value {
        if *ret != Value::Void {
            emit(&mut rows, "return", Side::Missing(NO_VALUE), Side::Value(ret), 0, None)?;
        }
    }
    Ok(rows)
}

fn head(s: Side<'_>) -> Option<Side<'_>> {
    match s {
        Side::Value(Value::ArrayHead { first, .. }) => Some(Side::Value(first)),
        _ => None,
    }
}

fn pick<'a>(list: &[(String, &'a Value)], path: &str, side: Side<'a>) -> Side<'a> {
    list.iter()
        .find(|(q, _)| q == path)
        .map_or(side.child_missing(), |(_, v)| Side::Value(*v))
}

fn emit<'a>(
    rows: &mut Vec<IOTableRow>,
    path: &str,
    before: Side<'a>,
    after: Side<'a>,
    depth: usize,
    parent: Option<usize>,
) -> Result<(), ShapeMismatch> {
    if let (Some(b), Some(a)) = (before.value(), after.value()) {
        if !b.same_shape(a) {
            return Err(ShapeMismatch { path: path.into(), before: b.kind_name().into(), after: a.kind_name().into() });
        }
    }
    let (hb, ha) = (head(before), head(after));
    if hb.is_some() || ha.is_some() {
        // An array head stands for its first element; the row names it.
        let first_row = rows.len();
        emit(rows, &format!("{path}[0]"), hb.unwrap_or(before), ha.unwrap_or(after), depth, parent)?;
        rows[first_row].display = format!("{path}[0] ({FIRST_ITEM_NOTE})");
        return Ok(());
    }

    let me = rows.len();
    rows.push(IOTableRow {
        path: path.into(),
        display: path.into(),
        depth,
        before: before.text(),
        after: after.text(),
        collapsible: false,
        parent,
    });
    let (cb, ca) = (before.children(path), after.children(path));
    let mut order: Vec<&str> = cb.iter().map(|(p, _)| p.as_str()).collect();
    for (p, _) in &ca {
        if !order.contains(&p.as_str()) {
            order.push(p);
        }
    }
    for p in order {
        let (b, a) = (pick(&cb, p, before), pick(&ca, p, after));
        emit(rows, p, b, a, depth + 1, Some(me))?;
    }
    rows[me].collapsible = rows.len() > me + 1;
    Ok(())
}

/// Child rows of a value: struct fields, union interpretations after the
/// first, and the pointee of a pointer unless it is a string.
fn child_values<'a>(v: &'a Value, path: &str) -> Vec<(String, &'a Value)> {
    let named = |sep: &str, fields: &'a [Field], skip: usize| {
        fields
            .iter()
            .skip(skip)
            .map(|f| (format!("{path}{sep}{}", f.name), &f.value))
            .collect::<Vec<_>>()
    };
    match v {
        Value::Struct { fields } => named(".", fields, 0),
        Value::Union { members, .. } => named(".", members, 1),
        Value::Pointer { target: PointerTarget::Valid { pointee: Some(p), .. } } => match &**p {
            Value::CString { .. } => Vec::new(),
            Value::Struct { fields } => named("->", fields, 0),
            Value::Union { members, .. } => named("->", members, 0),
            Value::ArrayHead { .. } => vec![(path.to_string(), &**p)],
            other => vec![(format!("*{path}"), other)],
        },
        _ => Vec::new(),
    }
}
