//! Captured runtime values and their text rendering.

use serde::{Deserialize, Serialize};

use super::types::BaseEncoding;

/// Placeholder shown instead of a raw pointer address.
pub const MEMORY_ADDR: &str = "[memory addr.]";
pub const NULL_TEXT: &str = "NULL";
pub const UNREADABLE_TEXT: &str = "[unreadable]";
pub const FIRST_ITEM_NOTE: &str = "first item only";

/// A captured value tree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Value {
    Scalar {
        #[serde(with = "hex_bytes")]
        raw: Vec<u8>,
        text: String,
    },
    Enum {
        value: i64,
        name: String,
    },
    #[serde(rename = "cstring")]
    CString {
        text: String,
        truncated: bool,
    },
    Pointer {
        #[serde(flatten)]
        target: PointerTarget,
    },
    Struct {
        fields: Vec<Field>,
    },
    Union {
        #[serde(with = "hex_bytes")]
        raw: Vec<u8>,
        members: Vec<Field>,
    },
    ArrayHead {
        first: Box<Value>,
        note: String,
    },
    Opaque {
        #[serde(with = "hex_bytes")]
        raw: Vec<u8>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        note: Option<String>,
    },
    Void,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum PointerTarget {
    Null,
    Valid {
        #[serde(with = "hex_addr")]
        address: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pointee: Option<Box<Value>>,
    },
    Unreadable {
        #[serde(with = "hex_addr")]
        address: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub name: String,
    pub value: Value,
}

impl Field {
    pub fn new(name: impl Into<String>, value: Value) -> Self {
        Field { name: name.into(), value }
    }
}

impl Value {
    pub fn null() -> Self {
        Value::Pointer { target: PointerTarget::Null }
    }

    pub fn pointer(address: u64, pointee: Option<Value>) -> Self {
        Value::Pointer {
            target: PointerTarget::Valid { address, pointee: pointee.map(Box::new) },
        }
    }

    pub fn scalar(raw: Vec<u8>, encoding: BaseEncoding) -> Self {
        let text = render_scalar(&raw, encoding);
        Value::Scalar { raw, text }
    }

    pub fn array_head(first: Value) -> Self {
        Value::ArrayHead { first: Box::new(first), note: FIRST_ITEM_NOTE.to_string() }
    }

    pub fn opaque(raw: Vec<u8>, note: impl Into<String>) -> Self {
        Value::Opaque { raw, note: Some(note.into()) }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Value::Scalar { .. } => "scalar",
            Value::Enum { .. } => "enum",
            Value::CString { .. } => "cstring",
            Value::Pointer { .. } => "pointer",
            Value::Struct { .. } => "struct",
            Value::Union { .. } => "union",
            Value::ArrayHead { .. } => "array_head",
            Value::Opaque { .. } => "opaque",
            Value::Void => "void",
        }
    }

    /// Pointee of a valid pointer, if it was captured.
    pub fn pointee(&self) -> Option<&Value> {
        match self {
            Value::Pointer { target: PointerTarget::Valid { pointee, .. } } => pointee.as_deref(),
            _ => None,
        }
    }

    /// One-line text of the top level of this value, as shown in a table cell
    /// or a histogram bin. Pointers never show their address; a pointer to a
    /// captured C string shows the string.
    pub fn text(&self) -> String {
        match self {
            Value::Scalar { text, .. } => text.clone(),
            Value::Enum { name, .. } => name.clone(),
            Value::CString { text, truncated } => quote_string(text, *truncated),
            Value::Pointer { target } => match target {
                PointerTarget::Null => NULL_TEXT.to_string(),
                PointerTarget::Unreadable { .. } => UNREADABLE_TEXT.to_string(),
                PointerTarget::Valid { pointee, .. } => match pointee.as_deref() {
                    Some(s @ Value::CString { .. }) => s.text(),
                    _ => MEMORY_ADDR.to_string(),
                },
            },
            Value::Struct { .. } => "{struct}".to_string(),
            Value::Union { members, .. } => members
                .first()
                .map(|m| m.value.text())
                .unwrap_or_else(|| "{union}".to_string()),
            Value::ArrayHead { first, .. } => first.text(),
            Value::Opaque { .. } => "[opaque]".to_string(),
            Value::Void => "void".to_string(),
        }
    }

    /// Number of pointer hops along the deepest path of the tree.
    pub fn pointer_depth(&self) -> usize {
        match self {
            Value::Pointer { target: PointerTarget::Valid { pointee: Some(p), .. } } => {
                1 + p.pointer_depth()
            }
            Value::Struct { fields } | Value::Union { members: fields, .. } => {
                fields.iter().map(|f| f.value.pointer_depth()).max().unwrap_or(0)
            }
            Value::ArrayHead { first, .. } => first.pointer_depth(),
            _ => 0,
        }
    }

    /// True when two trees have the same variant structure (field names,
    /// nesting, pointer presence), ignoring the values themselves.
    pub fn same_shape(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::Struct { fields: a }, Value::Struct { fields: b })
            | (Value::Union { members: a, .. }, Value::Union { members: b, .. }) => {
                a.len() == b.len()
                    && a.iter().zip(b).all(|(x, y)| x.name == y.name && x.value.same_shape(&y.value))
            }
            (Value::ArrayHead { first: a, .. }, Value::ArrayHead { first: b, .. }) => a.same_shape(b),
            (Value::Pointer { .. }, Value::Pointer { .. }) => true,
            (a, b) => a.kind_name() == b.kind_name(),
        }
    }
}

/// Quotes and escapes a string the way C source would show it.
pub fn quote_string(text: &str, truncated: bool) -> String {
    let mut out = String::with_capacity(text.len() + 2);
    out.push('"');
    for c in text.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c if (c as u32) < 0x20 || c as u32 == 0x7f => {
                out.push_str(&format!("\\x{:02x}", c as u32))
            }
            c => out.push(c),
        }
    }
    out.push('"');
    if truncated {
        out.push_str("...");
    }
    out
}

/// Renders raw little-endian bytes of a base type. The result depends only
/// on `raw` and `encoding`.
pub fn render_scalar(raw: &[u8], encoding: BaseEncoding) -> String {
    match encoding {
        BaseEncoding::SignedInt => match raw.len() {
            1 | 2 | 4 | 8 => signed(raw).to_string(),
            16 => i128::from_le_bytes(widen::<16>(raw)).to_string(),
            _ => hex_fallback(raw),
        },
        BaseEncoding::UnsignedInt => match raw.len() {
            1 | 2 | 4 | 8 => unsigned(raw).to_string(),
            16 => u128::from_le_bytes(widen::<16>(raw)).to_string(),
            _ => hex_fallback(raw),
        },
        BaseEncoding::Bool => {
            if raw.iter().any(|&b| b != 0) {
                "true".to_string()
            } else {
                "false".to_string()
            }
        }
        BaseEncoding::Char => match raw.len() {
            1 => render_char(raw[0]),
            _ => unsigned(raw).to_string(),
        },
        BaseEncoding::Float => match raw.len() {
            4 => render_f32(f32::from_le_bytes(widen::<4>(raw))),
            8 => render_f64(f64::from_le_bytes(widen::<8>(raw))),
            // x87 extended precision, stored in 10 of 16 (or 12) bytes
            10 | 12 | 16 => render_f64(x87_to_f64(&raw[..10])),
            _ => hex_fallback(raw),
        },
    }
}

fn widen<const N: usize>(raw: &[u8]) -> [u8; N] {
    let mut buf = [0u8; N];
    let n = raw.len().min(N);
    buf[..n].copy_from_slice(&raw[..n]);
    buf
}

fn unsigned(raw: &[u8]) -> u64 {
    u64::from_le_bytes(widen::<8>(raw))
}

fn signed(raw: &[u8]) -> i64 {
    let bits = raw.len() * 8;
    let v = unsigned(raw);
    if bits >= 64 {
        v as i64
    } else {
        let shift = 64 - bits;
        ((v << shift) as i64) >> shift
    }
}

fn hex_fallback(raw: &[u8]) -> String {
    format!("0x{}", hex::encode(raw))
}

pub fn render_char(b: u8) -> String {
    match b {
        b'\'' => "'\\''".to_string(),
        b'\\' => "'\\\\'".to_string(),
        0x20..=0x7e => format!("'{}'", b as char),
        _ => format!("'\\x{b:02x}'"),
    }
}

fn special(v: f64) -> Option<&'static str> {
    if v.is_nan() {
        Some("nan")
    } else if v == f64::INFINITY {
        Some("inf")
    } else if v == f64::NEG_INFINITY {
        Some("-inf")
    } else {
        None
    }
}

/// Shortest text that parses back to the same `f64`.
pub fn render_f64(v: f64) -> String {
    if let Some(s) = special(v) {
        return s.to_string();
    }
    trim_float(format!("{v:?}"))
}

pub fn render_f32(v: f32) -> String {
    if let Some(s) = special(v as f64) {
        return s.to_string();
    }
    trim_float(format!("{v:?}"))
}

// `{:?}` prints integral floats as "4.0"; C tooling prints "4".
fn trim_float(s: String) -> String {
    match s.strip_suffix(".0") {
        Some(t) => t.to_string(),
        None => s,
    }
}

/// Converts an 80-bit x87 extended value to the nearest `f64`.
pub fn x87_to_f64(raw: &[u8]) -> f64 {
    let mantissa = u64::from_le_bytes(widen::<8>(&raw[..8]));
    let se = u16::from_le_bytes([raw[8], raw[9]]);
    let negative = se & 0x8000 != 0;
    let exp = (se & 0x7fff) as i32;
    let magnitude = if exp == 0x7fff {
        if mantissa << 1 == 0 {
            f64::INFINITY
        } else {
            f64::NAN
        }
    } else if mantissa == 0 {
        0.0
    } else {
        // value = mantissa * 2^(exp - 16383 - 63)
        let e = if exp == 0 { 1 - 16383 - 63 } else { exp - 16383 - 63 };
        (mantissa as f64) * 2f64.powi(e.max(-1074 - 64).min(1100))
    };
    if negative {
        -magnitude
    } else {
        magnitude
    }
}

pub(crate) mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        if s.bytes().any(|b| b.is_ascii_uppercase()) {
            return Err(serde::de::Error::custom("raw bytes must be lowercase hex"));
        }
        hex::decode(&s).map_err(serde::de::Error::custom)
    }
}

pub(crate) mod hex_addr {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(addr: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{addr:#x}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        let s = String::deserialize(d)?;
        let digits = s
            .strip_prefix("0x")
            .ok_or_else(|| serde::de::Error::custom("address must start with 0x"))?;
        u64::from_str_radix(digits, 16).map_err(serde::de::Error::custom)
    }
}

pub(crate) mod opt_hex_addr {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(addr: &Option<u64>, s: S) -> Result<S::Ok, S::Error> {
        match addr {
            Some(a) => super::hex_addr::serialize(a, s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<u64>, D::Error> {
        let s: Option<String> = Option::deserialize(d)?;
        s.map(|s| {
            s.strip_prefix("0x")
                .and_then(|h| u64::from_str_radix(h, 16).ok())
                .ok_or_else(|| serde::de::Error::custom("bad hex address"))
        })
        .transpose()
    }
}
