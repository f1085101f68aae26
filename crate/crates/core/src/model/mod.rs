//! Shared domain types: C type descriptions, captured values, call records
//! and trace sessions, plus the JSONL trace file encoding.

mod codec;
mod session;
mod types;
mod value;

pub use codec::{decode_session, decode_str, encode_session, encode_to_string, DecodeError, IOTRACE_VERSION};
pub use session::{CallRecord, CallStatus, ExitStatus, IOExample, Param, TraceSession, WORD_SIZE_BITS};
pub use types::{BaseEncoding, Member, Qualifiers, TypeDesc, TypeError, TypeId, TypeKind, TypeTable};
pub use value::{
    quote_string, render_char, render_f32, render_f64, render_scalar, x87_to_f64, Field, PointerTarget,
    Value, FIRST_ITEM_NOTE, MEMORY_ADDR, NULL_TEXT, UNREADABLE_TEXT,
};
