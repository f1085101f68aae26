//! System V AMD64 calling convention: where each argument lives at function
//! entry and where the return value lives at the return site.
//!
//! Arguments are classified per eightbyte into INTEGER or SSE classes;
//! aggregates larger than 16 bytes (or containing unaligned fields or x87
//! values) go to MEMORY and are passed on the stack.

use crate::model::{BaseEncoding, TypeId, TypeKind, TypeTable};

pub const INT_ARG_REGS: [&str; 6] = ["rdi", "rsi", "rdx", "rcx", "r8", "r9"];
pub const SSE_ARG_REGS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RegClass {
    Integer,
    Sse,
}

/// Argument register slot: index into the integer list (`rdi`..`r9`) or into
/// `xmm0`..`xmm7`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RegSlot {
    Int(u8),
    Sse(u8),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ArgLocation {
    /// One slot per eightbyte, lowest first.
    Registers(Vec<RegSlot>),
    /// Byte offset from the stack pointer at the entry instruction (the
    /// return address sits at offset 0).
    Stack { offset: u64 },
    Unsupported(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ReturnLocation {
    Void,
    /// Integer eightbytes come from `rax` then `rdx`, SSE ones from `xmm0`
    /// then `xmm1`.
    Registers(Vec<RegClass>),
    /// Hidden result pointer; `rax` holds it at the return site.
    Memory,
    /// `long double` in `st(0)`.
    X87,
    Unsupported(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Class {
    Regs(Vec<RegClass>),
    Memory,
    X87,
    Void,
    Unsupported(String),
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Leaf {
    None,
    Integer,
    Sse,
    X87,
    Memory,
}

fn merge(a: Leaf, b: Leaf) -> Leaf {
    use Leaf::*;
    match (a, b) {
        (x, y) if x == y => x,
        (None, x) | (x, None) => x,
        (Memory, _) | (_, Memory) => Memory,
        (Integer, _) | (_, Integer) => Integer,
        (X87, _) | (_, X87) => Memory,
        _ => Sse,
    }
}

/// Classifies a value of type `ty` for register passing.
pub fn classify(table: &TypeTable, ty: TypeId) -> Class {
    let Some(id) = table.try_resolve(ty) else {
        return Class::Unsupported("typedef cycle".into());
    };
    let desc = table.get(id);
    match &desc.kind {
        TypeKind::Void => Class::Void,
        TypeKind::Base(BaseEncoding::Float) => match desc.byte_size {
            4 | 8 => Class::Regs(vec![RegClass::Sse]),
            16 | 10 | 12 => Class::X87,
            n => Class::Unsupported(format!("{n}-byte float")),
        },
        TypeKind::Base(_) => match desc.byte_size {
            1..=8 => Class::Regs(vec![RegClass::Integer]),
            16 => Class::Regs(vec![RegClass::Integer, RegClass::Integer]),
            n => Class::Unsupported(format!("{n}-byte integer")),
        },
        TypeKind::Pointer { .. } | TypeKind::FunctionPointer | TypeKind::Enum { .. } => {
            Class::Regs(vec![RegClass::Integer])
        }
        TypeKind::Struct { .. } | TypeKind::Union { .. } | TypeKind::Array { .. } => {
            classify_aggregate(table, id)
        }
        TypeKind::Typedef { .. } => Class::Unsupported("typedef cycle".into()),
        TypeKind::Opaque { reason } => Class::Unsupported(reason.clone()),
    }
}

fn classify_aggregate(table: &TypeTable, id: TypeId) -> Class {
    let size = table.size_of(id);
    if size == 0 {
        return Class::Unsupported("zero-sized aggregate".into());
    }
    if size > 16 {
        return Class::Memory;
    }
    let mut words = vec![Leaf::None; size.div_ceil(8) as usize];
    if !leaves(table, id, 0, &mut words, 0) {
        return Class::Unsupported("unclassifiable member".into());
    }
    if words.iter().any(|w| *w == Leaf::Memory) {
        return Class::Memory;
    }
    Class::Regs(
        words
            .into_iter()
            .map(|w| match w {
                Leaf::Integer => RegClass::Integer,
                _ => RegClass::Sse,
            })
            .collect(),
    )
}

fn mark(words: &mut [Leaf], offset: u64, size: u64, leaf: Leaf) {
    let first = (offset / 8) as usize;
    let last = ((offset + size.max(1) - 1) / 8) as usize;
    for w in words.iter_mut().take(last + 1).skip(first) {
        *w = merge(*w, leaf);
    }
}

fn leaves(table: &TypeTable, ty: TypeId, offset: u64, words: &mut [Leaf], depth: u32) -> bool {
    if depth > 32 {
        return false;
    }
    let Some(id) = table.try_resolve(ty) else { return false };
    let desc = table.get(id);
    let align = table.align_of(id);
    if offset % align != 0 {
        mark(words, offset, desc.byte_size, Leaf::Memory);
        return true;
    }
    match &desc.kind {
        TypeKind::Base(BaseEncoding::Float) if desc.byte_size > 8 => {
            mark(words, offset, desc.byte_size, Leaf::X87)
        }
        TypeKind::Base(BaseEncoding::Float) => mark(words, offset, desc.byte_size, Leaf::Sse),
        TypeKind::Base(_) | TypeKind::Pointer { .. } | TypeKind::FunctionPointer | TypeKind::Enum { .. } => {
            mark(words, offset, desc.byte_size, Leaf::Integer)
        }
        TypeKind::Struct { members } | TypeKind::Union { members } => {
            for m in members {
                if m.bitfield {
                    mark(words, offset + m.byte_offset, 1, Leaf::Integer);
                } else if !leaves(table, m.ty, offset + m.byte_offset, words, depth + 1) {
                    return false;
                }
            }
        }
        TypeKind::Array { element, count } => {
            let elem_size = table.size_of(*element);
            let n = count.unwrap_or(0);
            for i in 0..n {
                if !leaves(table, *element, offset + i * elem_size, words, depth + 1) {
                    return false;
                }
            }
        }
        TypeKind::Void | TypeKind::Typedef { .. } | TypeKind::Opaque { .. } => return false,
    }
    true
}

/// Entry and exit locations for one function signature.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CallLayout {
    pub params: Vec<ArgLocation>,
    pub ret: ReturnLocation,
}

pub fn layout_call(table: &TypeTable, ret: Option<TypeId>, params: &[TypeId]) -> CallLayout {
    let ret = match ret.map(|t| classify(table, t)) {
        None | Some(Class::Void) => ReturnLocation::Void,
        Some(Class::Regs(c)) => ReturnLocation::Registers(c),
        Some(Class::Memory) => ReturnLocation::Memory,
        Some(Class::X87) => ReturnLocation::X87,
        Some(Class::Unsupported(why)) => ReturnLocation::Unsupported(why),
    };
    let mut next_int: u8 = if ret == ReturnLocation::Memory { 1 } else { 0 };
    let mut next_sse: u8 = 0;
    let mut stack: u64 = 8;
    let mut on_stack = |ty: TypeId| {
        let align = table.align_of(ty).max(8);
        stack = stack.next_multiple_of(align);
        let loc = ArgLocation::Stack { offset: stack };
        stack += table.size_of(ty).next_multiple_of(8);
        loc
    };
    let params = params
        .iter()
        .map(|&ty| match classify(table, ty) {
            Class::Regs(classes) => {
                let ints = classes.iter().filter(|c| **c == RegClass::Integer).count() as u8;
                let sses = classes.len() as u8 - ints;
                if next_int + ints as u8 <= INT_ARG_REGS.len() as u8 && next_sse + sses <= SSE_ARG_REGS as u8 {
                    let slots = classes
                        .iter()
                        .map(|c| match c {
                            RegClass::Integer => {
                                next_int += 1;
                                RegSlot::Int(next_int - 1)
                            }
                            RegClass::Sse => {
                                next_sse += 1;
                                RegSlot::Sse(next_sse - 1)
                            }
                        })
                        .collect();
                    ArgLocation::Registers(slots)
                } else {
                    on_stack(ty)
                }
            }
            Class::Memory | Class::X87 => on_stack(ty),
            Class::Void => ArgLocation::Unsupported("void parameter".into()),
            Class::Unsupported(why) => ArgLocation::Unsupported(why),
        })
        .collect();
    CallLayout { params, ret }
}
