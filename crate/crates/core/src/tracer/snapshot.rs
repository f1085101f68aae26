//! Turning raw registers and target memory into [`Value`] trees.

use std::collections::{HashMap, HashSet};

use crate::abi::{ArgLocation, RegClass, RegSlot, ReturnLocation};
use crate::debuginfo::{field_address, ParamSig};
use crate::model::{BaseEncoding, Field, Param, PointerTarget, TypeId, TypeKind, TypeTable, Value};

use super::TraceConfig;

const PAGE: u64 = 4096;

/// Read access to the traced address space.
pub trait MemoryReader {
    /// Reads exactly `len` bytes, or `None` if any of them is unmapped.
    fn read(&self, addr: u64, len: usize) -> Option<Vec<u8>>;

    /// Reads a NUL-terminated string of at most `cap` bytes. Returns the
    /// bytes before the NUL and whether the cap was hit first. `None` when
    /// not even the first byte is readable.
    fn read_cstring(&self, addr: u64, cap: usize) -> Option<(Vec<u8>, bool)> {
        let mut out = Vec::new();
        let mut at = addr;
        while out.len() < cap {
            let to_page_end = (PAGE - at % PAGE) as usize;
            let want = to_page_end.min(cap - out.len());
            let chunk = match self.read(at, want) {
                Some(c) => c,
                None => {
                    // Part of the chunk is unmapped: take what is readable.
                    let mut c = Vec::new();
                    while c.len() < want {
                        match self.read(at + c.len() as u64, 1) {
                            Some(b) => c.push(b[0]),
                            None => break,
                        }
                    }
                    if c.is_empty() {
                        return if at == addr { None } else { Some((out, false)) };
                    }
                    if !c.contains(&0) {
                        out.extend_from_slice(&c);
                        return Some((out, false));
                    }
                    c
                }
            };
            if let Some(nul) = chunk.iter().position(|&b| b == 0) {
                out.extend_from_slice(&chunk[..nul]);
                return Some((out, false));
            }
            out.extend_from_slice(&chunk);
            at += want as u64;
        }
        // The cap was reached; it only counts as truncation if no NUL follows.
        let truncated = self.read(at, 1).map(|b| b[0] != 0).unwrap_or(true);
        Some((out, truncated))
    }
}

/// Sparse in-memory address space for tests and offline replays.
#[derive(Clone, Debug, Default)]
pub struct FakeMemory {
    regions: Vec<(u64, Vec<u8>)>,
}

impl FakeMemory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn map(&mut self, addr: u64, bytes: impl Into<Vec<u8>>) -> &mut Self {
        self.regions.push((addr, bytes.into()));
        self
    }
}

impl MemoryReader for FakeMemory {
    fn read(&self, addr: u64, len: usize) -> Option<Vec<u8>> {
        self.regions.iter().find_map(|(base, bytes)| {
            let off = addr.checked_sub(*base)? as usize;
            let end = off.checked_add(len)?;
            (end <= bytes.len()).then(|| bytes[off..end].to_vec())
        })
    }
}

/// Where a value lives at the moment of the snapshot.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Location {
    /// Bytes already copied out of registers or the argument area.
    Inline(Vec<u8>),
    Address(u64),
}

/// The general-purpose and vector registers a snapshot needs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RegisterFile {
    pub rax: u64,
    pub rdx: u64,
    pub rsp: u64,
    pub rip: u64,
    /// rdi, rsi, rdx, rcx, r8, r9.
    pub int_args: [u64; 6],
    /// Low 16 bytes of xmm0 through xmm7.
    pub xmm: [[u8; 16]; 8],
    /// st(0) in its 80-bit form.
    pub st0: [u8; 10],
}

/// Snapshots one value, following pointers up to `config.max_deref_depth`.
pub fn snapshot_value(
    mem: &dyn MemoryReader,
    location: &Location,
    ty: TypeId,
    table: &TypeTable,
    config: &TraceConfig,
) -> Value {
    Walker { mem, table, config, visited: HashSet::new() }.value(location, ty, 0)
}

struct Walker<'a> {
    mem: &'a dyn MemoryReader,
    table: &'a TypeTable,
    config: &'a TraceConfig,
    visited: HashSet<u64>,
}

impl Walker<'_> {
    fn bytes(&self, loc: &Location, len: u64) -> Option<Vec<u8>> {
        match loc {
            Location::Inline(b) => {
                let mut b = b.clone();
                b.resize(len as usize, 0);
                Some(b)
            }
            Location::Address(a) => self.mem.read(*a, len as usize),
        }
    }

    fn sub(&self, loc: &Location, offset: u64, len: u64) -> Location {
        match loc {
            Location::Inline(b) => {
                let start = (offset as usize).min(b.len());
                let end = (start + len as usize).min(b.len());
                Location::Inline(b[start..end].to_vec())
            }
            Location::Address(a) => Location::Address(a + offset),
        }
    }

    fn value(&mut self, loc: &Location, ty: TypeId, hops: usize) -> Value {
        let id = self.table.resolve(ty);
        let desc = self.table.get(id);
        match &desc.kind {
            TypeKind::Void => return Value::Void,
            TypeKind::Opaque { reason } => {
                let raw = self.bytes(loc, desc.byte_size).unwrap_or_default();
                return Value::opaque(raw, reason.clone());
            }
            TypeKind::Typedef { .. } => return Value::opaque(Vec::new(), "cyclic typedef"),
            TypeKind::Array { element, .. } => {
                let elem = self.table.size_of(*element);
                let first = self.sub(loc, 0, elem);
                return Value::array_head(self.value(&first, *element, hops));
            }
            TypeKind::Struct { members } => {
                let fields = members
                    .iter()
                    .map(|m| {
                        let v = if m.bitfield {
                            Value::opaque(Vec::new(), "bitfield")
                        } else {
                            let size = self.table.size_of(m.ty);
                            let at = match loc {
                                Location::Address(a) => Location::Address(
                                    field_address(*a, desc, &m.name).expect("member of this struct"),
                                ),
                                inline => self.sub(inline, m.byte_offset, size),
                            };
                            self.value(&at, m.ty, hops)
                        };
                        Field::new(m.name.clone(), v)
                    })
                    .collect();
                return Value::Struct { fields };
            }
            _ => {}
        }
        let Some(raw) = self.bytes(loc, desc.byte_size) else {
            return Value::opaque(Vec::new(), "unreadable");
        };
        match &desc.kind {
            TypeKind::Base(enc) => Value::scalar(raw, *enc),
            TypeKind::Enum { enumerators, .. } => {
                let value = enum_value(&raw, self.enum_signed(id));
                let name = enumerators
                    .iter()
                    .find(|(_, v)| *v == value)
                    .map(|(n, _)| n.clone())
                    .unwrap_or_else(|| format!("unknown({value})"));
                Value::Enum { value, name }
            }
            TypeKind::Union { members } => {
                let inline = Location::Inline(raw.clone());
                let members = members
                    .iter()
                    .map(|m| {
                        let size = self.table.size_of(m.ty);
                        let at = self.sub(&inline, m.byte_offset, size);
                        Field::new(m.name.clone(), self.value(&at, m.ty, hops))
                    })
                    .collect();
                Value::Union { raw, members }
            }
            TypeKind::Pointer { pointee } => self.pointer(&raw, *pointee, hops),
            TypeKind::FunctionPointer => {
                let addr = word(&raw);
                if addr == 0 {
                    Value::null()
                } else {
                    Value::pointer(addr, None)
                }
            }
            _ => unreachable!("handled above"),
        }
    }

    fn enum_signed(&self, id: TypeId) -> bool {
        match &self.table.get(id).kind {
            TypeKind::Enum { underlying: Some(u), .. } => {
                matches!(self.table.resolved(*u).kind, TypeKind::Base(BaseEncoding::SignedInt))
            }
            TypeKind::Enum { enumerators, .. } => enumerators.iter().any(|(_, v)| *v < 0),
            _ => false,
        }
    }

    fn pointer(&mut self, raw: &[u8], pointee: TypeId, hops: usize) -> Value {
        let addr = word(raw);
        if addr == 0 {
            return Value::null();
        }
        if hops >= self.config.max_deref_depth || self.visited.contains(&addr) {
            return Value::pointer(addr, None);
        }
        if self.table.is_char_like(pointee) {
            return match self.mem.read_cstring(addr, self.config.string_cap_bytes) {
                Some((bytes, truncated)) => Value::pointer(
                    addr,
                    Some(Value::CString { text: String::from_utf8_lossy(&bytes).into_owned(), truncated }),
                ),
                None => unreadable(addr),
            };
        }
        let target = self.table.resolved(pointee);
        let size = match target.kind {
            TypeKind::Void | TypeKind::Opaque { .. } | TypeKind::Typedef { .. } => {
                return Value::pointer(addr, None)
            }
            TypeKind::Array { element, .. } => self.table.size_of(element),
            _ => target.byte_size,
        };
        if size == 0 {
            return Value::pointer(addr, None);
        }
        if self.mem.read(addr, 1).is_none() {
            return unreadable(addr);
        }
        self.visited.insert(addr);
        let v = self.value(&Location::Address(addr), pointee, hops + 1);
        // C cannot tell a pointer to one scalar from a pointer into an array.
        let v = match self.table.resolved(pointee).kind {
            TypeKind::Base(_) | TypeKind::Enum { .. } => Value::array_head(v),
            _ => v,
        };
        Value::pointer(addr, Some(v))
    }
}

fn unreadable(address: u64) -> Value {
    Value::Pointer { target: PointerTarget::Unreadable { address } }
}

fn word(raw: &[u8]) -> u64 {
    let mut b = [0u8; 8];
    let n = raw.len().min(8);
    b[..n].copy_from_slice(&raw[..n]);
    u64::from_le_bytes(b)
}

fn enum_value(raw: &[u8], signed: bool) -> i64 {
    let v = word(raw);
    let bits = raw.len().min(8) * 8;
    if bits == 0 || bits >= 64 {
        v as i64
    } else if signed {
        let shift = 64 - bits;
        ((v << shift) as i64) >> shift
    } else {
        (v & ((1u64 << bits) - 1)) as i64
    }
}

/// Copies each parameter's bytes out of registers or the stack argument area
/// at the entry instruction, where `regs.rsp` points at the return address.
pub fn entry_locations(
    mem: &dyn MemoryReader,
    regs: &RegisterFile,
    params: &[ParamSig],
    table: &TypeTable,
) -> Vec<Option<Location>> {
    params
        .iter()
        .map(|p| {
            let size = table.size_of(p.ty) as usize;
            match &p.location {
                ArgLocation::Registers(slots) => {
                    let mut bytes = Vec::with_capacity(slots.len() * 8);
                    for slot in slots {
                        match *slot {
                            RegSlot::Int(i) => bytes.extend_from_slice(&regs.int_args[i as usize].to_le_bytes()),
                            RegSlot::Sse(i) => bytes.extend_from_slice(&regs.xmm[i as usize][..8]),
                        }
                    }
                    bytes.truncate(size);
                    Some(Location::Inline(bytes))
                }
                ArgLocation::Stack { offset } => mem.read(regs.rsp + offset, size).map(Location::Inline),
                ArgLocation::Unsupported(_) => None,
            }
        })
        .collect()
}

/// Snapshots every parameter from the locations captured at entry. At exit
/// the same inline bytes are re-used while pointees are read from current
/// memory.
pub fn snapshot_params(
    mem: &dyn MemoryReader,
    params: &[ParamSig],
    locations: &[Option<Location>],
    table: &TypeTable,
    config: &TraceConfig,
) -> Vec<Param> {
    params
        .iter()
        .zip(locations)
        .map(|(p, loc)| {
            let value = match (loc, &p.location) {
                (Some(loc), _) => snapshot_value(mem, loc, p.ty, table, config),
                (None, ArgLocation::Unsupported(why)) => Value::opaque(Vec::new(), why.clone()),
                (None, _) => Value::opaque(Vec::new(), "unreadable argument slot"),
            };
            Param::new(p.name.clone(), value)
        })
        .collect()
}

/// Reads the return value at the return site of a completed call.
pub fn read_return_value(
    mem: &dyn MemoryReader,
    regs: &RegisterFile,
    return_type: TypeId,
    location: &ReturnLocation,
    table: &TypeTable,
    config: &TraceConfig,
) -> Value {
    let size = table.size_of(return_type) as usize;
    let loc = match location {
        ReturnLocation::Void => return Value::Void,
        ReturnLocation::Registers(classes) => {
            let (mut ints, mut sses) = ([regs.rax, regs.rdx].into_iter(), regs.xmm.iter());
            let mut bytes = Vec::with_capacity(16);
            for c in classes {
                match c {
                    RegClass::Integer => bytes.extend_from_slice(&ints.next().unwrap_or(0).to_le_bytes()),
                    RegClass::Sse => bytes.extend_from_slice(&sses.next().map(|x| x[..8].to_vec()).unwrap_or_default()),
                }
            }
            bytes.truncate(size);
            Location::Inline(bytes)
        }
        // The callee hands the hidden result pointer back in rax.
        ReturnLocation::Memory => Location::Address(regs.rax),
        ReturnLocation::X87 => Location::Inline(regs.st0.to_vec()),
        ReturnLocation::Unsupported(why) => return Value::opaque(Vec::new(), why.clone()),
    };
    snapshot_value(mem, &loc, return_type, table, config)
}

/// Call counters handing out ids 1, 2, 3, ... per function.
#[derive(Debug, Default)]
pub struct CallIds(HashMap<String, u64>);

impl CallIds {
    pub fn next(&mut self, function: &str) -> u64 {
        let n = self.0.entry(function.to_string()).or_insert(0);
        *n += 1;
        *n
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Member, TypeDesc, NULL_TEXT};

    struct Types {
        t: TypeTable,
        int: TypeId,
        uint: TypeId,
        ch: TypeId,
        charp: TypeId,
        bprint: TypeId,
        bprintp: TypeId,
        node: TypeId,
        nodep: TypeId,
    }

    fn types() -> Types {
        let mut t = TypeTable::new();
        let int = t.push(TypeDesc::new("int", 4, TypeKind::Base(BaseEncoding::SignedInt)));
        let uint = t.push(TypeDesc::new("unsigned int", 4, TypeKind::Base(BaseEncoding::UnsignedInt)));
        let ch = t.push(TypeDesc::new("char", 1, TypeKind::Base(BaseEncoding::Char)));
        let charp = t.push(TypeDesc::new("", 8, TypeKind::Pointer { pointee: ch }));
        let arr = t.push(TypeDesc::new("", 1, TypeKind::Array { element: ch, count: Some(1) }));
        let m = |name: &str, off, ty| Member { name: name.into(), byte_offset: off, ty, bitfield: false };
        let bprint = t.push(TypeDesc::new(
            "BPrint",
            24,
            TypeKind::Struct {
                members: vec![
                    m("str", 0, charp),
                    m("len", 8, uint),
                    m("size", 12, uint),
                    m("size_max", 16, uint),
                    m("reserved_internal_buffer", 20, arr),
                ],
            },
        ));
        let bprintp = t.push(TypeDesc::new("", 8, TypeKind::Pointer { pointee: bprint }));
        let node = t.push(TypeDesc::new("Node", 16, TypeKind::Opaque { reason: "placeholder".into() }));
        let nodep = t.push(TypeDesc::new("", 8, TypeKind::Pointer { pointee: node }));
        t.set(node, TypeDesc::new("Node", 16, TypeKind::Struct { members: vec![m("value", 0, int), m("next", 8, nodep)] }));
        Types { t, int, uint, ch, charp, bprint, bprintp, node, nodep }
    }

    fn cfg() -> TraceConfig {
        TraceConfig::new(["f"])
    }

    fn bprint_bytes(str_addr: u64, len: u32) -> Vec<u8> {
        let mut b = str_addr.to_le_bytes().to_vec();
        for v in [len, 64, 64] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b.extend_from_slice(&[0, 0, 0, 0]);
        b
    }

    #[test]
    fn null_char_pointer() {
        let ty = types();
        let v = snapshot_value(&FakeMemory::new(), &Location::Inline(vec![0; 8]), ty.charp, &ty.t, &cfg());
        assert_eq!(v, Value::null());
        assert_eq!(v.text(), NULL_TEXT);
    }

    #[test]
    fn bprint_string_changes_between_snapshots() {
        let ty = types();
        let (bp, buf) = (0x7000u64, 0x8000u64);
        let loc = Location::Inline(bp.to_le_bytes().to_vec());
        let mut before = FakeMemory::new();
        before.map(bp, bprint_bytes(buf, 0)).map(buf, vec![0u8; 64]);
        let mut after = FakeMemory::new();
        let mut s = b"stereo".to_vec();
        s.resize(64, 0);
        after.map(bp, bprint_bytes(buf, 6)).map(buf, s);

        let get_str = |v: &Value| match v.pointee() {
            Some(Value::Struct { fields }) => fields[0].value.text(),
            other => panic!("{other:?}"),
        };
        let v0 = snapshot_value(&before, &loc, ty.bprintp, &ty.t, &cfg());
        let v1 = snapshot_value(&after, &loc, ty.bprintp, &ty.t, &cfg());
        assert_eq!(get_str(&v0), "\"\"");
        assert_eq!(get_str(&v1), "\"stereo\"");
        assert!(v0.same_shape(&v1));
        assert_eq!(v0.pointer_depth(), 2);
    }

    #[test]
    fn embedded_array_yields_first_item() {
        let ty = types();
        let mut mem = FakeMemory::new();
        mem.map(0x100, bprint_bytes(0, 0));
        let v = snapshot_value(&mem, &Location::Address(0x100), ty.bprint, &ty.t, &cfg());
        let Value::Struct { fields } = v else { panic!() };
        assert_eq!(fields[4].value, Value::array_head(Value::scalar(vec![0], BaseEncoding::Char)));
        assert_eq!(fields[0].value, Value::null());
    }

    #[test]
    fn int_pointer_is_array_head() {
        let ty = types();
        let mut t = ty.t.clone();
        let intp = t.push(TypeDesc::new("", 8, TypeKind::Pointer { pointee: ty.int }));
        let mut mem = FakeMemory::new();
        mem.map(0x500, [7i32, 8, 9].iter().flat_map(|v| v.to_le_bytes()).collect::<Vec<_>>());
        let v = snapshot_value(&mem, &Location::Inline(0x500u64.to_le_bytes().to_vec()), intp, &t, &cfg());
        assert_eq!(v.pointee(), Some(&Value::array_head(Value::scalar(7i32.to_le_bytes().to_vec(), BaseEncoding::SignedInt))));
    }

    #[test]
    fn cycles_are_cut() {
        let ty = types();
        let (a, b) = (0x1000u64, 0x2000u64);
        let node = |v: i32, next: u64| {
            let mut x = v.to_le_bytes().to_vec();
            x.extend([0; 4]);
            x.extend(next.to_le_bytes());
            x
        };
        let mut mem = FakeMemory::new();
        mem.map(a, node(1, b)).map(b, node(2, a));
        let mut config = cfg();
        config.max_deref_depth = 10;
        let v = snapshot_value(&mem, &Location::Inline(a.to_le_bytes().to_vec()), ty.nodep, &ty.t, &config);
        // a -> b -> (a again: no pointee)
        assert_eq!(v.pointer_depth(), 2);
        let _ = ty.node;
    }

    #[test]
    fn depth_limit_holds() {
        let ty = types();
        let mut mem = FakeMemory::new();
        let node = |v: i32, next: u64| {
            let mut x = v.to_le_bytes().to_vec();
            x.extend([0; 4]);
            x.extend(next.to_le_bytes());
            x
        };
        for i in 0..10u64 {
            mem.map(0x1000 * (i + 1), node(i as i32, 0x1000 * (i + 2)));
        }
        for depth in 1..6 {
            let mut config = cfg();
            config.max_deref_depth = depth;
            let v = snapshot_value(&mem, &Location::Inline(0x1000u64.to_le_bytes().to_vec()), ty.nodep, &ty.t, &config);
            assert_eq!(v.pointer_depth(), depth);
        }
    }

    #[test]
    fn unreadable_pointer() {
        let ty = types();
        let v = snapshot_value(&FakeMemory::new(), &Location::Inline(0xdeadu64.to_le_bytes().to_vec()), ty.bprintp, &ty.t, &cfg());
        assert_eq!(v, Value::Pointer { target: PointerTarget::Unreadable { address: 0xdead } });
    }

    #[test]
    fn string_cap_sets_truncated() {
        let ty = types();
        let mut mem = FakeMemory::new();
        mem.map(0x10, b"abcdef\0".to_vec());
        let loc = Location::Inline(0x10u64.to_le_bytes().to_vec());
        let mut config = cfg();
        for (cap, text, truncated) in [(3, "abc", true), (6, "abcdef", false), (100, "abcdef", false)] {
            config.string_cap_bytes = cap;
            let v = snapshot_value(&mem, &loc, ty.charp, &ty.t, &config);
            assert_eq!(v.pointee(), Some(&Value::CString { text: text.into(), truncated }), "cap {cap}");
        }
    }

    #[test]
    fn string_crossing_into_unmapped_memory() {
        let ty = types();
        let mut mem = FakeMemory::new();
        mem.map(4096 - 3, b"xyz".to_vec());
        let loc = Location::Inline((4096u64 - 3).to_le_bytes().to_vec());
        let v = snapshot_value(&mem, &loc, ty.charp, &ty.t, &cfg());
        assert_eq!(v.pointee(), Some(&Value::CString { text: "xyz".into(), truncated: false }));
    }

    #[test]
    fn enums_and_unions() {
        let ty = types();
        let mut t = ty.t.clone();
        let kind = t.push(TypeDesc::new(
            "NumKind",
            4,
            TypeKind::Enum { underlying: Some(ty.uint), enumerators: vec![("NUM_INT".into(), 0), ("NUM_REAL".into(), 1)] },
        ));
        let v = snapshot_value(&FakeMemory::new(), &Location::Inline(vec![1, 0, 0, 0]), kind, &t, &cfg());
        assert_eq!(v, Value::Enum { value: 1, name: "NUM_REAL".into() });
        let v = snapshot_value(&FakeMemory::new(), &Location::Inline(vec![5, 0, 0, 0]), kind, &t, &cfg());
        assert_eq!(v.text(), "unknown(5)");

        let f = t.push(TypeDesc::new("float", 4, TypeKind::Base(BaseEncoding::Float)));
        let m = |name: &str, ty| Member { name: name.into(), byte_offset: 0, ty, bitfield: false };
        let u = t.push(TypeDesc::new("Number", 4, TypeKind::Union { members: vec![m("i", ty.int), m("f", f)] }));
        let v = snapshot_value(&FakeMemory::new(), &Location::Inline(1.5f32.to_le_bytes().to_vec()), u, &t, &cfg());
        let Value::Union { members, .. } = &v else { panic!() };
        assert_eq!(members[1].value.text(), "1.5");
        assert_eq!(members[0].value.text(), 1.5f32.to_bits().to_string());
        let _ = ty.ch;
    }

    #[test]
    fn return_values_by_class() {
        let ty = types();
        let mut t = ty.t.clone();
        let d = t.push(TypeDesc::new("double", 8, TypeKind::Base(BaseEncoding::Float)));
        let m = |name: &str, off, ty| Member { name: name.into(), byte_offset: off, ty, bitfield: false };
        let point = t.push(TypeDesc::new("Point", 8, TypeKind::Struct { members: vec![m("x", 0, ty.int), m("y", 4, ty.int)] }));
        let mut regs = RegisterFile::default();
        regs.rax = (3u64) | ((-4i32 as u32 as u64) << 32);
        regs.xmm[0][..8].copy_from_slice(&10.0f64.to_le_bytes());
        let mem = FakeMemory::new();
        let cls = |c: Vec<RegClass>| ReturnLocation::Registers(c);

        let p = read_return_value(&mem, &regs, point, &cls(vec![RegClass::Integer]), &t, &cfg());
        let Value::Struct { fields } = p else { panic!() };
        assert_eq!((fields[0].value.text(), fields[1].value.text()), ("3".into(), "-4".into()));
        let v = read_return_value(&mem, &regs, d, &cls(vec![RegClass::Sse]), &t, &cfg());
        assert_eq!(v.text(), "10");
        assert_eq!(read_return_value(&mem, &regs, d, &ReturnLocation::Void, &t, &cfg()), Value::Void);
    }
}
