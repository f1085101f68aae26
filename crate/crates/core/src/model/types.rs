//! C type vocabulary shared by the debug-info reader and the value snapshotter.
//!
//! Types live in a [`TypeTable`] arena and refer to each other by [`TypeId`],
//! so self-referential structs (`struct node { struct node *next; }`) are
//! representable without reference cycles.

use std::collections::HashSet;
use std::fmt;

/// Index of a type inside a [`TypeTable`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TypeId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BaseEncoding {
    SignedInt,
    UnsignedInt,
    Float,
    Bool,
    Char,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Qualifiers {
    pub is_const: bool,
    pub is_volatile: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Member {
    pub name: String,
    pub byte_offset: u64,
    pub ty: TypeId,
    /// Sub-byte members are not decoded; they capture as opaque.
    pub bitfield: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum TypeKind {
    Base(BaseEncoding),
    Pointer { pointee: TypeId },
    Struct { members: Vec<Member> },
    Union { members: Vec<Member> },
    Enum { underlying: Option<TypeId>, enumerators: Vec<(String, i64)> },
    Array { element: TypeId, count: Option<u64> },
    Typedef { target: TypeId },
    Void,
    FunctionPointer,
    Opaque { reason: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TypeDesc {
    pub name: String,
    pub byte_size: u64,
    pub kind: TypeKind,
    pub qualifiers: Qualifiers,
}

impl TypeDesc {
    pub fn new(name: impl Into<String>, byte_size: u64, kind: TypeKind) -> Self {
        TypeDesc {
            name: name.into(),
            byte_size,
            kind,
            qualifiers: Qualifiers::default(),
        }
    }

    pub fn opaque(reason: impl Into<String>) -> Self {
        TypeDesc::new("", 0, TypeKind::Opaque { reason: reason.into() })
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            TypeKind::Base(_) => "base",
            TypeKind::Pointer { .. } => "pointer",
            TypeKind::Struct { .. } => "struct",
            TypeKind::Union { .. } => "union",
            TypeKind::Enum { .. } => "enum",
            TypeKind::Array { .. } => "array",
            TypeKind::Typedef { .. } => "typedef",
            TypeKind::Void => "void",
            TypeKind::FunctionPointer => "function_pointer",
            TypeKind::Opaque { .. } => "opaque",
        }
    }

    pub fn members(&self) -> &[Member] {
        match &self.kind {
            TypeKind::Struct { members } | TypeKind::Union { members } => members,
            _ => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TypeError {
    /// A struct member extends past the end of its struct.
    MemberOverflow { ty: String, member: String },
    DuplicateEnumerator { ty: String, name: String },
    TypedefCycle(TypeId),
    PointerSize { ty: TypeId, size: u64 },
    DanglingId(TypeId),
}

impl fmt::Display for TypeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeError::MemberOverflow { ty, member } => {
                write!(f, "member `{member}` overflows `{ty}`")
            }
            TypeError::DuplicateEnumerator { ty, name } => {
                write!(f, "enumerator `{name}` repeated in `{ty}`")
            }
            TypeError::TypedefCycle(id) => write!(f, "typedef cycle through type #{}", id.0),
            TypeError::PointerSize { ty, size } => {
                write!(f, "pointer type #{} has size {size}", ty.0)
            }
            TypeError::DanglingId(id) => write!(f, "reference to missing type #{}", id.0),
        }
    }
}

impl std::error::Error for TypeError {}

/// Arena of [`TypeDesc`]s.
#[derive(Clone, Debug, Default)]
pub struct TypeTable {
    types: Vec<TypeDesc>,
    void: Option<TypeId>,
}

impl TypeTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, desc: TypeDesc) -> TypeId {
        let id = TypeId(self.types.len() as u32);
        self.types.push(desc);
        id
    }

    /// Replaces a previously reserved slot.
    pub fn set(&mut self, id: TypeId, desc: TypeDesc) {
        self.types[id.0 as usize] = desc;
    }

    pub fn get(&self, id: TypeId) -> &TypeDesc {
        &self.types[id.0 as usize]
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    /// Shared `void` entry, created on first use.
    pub fn void(&mut self) -> TypeId {
        if let Some(id) = self.void {
            return id;
        }
        let id = self.push(TypeDesc::new("void", 0, TypeKind::Void));
        self.void = Some(id);
        id
    }

    /// Follows typedef links to the underlying type. A cyclic chain resolves
    /// to `None`.
    pub fn try_resolve(&self, mut id: TypeId) -> Option<TypeId> {
        let mut seen = HashSet::new();
        while let TypeKind::Typedef { target } = self.get(id).kind {
            if !seen.insert(id) {
                return None;
            }
            id = target;
        }
        Some(id)
    }

    /// Like [`try_resolve`](Self::try_resolve), but a cyclic chain yields the
    /// typedef itself; callers then see a `Typedef` kind and treat it as opaque.
    pub fn resolve(&self, id: TypeId) -> TypeId {
        self.try_resolve(id).unwrap_or(id)
    }

    pub fn resolved(&self, id: TypeId) -> &TypeDesc {
        self.get(self.resolve(id))
    }

    /// Size in bytes after typedef resolution.
    pub fn size_of(&self, id: TypeId) -> u64 {
        self.resolved(id).byte_size
    }

    /// Natural alignment, as the C ABI lays the type out.
    pub fn align_of(&self, id: TypeId) -> u64 {
        self.align_inner(id, &mut HashSet::new())
    }

    fn align_inner(&self, id: TypeId, seen: &mut HashSet<TypeId>) -> u64 {
        if !seen.insert(id) {
            return 1;
        }
        let desc = self.get(id);
        let a = match &desc.kind {
            TypeKind::Base(_) | TypeKind::Enum { .. } | TypeKind::Pointer { .. } => {
                desc.byte_size.clamp(1, 16)
            }
            TypeKind::FunctionPointer => 8,
            TypeKind::Struct { members } | TypeKind::Union { members } => members
                .iter()
                .map(|m| self.align_inner(m.ty, seen))
                .max()
                .unwrap_or(1),
            TypeKind::Array { element, .. } => self.align_inner(*element, seen),
            TypeKind::Typedef { target } => self.align_inner(*target, seen),
            TypeKind::Void | TypeKind::Opaque { .. } => 1,
        };
        seen.remove(&id);
        a.max(1)
    }

    /// True for `char`, `signed char` and `unsigned char`, the pointee types
    /// that are read as C strings.
    pub fn is_char_like(&self, id: TypeId) -> bool {
        let desc = self.resolved(id);
        match desc.kind {
            TypeKind::Base(BaseEncoding::Char) => true,
            TypeKind::Base(BaseEncoding::SignedInt | BaseEncoding::UnsignedInt) => {
                desc.byte_size == 1 && desc.name.contains("char")
            }
            _ => false,
        }
    }

    /// Checks the structural invariants of every type in the table.
    pub fn validate(&self, word_size: u64) -> Result<(), TypeError> {
        for (i, desc) in self.types.iter().enumerate() {
            let id = TypeId(i as u32);
            let check = |t: TypeId| {
                if (t.0 as usize) < self.types.len() {
                    Ok(())
                } else {
                    Err(TypeError::DanglingId(t))
                }
            };
            match &desc.kind {
                TypeKind::Struct { members } => {
                    for m in members {
                        check(m.ty)?;
                        let size = if m.bitfield { 0 } else { self.size_of(m.ty) };
                        if m.byte_offset + size > desc.byte_size {
                            return Err(TypeError::MemberOverflow {
                                ty: desc.name.clone(),
                                member: m.name.clone(),
                            });
                        }
                    }
                }
                TypeKind::Union { members } => {
                    for m in members {
                        check(m.ty)?;
                    }
                }
                TypeKind::Enum { enumerators, underlying } => {
                    if let Some(u) = underlying {
                        check(*u)?;
                    }
                    let mut names = HashSet::new();
                    for (name, _) in enumerators {
                        if !names.insert(name) {
                            return Err(TypeError::DuplicateEnumerator {
                                ty: desc.name.clone(),
                                name: name.clone(),
                            });
                        }
                    }
                }
                TypeKind::Pointer { pointee } => {
                    check(*pointee)?;
                    if desc.byte_size != word_size {
                        return Err(TypeError::PointerSize { ty: id, size: desc.byte_size });
                    }
                }
                TypeKind::Typedef { target } => {
                    check(*target)?;
                    if self.try_resolve(id).is_none() {
                        return Err(TypeError::TypedefCycle(id));
                    }
                }
                TypeKind::Array { element, .. } => check(*element)?,
                _ => {}
            }
        }
        Ok(())
    }

    /// Renders a C declarator for `id`, e.g. `const char *s` or `struct BPrint *bp`.
    /// `name` may be empty for abstract declarators.
    pub fn c_declaration(&self, id: TypeId, name: &str) -> String {
        let mut seen = HashSet::new();
        let (base, declarator) = self.declarator(id, name.to_string(), &mut seen);
        if declarator.is_empty() {
            base
        } else {
            format!("{base} {declarator}")
        }
    }

    fn declarator(&self, id: TypeId, inner: String, seen: &mut HashSet<TypeId>) -> (String, String) {
        let desc = self.get(id);
        let cv = |s: String| {
            let mut out = String::new();
            if desc.qualifiers.is_const {
                out.push_str("const ");
            }
            if desc.qualifiers.is_volatile {
                out.push_str("volatile ");
            }
            out.push_str(&s);
            out
        };
        if !seen.insert(id) {
            return (cv(self.tag_name(desc)), inner);
        }
        let out = match &desc.kind {
            TypeKind::Pointer { pointee } => {
                let mut d = String::from("*");
                if desc.qualifiers.is_const {
                    d.push_str(" const ");
                }
                d.push_str(&inner);
                let pointee_desc = self.get(*pointee);
                let d = if matches!(pointee_desc.kind, TypeKind::Array { .. }) {
                    format!("({d})")
                } else {
                    d
                };
                self.declarator(*pointee, d, seen)
            }
            TypeKind::Array { element, count } => {
                let d = match count {
                    Some(n) => format!("{inner}[{n}]"),
                    None => format!("{inner}[]"),
                };
                self.declarator(*element, d, seen)
            }
            TypeKind::Typedef { target } if desc.name.is_empty() => {
                let mut q = String::new();
                if desc.qualifiers.is_const {
                    q.push_str("const ");
                }
                if desc.qualifiers.is_volatile {
                    q.push_str("volatile ");
                }
                if matches!(self.get(*target).kind, TypeKind::Pointer { .. }) {
                    self.declarator(*target, format!("{q}{inner}").trim_end().to_string(), seen)
                } else {
                    let (base, d) = self.declarator(*target, inner, seen);
                    (format!("{q}{base}"), d)
                }
            }
            TypeKind::FunctionPointer => {
                let name = if desc.name.is_empty() { "void".to_string() } else { desc.name.clone() };
                if name.contains("(*)") {
                    (cv(name.replacen("(*)", &format!("(*{inner})"), 1)), String::new())
                } else {
                    (cv(format!("void (*{inner})()")), String::new())
                }
            }
            _ => (cv(self.tag_name(desc)), inner),
        };
        seen.remove(&id);
        out
    }

    fn tag_name(&self, desc: &TypeDesc) -> String {
        let named = |kw: &str| {
            if desc.name.is_empty() {
                format!("{kw} <anonymous>")
            } else {
                format!("{kw} {}", desc.name)
            }
        };
        match &desc.kind {
            TypeKind::Struct { .. } => named("struct"),
            TypeKind::Union { .. } => named("union"),
            TypeKind::Enum { .. } => named("enum"),
            TypeKind::Void => "void".to_string(),
            _ if desc.name.is_empty() => "<opaque>".to_string(),
            _ => desc.name.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn int(t: &mut TypeTable) -> TypeId {
        t.push(TypeDesc::new("int", 4, TypeKind::Base(BaseEncoding::SignedInt)))
    }

    #[test]
    fn qualifiers_render_in_place() {
        let mut t = TypeTable::new();
        let ch = t.push(TypeDesc::new("char", 1, TypeKind::Base(BaseEncoding::Char)));
        let mut cq = TypeDesc::new("", 1, TypeKind::Typedef { target: ch });
        cq.qualifiers.is_const = true;
        let cch = t.push(cq);
        let p = t.push(TypeDesc::new("", 8, TypeKind::Pointer { pointee: cch }));
        assert_eq!(t.c_declaration(p, "s"), "const char *s");
        let mut pq = TypeDesc::new("", 8, TypeKind::Typedef { target: p });
        pq.qualifiers.is_const = true;
        let cp = t.push(pq);
        assert_eq!(t.c_declaration(cp, "s"), "const char *const s");
    }

    #[test]
    fn typedef_chain_resolves() {
        let mut t = TypeTable::new();
        let ul = t.push(TypeDesc::new("unsigned long", 8, TypeKind::Base(BaseEncoding::UnsignedInt)));
        let a = t.push(TypeDesc::new("__uint64_t", 8, TypeKind::Typedef { target: ul }));
        let b = t.push(TypeDesc::new("uint64_t", 8, TypeKind::Typedef { target: a }));
        assert_eq!(t.resolve(b), ul);
        assert_eq!(t.size_of(b), 8);
        assert_eq!(t.c_declaration(b, "channel_layout"), "uint64_t channel_layout");
    }

    #[test]
    fn typedef_cycle_is_detected() {
        let mut t = TypeTable::new();
        let a = t.push(TypeDesc::new("a", 0, TypeKind::Void));
        let b = t.push(TypeDesc::new("b", 0, TypeKind::Typedef { target: a }));
        t.set(a, TypeDesc::new("a", 0, TypeKind::Typedef { target: b }));
        assert_eq!(t.try_resolve(a), None);
        assert_eq!(t.validate(8), Err(TypeError::TypedefCycle(a)));
    }

    #[test]
    fn member_overflow_is_rejected() {
        let mut t = TypeTable::new();
        let i = int(&mut t);
        t.push(TypeDesc::new(
            "bad",
            4,
            TypeKind::Struct {
                members: vec![Member { name: "x".into(), byte_offset: 2, ty: i, bitfield: false }],
            },
        ));
        assert!(matches!(t.validate(8), Err(TypeError::MemberOverflow { .. })));
    }

    #[test]
    fn duplicate_enumerators_are_rejected() {
        let mut t = TypeTable::new();
        t.push(TypeDesc::new(
            "e",
            4,
            TypeKind::Enum {
                underlying: None,
                enumerators: vec![("A".into(), 0), ("A".into(), 1)],
            },
        ));
        assert!(matches!(t.validate(8), Err(TypeError::DuplicateEnumerator { .. })));
    }

    #[test]
    fn declarations_render_like_c() {
        let mut t = TypeTable::new();
        let ch = t.push(TypeDesc::new("char", 1, TypeKind::Base(BaseEncoding::Char)));
        let mut cch = TypeDesc::new("char", 1, TypeKind::Base(BaseEncoding::Char));
        cch.qualifiers.is_const = true;
        let cch = t.push(cch);
        let p = t.push(TypeDesc::new("", 8, TypeKind::Pointer { pointee: cch }));
        assert_eq!(t.c_declaration(p, "s"), "const char *s");
        let arr = t.push(TypeDesc::new("", 1, TypeKind::Array { element: ch, count: Some(1) }));
        assert_eq!(t.c_declaration(arr, "buf"), "char buf[1]");
        let st = t.push(TypeDesc::new("BPrint", 24, TypeKind::Struct { members: vec![] }));
        let sp = t.push(TypeDesc::new("", 8, TypeKind::Pointer { pointee: st }));
        assert_eq!(t.c_declaration(sp, "bp"), "struct BPrint *bp");
        let v = t.void();
        assert_eq!(t.c_declaration(v, ""), "void");
        assert!(t.is_char_like(cch));
    }

    #[test]
    fn alignment_follows_largest_member() {
        let mut t = TypeTable::new();
        let i = int(&mut t);
        let d = t.push(TypeDesc::new("double", 8, TypeKind::Base(BaseEncoding::Float)));
        let s = t.push(TypeDesc::new(
            "s",
            16,
            TypeKind::Struct {
                members: vec![
                    Member { name: "a".into(), byte_offset: 0, ty: i, bitfield: false },
                    Member { name: "b".into(), byte_offset: 8, ty: d, bitfield: false },
                ],
            },
        ));
        assert_eq!(t.align_of(s), 8);
        assert_eq!(t.align_of(i), 4);
    }
}
