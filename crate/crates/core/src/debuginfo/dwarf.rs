//! DWARF walker: turns subprogram and type DIEs into [`FunctionSig`]s and
//! [`TypeTable`] entries.

use std::borrow::Cow;
use std::collections::HashMap;
use std::path::{Component, Path, PathBuf};

use gimli::{AttributeValue, EndianSlice, RunTimeEndian, UnitOffset};
use log::warn;
use object::{Object, ObjectSection, SectionKind};

use super::{FunctionSig, ParamSig};
use crate::abi::{layout_call, ArgLocation};
use crate::model::{BaseEncoding, Member, Qualifiers, TypeDesc, TypeId, TypeKind, TypeTable};

type Reader<'a> = EndianSlice<'a, RunTimeEndian>;
type Unit<'a> = gimli::Unit<Reader<'a>>;
type Dwarf<'a> = gimli::Dwarf<Reader<'a>>;

pub(super) struct Parsed {
    pub types: TypeTable,
    pub type_cache: HashMap<u64, TypeId>,
    pub functions: Vec<FunctionSig>,
}

pub(super) fn parse(file: &object::File<'_>) -> Result<Parsed, gimli::Error> {
    let load = |id: gimli::SectionId| -> Result<Cow<'_, [u8]>, gimli::Error> {
        Ok(file
            .section_by_name(id.name())
            .and_then(|s| s.uncompressed_data().ok())
            .unwrap_or(Cow::Borrowed(&[])))
    };
    let owned = gimli::DwarfSections::load(load)?;
    let dwarf = owned.borrow(|s| EndianSlice::new(s, RunTimeEndian::Little));

    let text: Vec<(u64, u64)> = file
        .sections()
        .filter(|s| s.kind() == SectionKind::Text)
        .map(|s| (s.address(), s.address() + s.size()))
        .collect();

    let mut walker = Walker {
        dwarf: &dwarf,
        types: TypeTable::new(),
        cache: HashMap::new(),
    };
    let mut functions = Vec::new();
    let mut headers = dwarf.units();
    while let Some(header) = headers.next()? {
        let unit = dwarf.unit(header)?;
        let mut cursor = unit.entries();
        while let Some((_, entry)) = cursor.next_dfs()? {
            if entry.tag() != gimli::DW_TAG_subprogram {
                continue;
            }
            let offset = entry.offset();
            match walker.function(&unit, offset) {
                Ok(Some(sig)) => {
                    if text.iter().any(|(lo, hi)| (*lo..*hi).contains(&sig.entry_address)) {
                        functions.push(sig);
                    } else {
                        warn!("{}: entry {:#x} outside executable sections", sig.name, sig.entry_address);
                    }
                }
                Ok(None) => {}
                Err(e) => warn!("skipping subprogram at {:?}: {e}", offset),
            }
        }
    }
    Ok(Parsed { types: walker.types, type_cache: walker.cache, functions })
}

struct Walker<'d, 'a> {
    dwarf: &'d Dwarf<'a>,
    types: TypeTable,
    cache: HashMap<u64, TypeId>,
}

fn global(unit: &Unit<'_>, offset: UnitOffset) -> u64 {
    match offset.to_unit_section_offset(unit) {
        gimli::UnitSectionOffset::DebugInfoOffset(o) => o.0 as u64,
        gimli::UnitSectionOffset::DebugTypesOffset(o) => (1 << 63) | o.0 as u64,
    }
}

/// Removes `.` and resolves `..` without touching the filesystem.
pub(crate) fn normalize(path: &Path) -> PathBuf {
    let mut out = PathBuf::new();
    for c in path.components() {
        match c {
            Component::CurDir => {}
            Component::ParentDir => {
                if !out.pop() {
                    out.push("..");
                }
            }
            other => out.push(other),
        }
    }
    out
}

impl<'d, 'a> Walker<'d, 'a> {
    fn string(&self, unit: &Unit<'a>, value: AttributeValue<Reader<'a>>) -> Option<String> {
        self.dwarf
            .attr_string(unit, value)
            .ok()
            .map(|s| s.to_string_lossy().into_owned())
    }

    fn name(&self, unit: &Unit<'a>, entry: &gimli::DebuggingInformationEntry<'_, '_, Reader<'a>>) -> Option<String> {
        entry
            .attr_value(gimli::DW_AT_name)
            .ok()
            .flatten()
            .and_then(|v| self.string(unit, v))
    }

    fn file_path(&self, unit: &Unit<'a>, index: u64) -> Option<PathBuf> {
        let program = unit.line_program.as_ref()?;
        let header = program.header();
        let file = header.file(index)?;
        let mut path = PathBuf::new();
        if let Some(comp) = &unit.comp_dir {
            path.push(comp.to_string_lossy().as_ref());
        }
        if let Some(dir) = file.directory(header) {
            path.push(self.string(unit, dir)?);
        }
        path.push(self.string(unit, file.path_name())?);
        Some(normalize(&path))
    }

    /// Builds the signature for a defining subprogram DIE; `None` for
    /// declarations and inline-only instances.
    fn function(&mut self, unit: &Unit<'a>, offset: UnitOffset) -> gimli::Result<Option<FunctionSig>> {
        let entry = unit.entry(offset)?;
        if entry.attr_value(gimli::DW_AT_declaration)?.is_some() {
            return Ok(None);
        }
        let Some(low) = entry.attr_value(gimli::DW_AT_low_pc)? else {
            return Ok(None);
        };
        let Some(entry_address) = self.dwarf.attr_address(unit, low)? else {
            return Ok(None);
        };

        // Name, type and declaration site may live on a specification or
        // abstract-origin DIE.
        let mut origin = offset;
        let mut name = self.name(unit, &entry);
        for _ in 0..4 {
            if name.is_some() {
                break;
            }
            let e = unit.entry(origin)?;
            let next = e
                .attr_value(gimli::DW_AT_abstract_origin)?
                .or(e.attr_value(gimli::DW_AT_specification)?);
            match next {
                Some(AttributeValue::UnitRef(o)) => {
                    origin = o;
                    name = self.name(unit, &unit.entry(o)?);
                }
                _ => break,
            }
        }
        let Some(name) = name else {
            return Ok(None);
        };
        let decl = unit.entry(origin)?;
        let decl_file = decl
            .attr_value(gimli::DW_AT_decl_file)?
            .and_then(|v| match v {
                AttributeValue::FileIndex(i) => Some(i),
                v => v.udata_value(),
            })
            .and_then(|i| self.file_path(unit, i))
            .unwrap_or_default();
        let decl_line = decl
            .attr_value(gimli::DW_AT_decl_line)?
            .and_then(|v| v.udata_value())
            .unwrap_or(0);
        let external = matches!(
            decl.attr_value(gimli::DW_AT_external)?,
            Some(AttributeValue::Flag(true))
        );
        let return_type = match decl.attr_value(gimli::DW_AT_type)? {
            Some(v) => self.type_ref(unit, v),
            None => self.types.void(),
        };

        let mut params = Vec::new();
        let mut variadic = false;
        let mut tree = unit.entries_tree(Some(offset))?;
        let mut children = tree.root()?.children();
        while let Some(child) = children.next()? {
            let e = child.entry();
            match e.tag() {
                gimli::DW_TAG_formal_parameter => {
                    let pname = self
                        .name(unit, e)
                        .or_else(|| {
                            // unnamed in the definition: try its origin
                            match e.attr_value(gimli::DW_AT_abstract_origin).ok().flatten() {
                                Some(AttributeValue::UnitRef(o)) => {
                                    unit.entry(o).ok().and_then(|oe| self.name(unit, &oe))
                                }
                                _ => None,
                            }
                        })
                        .unwrap_or_else(|| format!("arg{}", params.len()));
                    let ty = match e.attr_value(gimli::DW_AT_type)? {
                        Some(v) => self.type_ref(unit, v),
                        None => self.types.push(TypeDesc::opaque("parameter without type")),
                    };
                    params.push((pname, ty));
                }
                gimli::DW_TAG_unspecified_parameters => variadic = true,
                _ => {}
            }
        }

        let tys: Vec<TypeId> = params.iter().map(|(_, t)| *t).collect();
        let layout = layout_call(&self.types, Some(return_type), &tys);
        let params = params
            .into_iter()
            .zip(layout.params.iter().cloned())
            .map(|((name, ty), location)| {
                if let ArgLocation::Unsupported(why) = &location {
                    warn!("{name}: parameter location unsupported ({why}); captured as opaque");
                }
                ParamSig { name, ty, location }
            })
            .collect();

        Ok(Some(FunctionSig {
            name,
            decl_file,
            decl_line,
            return_type,
            params,
            entry_address,
            is_static: !external,
            variadic,
            ret_location: layout.ret,
        }))
    }

    fn type_ref(&mut self, unit: &Unit<'a>, value: AttributeValue<Reader<'a>>) -> TypeId {
        match value {
            AttributeValue::UnitRef(o) => self.type_at(unit, o),
            other => self
                .types
                .push(TypeDesc::opaque(format!("unsupported type reference {other:?}"))),
        }
    }

    fn type_at(&mut self, unit: &Unit<'a>, offset: UnitOffset) -> TypeId {
        let key = global(unit, offset);
        if let Some(&id) = self.cache.get(&key) {
            return id;
        }
        // Reserve the slot first so recursive references find it.
        let id = self.types.push(TypeDesc::opaque("type under construction"));
        self.cache.insert(key, id);
        let desc = match self.build(unit, offset) {
            Ok(d) => d,
            Err(e) => TypeDesc::opaque(format!("unreadable type: {e}")),
        };
        self.types.set(id, desc);
        id
    }

    fn subtype(&mut self, unit: &Unit<'a>, entry: &gimli::DebuggingInformationEntry<'_, '_, Reader<'a>>) -> gimli::Result<TypeId> {
        Ok(match entry.attr_value(gimli::DW_AT_type)? {
            Some(v) => self.type_ref(unit, v),
            None => self.types.void(),
        })
    }

    fn build(&mut self, unit: &Unit<'a>, offset: UnitOffset) -> gimli::Result<TypeDesc> {
        let entry = unit.entry(offset)?;
        let name = self.name(unit, &entry).unwrap_or_default();
        let byte_size = entry
            .attr_value(gimli::DW_AT_byte_size)?
            .and_then(|v| v.udata_value());
        let declaration = entry.attr_value(gimli::DW_AT_declaration)?.is_some();
        let word = u64::from(unit.encoding().address_size);

        let desc = match entry.tag() {
            gimli::DW_TAG_base_type => {
                let enc = match entry.attr_value(gimli::DW_AT_encoding)? {
                    Some(AttributeValue::Encoding(e)) => e,
                    _ => gimli::DwAte(0),
                };
                let size = byte_size.unwrap_or(0);
                let kind = match enc {
                    gimli::DW_ATE_signed => TypeKind::Base(BaseEncoding::SignedInt),
                    gimli::DW_ATE_unsigned => TypeKind::Base(BaseEncoding::UnsignedInt),
                    gimli::DW_ATE_float => TypeKind::Base(BaseEncoding::Float),
                    gimli::DW_ATE_boolean => TypeKind::Base(BaseEncoding::Bool),
                    gimli::DW_ATE_signed_char | gimli::DW_ATE_unsigned_char => {
                        TypeKind::Base(BaseEncoding::Char)
                    }
                    gimli::DW_ATE_UTF => TypeKind::Base(BaseEncoding::UnsignedInt),
                    other => TypeKind::Opaque { reason: format!("base encoding {other}") },
                };
                TypeDesc::new(name, size, kind)
            }
            gimli::DW_TAG_pointer_type => {
                let pointee = self.subtype(unit, &entry)?;
                let size = byte_size.unwrap_or(word);
                if matches!(self.types.resolved(pointee).kind, TypeKind::Opaque { ref reason } if reason == "subroutine") {
                    let sig = self.subroutine_signature(unit, &entry);
                    TypeDesc::new(sig, size, TypeKind::FunctionPointer)
                } else {
                    TypeDesc::new(name, size, TypeKind::Pointer { pointee })
                }
            }
            gimli::DW_TAG_const_type
            | gimli::DW_TAG_volatile_type
            | gimli::DW_TAG_restrict_type
            | gimli::DW_TAG_atomic_type => {
                let target = self.subtype(unit, &entry)?;
                let mut d = TypeDesc::new("", self.types.size_of(target), TypeKind::Typedef { target });
                d.qualifiers = Qualifiers {
                    is_const: entry.tag() == gimli::DW_TAG_const_type,
                    is_volatile: entry.tag() == gimli::DW_TAG_volatile_type,
                };
                d
            }
            gimli::DW_TAG_typedef => {
                let target = self.subtype(unit, &entry)?;
                TypeDesc::new(name, self.types.size_of(target), TypeKind::Typedef { target })
            }
            gimli::DW_TAG_structure_type | gimli::DW_TAG_union_type => {
                let is_union = entry.tag() == gimli::DW_TAG_union_type;
                let members = if declaration {
                    Vec::new()
                } else {
                    self.members(unit, offset, is_union)?
                };
                let kind = if is_union {
                    TypeKind::Union { members }
                } else {
                    TypeKind::Struct { members }
                };
                TypeDesc::new(name, byte_size.unwrap_or(0), kind)
            }
            gimli::DW_TAG_enumeration_type => {
                let underlying = match entry.attr_value(gimli::DW_AT_type)? {
                    Some(v) => Some(self.type_ref(unit, v)),
                    None => None,
                };
                let signed = underlying
                    .map(|u| matches!(self.types.resolved(u).kind, TypeKind::Base(BaseEncoding::SignedInt)))
                    .unwrap_or(true);
                let mut enumerators = Vec::new();
                let mut tree = unit.entries_tree(Some(offset))?;
                let mut children = tree.root()?.children();
                while let Some(child) = children.next()? {
                    let e = child.entry();
                    if e.tag() != gimli::DW_TAG_enumerator {
                        continue;
                    }
                    let ename = self.name(unit, e).unwrap_or_default();
                    let value = match e.attr_value(gimli::DW_AT_const_value)? {
                        Some(AttributeValue::Sdata(v)) => v,
                        Some(AttributeValue::Udata(v)) => v as i64,
                        Some(v) if signed => v.sdata_value().unwrap_or(0),
                        Some(v) => v.udata_value().unwrap_or(0) as i64,
                        None => 0,
                    };
                    enumerators.push((ename, value));
                }
                TypeDesc::new(name, byte_size.unwrap_or(4), TypeKind::Enum { underlying, enumerators })
            }
            gimli::DW_TAG_array_type => {
                let element = self.subtype(unit, &entry)?;
                let mut counts = Vec::new();
                let mut tree = unit.entries_tree(Some(offset))?;
                let mut children = tree.root()?.children();
                while let Some(child) = children.next()? {
                    let e = child.entry();
                    if e.tag() != gimli::DW_TAG_subrange_type {
                        continue;
                    }
                    let count = if let Some(c) = e.attr_value(gimli::DW_AT_count)?.and_then(|v| v.udata_value()) {
                        Some(c)
                    } else {
                        e.attr_value(gimli::DW_AT_upper_bound)?
                            .and_then(|v| v.udata_value())
                            .map(|u| u + 1)
                    };
                    counts.push(count);
                }
                if counts.is_empty() {
                    counts.push(None);
                }
                // int m[2][3] is an array of 2 arrays of 3
                let mut ty = element;
                for (i, count) in counts.iter().enumerate().rev() {
                    let size = count.map(|c| c * self.types.size_of(ty)).unwrap_or(0);
                    let d = TypeDesc::new("", size, TypeKind::Array { element: ty, count: *count });
                    if i == 0 {
                        return Ok(d);
                    }
                    ty = self.types.push(d);
                }
                unreachable!("counts is non-empty")
            }
            gimli::DW_TAG_subroutine_type => {
                TypeDesc::new(name, 0, TypeKind::Opaque { reason: "subroutine".into() })
            }
            gimli::DW_TAG_unspecified_type => TypeDesc::new(name, 0, TypeKind::Void),
            other => TypeDesc::new(name, byte_size.unwrap_or(0), TypeKind::Opaque { reason: format!("{other}") }),
        };
        Ok(desc)
    }

    fn subroutine_signature(&mut self, unit: &Unit<'a>, pointer: &gimli::DebuggingInformationEntry<'_, '_, Reader<'a>>) -> String {
        let Ok(Some(AttributeValue::UnitRef(o))) = pointer.attr_value(gimli::DW_AT_type) else {
            return String::new();
        };
        let Ok(entry) = unit.entry(o) else { return String::new() };
        let ret = match entry.attr_value(gimli::DW_AT_type) {
            Ok(Some(v)) => self.type_ref(unit, v),
            _ => self.types.void(),
        };
        let mut args = Vec::new();
        if let Ok(mut tree) = unit.entries_tree(Some(o)) {
            if let Ok(root) = tree.root() {
                let mut children = root.children();
                while let Ok(Some(child)) = children.next() {
                    let e = child.entry();
                    match e.tag() {
                        gimli::DW_TAG_formal_parameter => {
                            if let Ok(Some(v)) = e.attr_value(gimli::DW_AT_type) {
                                let t = self.type_ref(unit, v);
                                args.push(self.types.c_declaration(t, ""));
                            }
                        }
                        gimli::DW_TAG_unspecified_parameters => args.push("...".into()),
                        _ => {}
                    }
                }
            }
        }
        if args.is_empty() {
            args.push("void".into());
        }
        format!("{} (*)({})", self.types.c_declaration(ret, ""), args.join(", "))
    }

    fn members(&mut self, unit: &Unit<'a>, offset: UnitOffset, is_union: bool) -> gimli::Result<Vec<Member>> {
        let mut raw = Vec::new();
        {
            let mut tree = unit.entries_tree(Some(offset))?;
            let mut children = tree.root()?.children();
            while let Some(child) = children.next()? {
                let e = child.entry();
                if e.tag() != gimli::DW_TAG_member {
                    continue;
                }
                let name = self.name(unit, e);
                let bitfield = e.attr_value(gimli::DW_AT_bit_size)?.is_some();
                let byte_offset = if is_union {
                    0
                } else if let Some(bits) = e.attr_value(gimli::DW_AT_data_bit_offset)?.and_then(|v| v.udata_value()) {
                    bits / 8
                } else {
                    match e.attr_value(gimli::DW_AT_data_member_location)? {
                        Some(v) => match v.udata_value() {
                            Some(o) => o,
                            None => v
                                .exprloc_value()
                                .and_then(|x| plus_uconst(x, unit.encoding()))
                                .unwrap_or(0),
                        },
                        None => 0,
                    }
                };
                let ty = e.attr_value(gimli::DW_AT_type)?;
                raw.push((name, byte_offset, ty, bitfield));
            }
        }
        let mut anon = 0;
        Ok(raw
            .into_iter()
            .map(|(name, byte_offset, ty, bitfield)| {
                let name = name.unwrap_or_else(|| {
                    anon += 1;
                    format!("<anon.{}>", anon - 1)
                });
                let ty = match ty {
                    Some(v) => self.type_ref(unit, v),
                    None => self.types.push(TypeDesc::opaque("member without type")),
                };
                Member { name, byte_offset, ty, bitfield }
            })
            .collect())
    }
}

fn plus_uconst(expr: gimli::Expression<Reader<'_>>, encoding: gimli::Encoding) -> Option<u64> {
    let mut ops = expr.operations(encoding);
    match ops.next().ok()? {
        Some(gimli::Operation::PlusConstant { value }) => Some(value),
        Some(gimli::Operation::UnsignedConstant { value }) => Some(value),
        _ => None,
    }
}
