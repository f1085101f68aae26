//! Debug-information reader: enumerates the functions of an ELF executable,
//! resolves their entry addresses and parameter locations, and builds the
//! type graph the tracer needs to interpret memory.

mod dwarf;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};

use object::{Object, ObjectKind, ObjectSection, ObjectSegment};
use thiserror::Error;

use crate::abi::{ArgLocation, ReturnLocation};
use crate::model::{TypeDesc, TypeId, TypeTable, WORD_SIZE_BITS};

pub(crate) use dwarf::normalize;

#[derive(Debug, Error)]
pub enum DebugInfoError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}: no debug information (binary stripped?)")]
    NoDebugInfo(PathBuf),
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("unsupported word size: {0}-bit binary (only 64-bit targets are supported)")]
    UnsupportedWordSize(u32),
    #[error("malformed DWARF: {0}")]
    Dwarf(#[from] gimli::Error),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ResolveError {
    #[error("function `{0}` not found in debug information")]
    NotFound(String),
    #[error("function `{name}` is ambiguous; qualify it as file:name ({})", candidates.join(", "))]
    Ambiguous { name: String, candidates: Vec<String> },
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("type `{ty}` has no member `{member}`")]
pub struct NoSuchMember {
    pub ty: String,
    pub member: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSig {
    pub name: String,
    pub ty: TypeId,
    /// Where the argument lives at the entry instruction.
    pub location: ArgLocation,
}

/// A traceable function.
#[derive(Clone, Debug, PartialEq)]
pub struct FunctionSig {
    pub name: String,
    pub decl_file: PathBuf,
    pub decl_line: u64,
    pub return_type: TypeId,
    pub params: Vec<ParamSig>,
    /// Link-time address of the first instruction.
    pub entry_address: u64,
    pub is_static: bool,
    /// Declared with `...`; only the named parameters are captured.
    pub variadic: bool,
    pub ret_location: ReturnLocation,
}

impl FunctionSig {
    /// `file:line` of the declaration.
    pub fn decl_site(&self) -> String {
        format!("{}:{}", self.decl_file.display(), self.decl_line)
    }

    /// Reconstructs the C prototype, e.g. `int gcd(int a, int b);`.
    pub fn c_prototype(&self, types: &TypeTable) -> String {
        let mut params: Vec<String> = self
            .params
            .iter()
            .map(|p| types.c_declaration(p.ty, &p.name))
            .collect();
        if self.variadic {
            params.push("...".into());
        }
        if params.is_empty() {
            params.push("void".into());
        }
        let head = types.c_declaration(self.return_type, &self.name);
        let prefix = if self.is_static { "static " } else { "" };
        // `int *f` must become `int *f(...)`, which the declarator already has.
        format!("{prefix}{head}({});", params.join(", "))
    }
}

/// Everything known about one executable.
#[derive(Clone, Debug)]
pub struct DebugIndex {
    pub binary: PathBuf,
    pub types: TypeTable,
    /// Name to every definition carrying it; more than one only for
    /// `static` functions in different compilation units.
    pub functions: BTreeMap<String, Vec<FunctionSig>>,
    /// Debug-info entry offset to type.
    pub type_cache: HashMap<u64, TypeId>,
    /// Position-independent: addresses are relative to the load base.
    pub pie: bool,
    /// Lowest `PT_LOAD` virtual address.
    pub load_vaddr: u64,
}

impl fmt::Display for DebugIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} functions, {} types",
            self.binary.display(),
            self.functions.values().map(Vec::len).sum::<usize>(),
            self.types.len()
        )
    }
}

fn check_header(bytes: &[u8]) -> Result<(), DebugInfoError> {
    if bytes.len() < 16 || &bytes[..4] != b"\x7fELF" {
        return Err(DebugInfoError::UnsupportedFormat("not an ELF file".into()));
    }
    match bytes[4] {
        2 => {}
        1 => return Err(DebugInfoError::UnsupportedWordSize(32)),
        c => return Err(DebugInfoError::UnsupportedFormat(format!("ELF class {c}"))),
    }
    if bytes[5] != 1 {
        return Err(DebugInfoError::UnsupportedFormat("big-endian ELF".into()));
    }
    Ok(())
}

pub fn load_debug_info(binary: impl AsRef<Path>) -> Result<DebugIndex, DebugInfoError> {
    let binary = binary.as_ref();
    let bytes = std::fs::read(binary).map_err(|source| DebugInfoError::Io {
        path: binary.to_path_buf(),
        source,
    })?;
    check_header(&bytes)?;
    let file = object::File::parse(&*bytes)
        .map_err(|e| DebugInfoError::UnsupportedFormat(e.to_string()))?;
    if file.architecture() != object::Architecture::X86_64 {
        return Err(DebugInfoError::UnsupportedFormat(format!(
            "architecture {:?}",
            file.architecture()
        )));
    }
    let pie = match file.kind() {
        ObjectKind::Executable => false,
        ObjectKind::Dynamic => true,
        other => {
            return Err(DebugInfoError::UnsupportedFormat(format!(
                "{other:?} object is not an executable"
            )))
        }
    };
    let has_info = file
        .section_by_name(".debug_info")
        .map(|s| s.size() > 0)
        .unwrap_or(false);
    if !has_info {
        return Err(DebugInfoError::NoDebugInfo(binary.to_path_buf()));
    }
    let load_vaddr = file.segments().map(|s| s.address()).min().unwrap_or(0);

    let parsed = dwarf::parse(&file)?;
    if let Err(e) = parsed.types.validate(u64::from(WORD_SIZE_BITS / 8)) {
        log::warn!("{}: type table inconsistency: {e}", binary.display());
    }
    let mut functions: BTreeMap<String, Vec<FunctionSig>> = BTreeMap::new();
    for sig in parsed.functions {
        let list = functions.entry(sig.name.clone()).or_default();
        if !list.iter().any(|s| s.entry_address == sig.entry_address) {
            list.push(sig);
        }
    }
    Ok(DebugIndex {
        binary: binary.to_path_buf(),
        types: parsed.types,
        functions,
        type_cache: parsed.type_cache,
        pie,
        load_vaddr,
    })
}

fn matches_file(decl: &Path, wanted: &str) -> bool {
    let wanted = Path::new(wanted);
    decl == wanted || decl.ends_with(wanted) || decl.file_name() == wanted.file_name() && wanted.components().count() == 1
}

impl DebugIndex {
    /// Sorted function names, optionally filtered by a glob. A pattern that is
    /// not a valid glob matches literally.
    pub fn list_functions(&self, name_filter: Option<&str>) -> Vec<String> {
        let pattern = name_filter.map(|f| {
            glob::Pattern::new(f).unwrap_or_else(|_| {
                glob::Pattern::new(&glob::Pattern::escape(f)).expect("escaped pattern is valid")
            })
        });
        self.functions
            .keys()
            .filter(|name| pattern.as_ref().is_none_or(|p| p.matches(name)))
            .cloned()
            .collect()
    }

    /// Looks up `name` or `file:name`.
    pub fn resolve_function(&self, name: &str) -> Result<&FunctionSig, ResolveError> {
        let (file, fname) = match name.rsplit_once(':') {
            Some((f, n)) => (Some(f), n),
            None => (None, name),
        };
        let candidates: Vec<&FunctionSig> = self
            .functions
            .get(fname)
            .map(|list| {
                list.iter()
                    .filter(|s| file.is_none_or(|f| matches_file(&s.decl_file, f)))
                    .collect()
            })
            .unwrap_or_default();
        match candidates.as_slice() {
            [] => Err(ResolveError::NotFound(name.to_string())),
            [one] => Ok(one),
            many => Err(ResolveError::Ambiguous {
                name: name.to_string(),
                candidates: many.iter().map(|s| s.decl_site()).collect(),
            }),
        }
    }

    /// All definitions, in name order.
    pub fn all_functions(&self) -> impl Iterator<Item = &FunctionSig> {
        self.functions.values().flatten()
    }

    /// Functions whose declaration lies under `dir`.
    pub fn functions_under(&self, dir: &Path) -> Vec<&FunctionSig> {
        let dir = normalize(&std::fs::canonicalize(dir).unwrap_or_else(|_| dir.to_path_buf()));
        self.all_functions()
            .filter(|s| {
                let f = std::fs::canonicalize(&s.decl_file).unwrap_or_else(|_| s.decl_file.clone());
                f.starts_with(&dir)
            })
            .collect()
    }
}

/// Address of `member` inside a struct of type `desc` located at `base_address`.
pub fn field_address(base_address: u64, desc: &TypeDesc, member: &str) -> Result<u64, NoSuchMember> {
    desc.members()
        .iter()
        .find(|m| m.name == member)
        .map(|m| base_address + m.byte_offset)
        .ok_or_else(|| NoSuchMember { ty: desc.name.clone(), member: member.to_string() })
}
