//! HTML API documentation with concrete I/O examples.
//!
//! Only functions carrying a `/** ... */` comment get a page. Each page shows
//! the reconstructed C declaration, the comment's first sentence, and the
//! selected call as a table of before/after values.

mod comments;
mod html;
mod table;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use thiserror::Error;

use crate::debuginfo::{DebugIndex, FunctionSig};
use crate::model::{IOExample, TypeTable};
use crate::par::{self, Exec};

pub use comments::{extract_doc_comments, parse_doc_comments, source_files, DocComment};
pub use html::{escape, escape_attr, render_index, render_page, IndexEntry, HEADERS, NO_EXAMPLE, STYLE_CSS};
pub use table::{flatten_example, IOTableRow, ShapeMismatch, NO_VALUE};

pub const INDEX_TITLE: &str = "API reference";

#[derive(Debug, Error)]
pub enum DocError {
    #[error(transparent)]
    Shape(#[from] ShapeMismatch),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

pub fn render_function_page(
    sig: &FunctionSig,
    types: &TypeTable,
    doc: &DocComment,
    example: Option<&IOExample>,
) -> Result<String, ShapeMismatch> {
    let rows = example.map(flatten_example).transpose()?;
    let provenance = example.map(|e| format!("Call {} from the run of {}.", e.record.call_id, e.source_session));
    Ok(render_page(&sig.name, &sig.c_prototype(types), &doc.brief, rows.as_deref(), provenance.as_deref()))
}

/// A rendered function page.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SitePage {
    pub name: String,
    pub brief: String,
    pub html: String,
    pub has_example: bool,
}

/// Files written by [`render_site`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SiteSummary {
    pub pages: usize,
    pub with_examples: usize,
    pub files: Vec<PathBuf>,
}

fn write(path: PathBuf, text: &str, files: &mut Vec<PathBuf>) -> Result<(), DocError> {
    fs::write(&path, text).map_err(|source| DocError::Io { path: path.clone(), source })?;
    files.push(path);
    Ok(())
}

/// Writes every page, `index.html` and `style.css` into `out`.
pub fn render_site(out: &Path, pages: &[SitePage]) -> Result<SiteSummary, DocError> {
    fs::create_dir_all(out).map_err(|source| DocError::Io { path: out.to_path_buf(), source })?;
    let mut files = Vec::new();
    for p in pages {
        write(out.join(format!("{}.html", p.name)), &p.html, &mut files)?;
    }
    let entries: Vec<IndexEntry> = pages
        .iter()
        .map(|p| IndexEntry { name: p.name.clone(), brief: p.brief.clone(), has_example: p.has_example })
        .collect();
    write(out.join("index.html"), &render_index(INDEX_TITLE, &entries), &mut files)?;
    write(out.join("style.css"), STYLE_CSS, &mut files)?;
    Ok(SiteSummary {
        pages: pages.len(),
        with_examples: pages.iter().filter(|p| p.has_example).count(),
        files,
    })
}

/// Renders the page of every documented function found in `index`, in name
/// order. Documented names without debug info are skipped with a warning.
pub fn build_pages(
    exec: Exec,
    index: &DebugIndex,
    docs: &BTreeMap<String, DocComment>,
    examples: &[IOExample],
) -> Result<Vec<SitePage>, DocError> {
    let by_name: BTreeMap<&str, &IOExample> = examples.iter().map(|e| (e.function(), e)).collect();
    let targets: Vec<(&DocComment, &FunctionSig)> = docs
        .values()
        .filter_map(|d| match index.functions.get(&d.function).and_then(|v| v.first()) {
            Some(sig) => Some((d, sig)),
            None => {
                warn!("{}: documented but absent from the debug info", d.function);
                None
            }
        })
        .collect();
    par::map(exec, &targets, |(doc, sig)| {
        let example = by_name.get(sig.name.as_str()).copied();
        let html = render_function_page(sig, &index.types, doc, example)?;
        Ok(SitePage { name: sig.name.clone(), brief: doc.brief.clone(), html, has_example: example.is_some() })
    })
    .into_iter()
    .collect()
}
