//! HTML output. Pages are plain HTML5 with one shared stylesheet; row
//! collapsing uses a checkbox per parent row and CSS `:has()`.

use std::fmt::Write;

use super::table::IOTableRow;

pub const HEADERS: [&str; 3] = ["Parameter name", "Before function call", "After function call"];
pub const NO_EXAMPLE: &str = "No I/O example available.";

pub const STYLE_CSS: &str = "\
body { font-family: sans-serif; margin: 2em auto; max-width: 60em; color: #222; }
pre { background: #f4f4f4; padding: 0.6em 1em; overflow-x: auto; }
table.io { border-collapse: collapse; }
table.io th, table.io td { border: 1px solid #bbb; padding: 0.25em 0.8em; text-align: left; }
table.io th { background: #e8e8e8; }
table.io td.value { font-family: monospace; }
table.io input.toggle { display: none; }
table.io label { cursor: pointer; }
table.io label::before { content: \"\\25BE\\00a0\"; }
table.io input.toggle:not(:checked) + label::before { content: \"\\25B8\\00a0\"; }
ul.functions li { margin: 0.2em 0; }
span.badge { background: #2a7; color: #fff; border-radius: 0.3em; font-size: 0.8em; padding: 0 0.4em; margin-left: 0.5em; }
p.no-example { font-style: italic; }
";

/// Escapes text content. Quotes stay literal; use [`escape_attr`] inside
/// attribute values.
pub fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            c => out.push(c),
        }
    }
    out
}

pub fn escape_attr(text: &str) -> String {
    escape(text).replace('"', "&quot;")
}

fn head(out: &mut String, title: &str, extra_style: &str) {
    out.push_str("<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n");
    let _ = writeln!(out, "<title>{}</title>", escape(title));
    out.push_str("<link rel=\"stylesheet\" href=\"style.css\">\n");
    if !extra_style.is_empty() {
        let _ = write!(out, "<style>\n{extra_style}</style>\n");
    }
    out.push_str("</head>\n<body>\n");
}

/// Every ancestor of each row, nearest first.
fn ancestors(rows: &[IOTableRow]) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::with_capacity(rows.len());
    for r in rows {
        let chain = match r.parent {
            Some(p) => std::iter::once(p).chain(out[p].iter().copied()).collect(),
            None => Vec::new(),
        };
        out.push(chain);
    }
    out
}

fn table(out: &mut String, rows: &[IOTableRow]) {
    out.push_str("<table class=\"io\">\n<thead>\n<tr>");
    for h in HEADERS {
        let _ = write!(out, "<th>{h}</th>");
    }
    out.push_str("</tr>\n</thead>\n<tbody>\n");
    let anc = ancestors(rows);
    for (i, r) in rows.iter().enumerate() {
        let mut classes = vec![format!("depth-{}", r.depth)];
        if r.collapsible {
            classes.push("parent".into());
        }
        classes.extend(anc[i].iter().map(|a| format!("under-{a}")));
        let _ = write!(
            out,
            "<tr id=\"row-{i}\" class=\"{}\" data-depth=\"{}\"{}{}>",
            classes.join(" "),
            r.depth,
            r.parent.map(|p| format!(" data-parent=\"row-{p}\"")).unwrap_or_default(),
            if r.collapsible { " data-collapsible=\"true\"" } else { "" },
        );
        let indent = format!(" style=\"padding-left: {:.1}em\"", 0.8 + 1.5 * r.depth as f64);
        let name = escape(&r.display);
        if r.collapsible {
            let _ = write!(
                out,
                "<td{indent}><input type=\"checkbox\" class=\"toggle\" id=\"toggle-{i}\" checked><label for=\"toggle-{i}\">{name}</label></td>"
            );
        } else {
            let _ = write!(out, "<td{indent}>{name}</td>");
        }
        let _ = writeln!(
            out,
            "<td class=\"value\">{}</td><td class=\"value\">{}</td></tr>",
            escape(&r.before),
            escape(&r.after)
        );
    }
    out.push_str("</tbody>\n</table>\n");
}

/// Per-page rules hiding the descendants of each collapsed row.
fn collapse_rules(rows: &[IOTableRow]) -> String {
    let mut css = String::new();
    for (i, r) in rows.iter().enumerate() {
        if r.collapsible {
            let _ = writeln!(css, "tbody:has(#toggle-{i}:not(:checked)) tr.under-{i} {{ display: none; }}");
        }
    }
    css
}

/// A function page: declaration, summary, and the example table (or a
/// notice when there is no example).
pub fn render_page(name: &str, prototype: &str, brief: &str, rows: Option<&[IOTableRow]>, provenance: Option<&str>) -> String {
    let mut out = String::new();
    head(&mut out, name, &rows.map(collapse_rules).unwrap_or_default());
    out.push_str("<p class=\"nav\"><a href=\"index.html\">All functions</a></p>\n");
    let _ = writeln!(out, "<h1>{}</h1>", escape(name));
    out.push_str("<section class=\"declaration\">\n<h2>Declaration</h2>\n");
    let _ = writeln!(out, "<pre><code>{}</code></pre>\n</section>", escape(prototype));
    out.push_str("<section class=\"description\">\n<h2>Description</h2>\n");
    let _ = writeln!(out, "<p>{}</p>\n</section>", escape(brief));
    out.push_str("<section class=\"example\">\n<h2>I/O example</h2>\n");
    match rows {
        Some(rows) => {
            if let Some(p) = provenance {
                let _ = writeln!(out, "<p class=\"provenance\">{}</p>", escape(p));
            }
            table(&mut out, rows);
        }
        None => {
            let _ = writeln!(out, "<p class=\"no-example\">{NO_EXAMPLE}</p>");
        }
    }
    out.push_str("</section>\n</body>\n</html>\n");
    out
}

/// One line of the index page.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexEntry {
    pub name: String,
    pub brief: String,
    pub has_example: bool,
}

pub fn render_index(title: &str, entries: &[IndexEntry]) -> String {
    let mut out = String::new();
    head(&mut out, title, "");
    let _ = writeln!(out, "<h1>{}</h1>", escape(title));
    let with = entries.iter().filter(|e| e.has_example).count();
    let _ = writeln!(
        out,
        "<p class=\"summary\">{} documented functions, {with} with I/O examples.</p>",
        entries.len()
    );
    out.push_str("<ul class=\"functions\">\n");
    for e in entries {
        let badge = if e.has_example { "<span class=\"badge\">I/O example</span>" } else { "" };
        let _ = writeln!(
            out,
            "<li><a href=\"{}.html\"><code>{}</code></a>{badge} {}</li>",
            escape_attr(&e.name),
            escape(&e.name),
            escape(&e.brief)
        );
    }
    out.push_str("</ul>\n</body>\n</html>\n");
    out
}
