//! `/** ... */` doc comments in C sources.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DocComment {
    pub function: String,
    pub brief: String,
    /// Comment text with the delimiters and leading `*` columns removed.
    pub raw: String,
}

/// Doc comments of every function in `files`. Unreadable files are skipped
/// with a warning. When a function is documented twice, the first file in
/// the given order wins.
pub fn extract_doc_comments<P: AsRef<Path>>(files: &[P]) -> BTreeMap<String, DocComment> {
    let mut out = BTreeMap::new();
    for file in files {
        let file = file.as_ref();
        match fs::read_to_string(file) {
            Ok(text) => {
                for c in parse_doc_comments(&text) {
                    out.entry(c.function.clone()).or_insert(c);
                }
            }
            Err(e) => warn!("skipping {}: {e}", file.display()),
        }
    }
    out
}

/// C sources and headers under `dir`, sorted.
pub fn source_files(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut pending = vec![dir.to_path_buf()];
    while let Some(d) = pending.pop() {
        for entry in fs::read_dir(&d)? {
            let path = entry?.path();
            if path.is_dir() {
                pending.push(path);
            } else if matches!(path.extension().and_then(|e| e.to_str()), Some("c" | "h")) {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

pub fn parse_doc_comments(text: &str) -> Vec<DocComment> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find("/**") {
        let after_open = &rest[start + 3..];
        // `/**/` is an empty ordinary comment.
        if after_open.starts_with('/') {
            rest = &after_open[1..];
            continue;
        }
        let Some(end) = after_open.find("*/") else { break };
        let body = &after_open[..end];
        rest = &after_open[end + 2..];
        let Some(function) = declared_function(rest) else { continue };
        let raw = clean(body);
        let brief = brief_of(&raw);
        if !brief.is_empty() {
            out.push(DocComment { function, brief, raw });
        }
    }
    out
}

/// Name of the function declared or defined right after a comment, if the
/// next declaration is a function.
fn declared_function(after: &str) -> Option<String> {
    let decl_end = after.find(['{', ';'])?;
    let decl = after[..decl_end].trim_start();
    if decl.starts_with('#') || decl.starts_with("/*") {
        return None;
    }
    let paren = decl.find('(')?;
    let head = &decl[..paren];
    if head.contains(['=', '}']) || head.trim_start().starts_with("typedef") {
        return None;
    }
    let head = head.trim_end();
    let start = head
        .rfind(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .map_or(0, |i| i + 1);
    let name = &head[start..];
    (!name.is_empty() && !name.starts_with(|c: char| c.is_ascii_digit())).then(|| name.to_string())
}

fn clean(body: &str) -> String {
    let lines: Vec<&str> = body
        .lines()
        .map(|l| {
            let t = l.trim();
            let t = t.strip_prefix('*').unwrap_or(t);
            t.trim()
        })
        .collect();
    lines.join("\n").trim().to_string()
}

fn brief_of(raw: &str) -> String {
    let tagged = ["@brief", "\\brief"].iter().find_map(|tag| {
        let at = raw.find(tag)?;
        let text = &raw[at + tag.len()..];
        let stop = [text.find("\n\n"), text.find('@'), text.find("\n\\")]
            .into_iter()
            .flatten()
            .min()
            .unwrap_or(text.len());
        Some(&text[..stop])
    });
    let source = tagged.unwrap_or_else(|| raw.split("\n\n").next().unwrap_or(""));
    let paragraph = source.split_whitespace().collect::<Vec<_>>().join(" ");
    first_sentence(&paragraph).to_string()
}

fn first_sentence(text: &str) -> &str {
    let bytes = text.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        if b == b'.' && (i + 1 == bytes.len() || bytes[i + 1] == b' ') {
            return &text[..=i];
        }
    }
    text
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_layout_sentence() {
        let src = "/** Append a description of a channel layout to a bprint buffer. */\n\
                   void bprint_channel_layout(struct BPrint *bp, int nb_channels, uint64_t channel_layout)\n{\n}\n";
        let docs = parse_doc_comments(src);
        assert_eq!(docs.len(), 1);
        assert_eq!(docs[0].function, "bprint_channel_layout");
        assert_eq!(docs[0].brief, "Append a description of a channel layout to a bprint buffer.");
    }

    #[test]
    fn brief_tag_wins() {
        let docs = parse_doc_comments("/** @brief Short. Long text follows here. */\nint f(void);");
        assert_eq!(docs[0].brief, "Short.");
        let docs = parse_doc_comments("/**\n * Intro.\n * \\brief Tagged one. More.\n */\nint g(int x) { return x; }");
        assert_eq!(docs[0].brief, "Tagged one.");
    }

    #[test]
    fn undocumented_and_non_functions() {
        let src = "/* plain */\nint a(void);\n/** A variable. */\nint counter = f(2);\n\
                   /** A type. */\nstruct S { int x; };\nint b(void);\n/**/ int c(void);";
        assert!(parse_doc_comments(src).is_empty());
    }

    #[test]
    fn multiline_block_first_sentence() {
        let src = "/**\n * Count the occurrences of c in the string s.\n * Returns -1 when s is NULL.\n */\n\
                   int count_char(const char *s, char c)\n{";
        let d = &parse_doc_comments(src)[0];
        assert_eq!(d.brief, "Count the occurrences of c in the string s.");
        assert!(d.raw.contains("Returns -1"));
    }

    #[test]
    fn pointer_returning_function() {
        let d = parse_doc_comments("/** Get it. */\nconst char *\nname_of (int k);");
        assert_eq!(d[0].function, "name_of");
    }

    #[test]
    fn decimal_point_is_not_a_sentence_end() {
        let d = parse_doc_comments("/** Scale by 2.5 units. Extra. */ double s(double x);");
        assert_eq!(d[0].brief, "Scale by 2.5 units.");
    }
}
