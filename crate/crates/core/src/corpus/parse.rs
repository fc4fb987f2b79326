use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Corpus, CorpusError, Section, SectionPath};
use crate::eval::nfc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DocumentFormat {
    /// UTF-8 markdown; ATX heading depth defines the section tree.
    MarkdownHeadings,
    /// JSON tree of `{title, body, children}` nodes under a document root.
    ManifestJson,
}

impl FromStr for DocumentFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "markdown" | "markdown-headings" | "md" => Ok(Self::MarkdownHeadings),
            "manifest" | "manifest-json" | "json" => Ok(Self::ManifestJson),
            other => Err(format!("unknown document format {other:?}")),
        }
    }
}

pub fn parse_document(raw: &str, format: DocumentFormat) -> Result<Corpus, CorpusError> {
    let raw = nfc(raw);
    if raw.trim().is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    match format {
        DocumentFormat::MarkdownHeadings => parse_markdown(&raw),
        DocumentFormat::ManifestJson => parse_manifest(&raw),
    }
}

fn content_doc_id(raw: &str) -> String {
    let digest = Sha256::digest(raw.as_bytes());
    let hex: String = digest[..6].iter().map(|b| format!("{b:02x}")).collect();
    format!("doc-{hex}")
}

fn clean_title(title: &str) -> String {
    title.split_whitespace().collect::<Vec<_>>().join(" ")
}

struct Heading {
    line: usize,
    level: usize,
    title: String,
}

fn atx_heading(line: &str) -> Option<(usize, &str)> {
    let indent = line.len() - line.trim_start_matches(' ').len();
    if indent > 3 {
        return None;
    }
    let rest = &line[indent..];
    let level = rest.len() - rest.trim_start_matches('#').len();
    if !(1..=6).contains(&level) {
        return None;
    }
    let after = &rest[level..];
    if !after.is_empty() && !after.starts_with([' ', '\t']) {
        return None;
    }
    let mut title = after.trim();
    // optional closing sequence: "## Title ##"
    let stripped = title.trim_end_matches('#');
    if stripped.len() < title.len() && (stripped.is_empty() || stripped.ends_with([' ', '\t'])) {
        title = stripped.trim_end();
    }
    Some((level, title))
}

fn parse_markdown(raw: &str) -> Result<Corpus, CorpusError> {
    let mut headings: Vec<Heading> = Vec::new();
    let mut bodies: Vec<Vec<&str>> = Vec::new();
    let mut preamble_line: Option<usize> = None;
    let mut fence: Option<&str> = None;

    for (idx, line) in raw.lines().enumerate() {
        let lineno = idx + 1;
        let trimmed = line.trim_start();
        if let Some(marker) = fence {
            if trimmed.starts_with(marker) {
                fence = None;
            }
        } else if trimmed.starts_with("```") || trimmed.starts_with("~~~") {
            fence = Some(&trimmed[..3]);
        } else if let Some((level, title)) = atx_heading(line) {
            if title.is_empty() {
                return Err(CorpusError::Parse { line: lineno, column: 1, message: "heading has no title".into() });
            }
            headings.push(Heading { line: lineno, level, title: clean_title(title) });
            bodies.push(Vec::new());
            continue;
        }
        match bodies.last_mut() {
            Some(body) => body.push(line),
            None if !line.trim().is_empty() => {
                preamble_line.get_or_insert(lineno);
            }
            None => {}
        }
    }

    if headings.is_empty() {
        return Err(CorpusError::Parse {
            line: preamble_line.unwrap_or(1),
            column: 1,
            message: "document has no headings".into(),
        });
    }
    if let Some(line) = preamble_line {
        return Err(CorpusError::Parse {
            line,
            column: 1,
            message: "text before the first heading belongs to no section".into(),
        });
    }

    // Documents that start at "##" are shifted so their shallowest level is depth 1.
    let base = headings.iter().map(|h| h.level).min().unwrap_or(1) - 1;
    let mut counters: Vec<u32> = Vec::new();
    let mut sections = Vec::with_capacity(headings.len());
    for (heading, body) in headings.into_iter().zip(bodies) {
        let depth = heading.level - base;
        if depth > counters.len() + 1 {
            return Err(CorpusError::Parse {
                line: heading.line,
                column: 1,
                message: format!("heading {:?} jumps from depth {} to depth {}", heading.title, counters.len(), depth),
            });
        }
        counters.truncate(depth);
        if counters.len() < depth {
            counters.push(0);
        }
        counters[depth - 1] += 1;
        sections.push(Section {
            path: SectionPath(counters.clone()),
            title: heading.title,
            body: body.join("\n").trim().to_string(),
            depth: depth as u32,
        });
    }

    let title = sections[0].title.clone();
    Ok(Corpus { doc_id: content_doc_id(raw), title, sections })
}

#[derive(Debug, Deserialize)]
struct ManifestNode {
    title: String,
    #[serde(default)]
    body: String,
    #[serde(default)]
    children: Vec<ManifestNode>,
}

#[derive(Debug, Deserialize)]
struct ManifestRoot {
    #[serde(default)]
    doc_id: Option<String>,
    title: String,
    #[serde(default)]
    body: String,
    #[serde(default)]
    children: Vec<ManifestNode>,
}

fn parse_manifest(raw: &str) -> Result<Corpus, CorpusError> {
    let root: ManifestRoot = serde_json::from_str(raw).map_err(|e| CorpusError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if !root.body.trim().is_empty() {
        return Err(CorpusError::Parse {
            line: 1,
            column: 1,
            message: "document-level body belongs to no section".into(),
        });
    }
    if root.children.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }

    fn walk(nodes: Vec<ManifestNode>, prefix: &[u32], out: &mut Vec<Section>) -> Result<(), CorpusError> {
        for (idx, node) in nodes.into_iter().enumerate() {
            let mut path = prefix.to_vec();
            path.push(idx as u32 + 1);
            let title = clean_title(&node.title);
            if title.is_empty() {
                return Err(CorpusError::Parse {
                    line: 1,
                    column: 1,
                    message: format!("section {} has an empty title", SectionPath(path)),
                });
            }
            out.push(Section {
                depth: path.len() as u32,
                path: SectionPath(path.clone()),
                title,
                body: node.body.trim().to_string(),
            });
            walk(node.children, &path, out)?;
        }
        Ok(())
    }

    let mut sections = Vec::new();
    walk(root.children, &[], &mut sections)?;
    let doc_id = match root.doc_id {
        Some(id) if !id.trim().is_empty() => id.trim().to_string(),
        _ => content_doc_id(raw),
    };
    Ok(Corpus { doc_id, title: clean_title(&root.title), sections })
}
