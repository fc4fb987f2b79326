//! Structured engineering documents: the section tree, isolated per-subsection
//! chunks, and the shared-prefix overlap audit.

mod chunk;
mod name;
mod overlap;
mod parse;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use chunk::{chunk_by_subsection, ChunkPolicy};
pub use name::normalize_expert_name;
pub use overlap::{audit_overlap, sentences, OverlapEntry, OverlapReport, DEFAULT_OVERLAP_THRESHOLD};
pub use parse::{parse_document, DocumentFormat};

/// Hierarchical section identifier: 1-based heading indices from the root.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SectionPath(pub Vec<u32>);

impl SectionPath {
    pub fn depth(&self) -> usize {
        self.0.len()
    }

    pub fn parent(&self) -> Option<SectionPath> {
        (self.0.len() > 1).then(|| SectionPath(self.0[..self.0.len() - 1].to_vec()))
    }

    pub fn is_ancestor_of(&self, other: &SectionPath) -> bool {
        other.0.len() > self.0.len() && other.0.starts_with(&self.0)
    }
}

impl fmt::Display for SectionPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(u32::to_string).collect();
        f.write_str(&parts.join("."))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub path: SectionPath,
    pub title: String,
    pub body: String,
    pub depth: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub doc_id: String,
    pub title: String,
    pub sections: Vec<Section>,
}

impl Corpus {
    pub fn section(&self, path: &SectionPath) -> Option<&Section> {
        self.sections.iter().find(|s| &s.path == path)
    }
}

/// One isolated training fragment. Serialized field order is the JSONL order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub expert_name: String,
    pub source_path: SectionPath,
    pub text: String,
    pub token_count: usize,
}

pub(crate) const PARAGRAPH_BREAK: &str = "\n\n";

impl Chunk {
    /// The chunk text without its leading title line: the procedure text an
    /// expert is expected to reproduce. Falls back to the title for body-less
    /// chunks.
    pub fn body(&self) -> &str {
        match self.text.split_once(PARAGRAPH_BREAK) {
            Some((_, body)) if !body.trim().is_empty() => body,
            _ => &self.text,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum CorpusError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("document is empty")]
    EmptyCorpus,
    #[error("no sections at depth {depth}")]
    EmptyChunking { depth: usize },
    #[error("expert name collision for {name:?} between sections {}", join_paths(.paths))]
    NameCollision { name: String, paths: Vec<SectionPath> },
    #[error("title {title:?} does not yield a usable expert name")]
    InvalidTitle { title: String },
    #[error("invalid chunk policy: {0}")]
    InvalidPolicy(String),
}

fn join_paths(paths: &[SectionPath]) -> String {
    paths.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}
