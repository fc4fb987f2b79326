//! Shared sentence-prefix detection across chunks.
//!
//! Two training fragments whose sentences open with the same words but
//! continue differently are the pattern that lets one procedure bleed into
//! another during fine-tuning. The audit reports every chunk pair with such a
//! collision; it never rewrites chunks.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{Chunk, PARAGRAPH_BREAK};
use crate::eval::{nfc, token_spans};

pub const DEFAULT_OVERLAP_THRESHOLD: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapEntry {
    pub chunk_id_a: String,
    pub chunk_id_b: String,
    pub shared_prefix_token_count: usize,
    pub shared_prefix_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub threshold: usize,
    pub entries: Vec<OverlapEntry>,
}

impl OverlapReport {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// A tokenized sentence: lowercased tokens plus the original surface text of
/// each token prefix.
#[derive(Debug, Clone)]
pub struct Sentence {
    pub text: String,
    pub tokens: Vec<String>,
    ends: Vec<usize>,
}

impl Sentence {
    /// Original text of the first `n` tokens.
    pub fn prefix_text(&self, n: usize) -> &str {
        if n == 0 {
            return "";
        }
        &self.text[..self.ends[n - 1]]
    }
}

/// Splits text into sentences at ".", "!" or "?" followed by whitespace, and
/// at paragraph breaks.
pub fn sentences(text: &str) -> Vec<Sentence> {
    let normalized = nfc(text);
    let mut out = Vec::new();
    for paragraph in normalized.split(PARAGRAPH_BREAK) {
        let mut start = 0;
        let mut chars = paragraph.char_indices().peekable();
        while let Some((idx, ch)) = chars.next() {
            let boundary = matches!(ch, '.' | '!' | '?') && chars.peek().is_none_or(|&(_, next)| next.is_whitespace());
            if boundary {
                let end = idx + ch.len_utf8();
                push_sentence(&paragraph[start..end], &mut out);
                start = end;
            }
        }
        push_sentence(&paragraph[start..], &mut out);
    }
    out
}

fn push_sentence(raw: &str, out: &mut Vec<Sentence>) {
    let text = raw.trim();
    let spans = token_spans(text);
    if spans.is_empty() {
        return;
    }
    out.push(Sentence {
        text: text.to_string(),
        ends: spans.iter().map(|t| t.span.end).collect(),
        tokens: spans.into_iter().map(|t| t.text).collect(),
    });
}

#[derive(Default)]
struct TrieNode {
    children: HashMap<String, usize>,
    depth: usize,
    /// chunk index -> lowest sentence index of that chunk passing through here
    members: BTreeMap<usize, usize>,
}

/// Reports every unordered chunk pair in which some sentence of one chunk and
/// some sentence of the other share a token prefix of at least
/// `threshold_tokens` tokens.
///
/// Each entry carries the longest such prefix for the pair, taken from the
/// chunk with the smaller id. Entries are ordered by descending prefix length,
/// then by chunk ids.
pub fn audit_overlap(chunks: &[Chunk], threshold_tokens: usize) -> OverlapReport {
    let threshold = threshold_tokens.max(1);
    let per_chunk: Vec<Vec<Sentence>> = chunks.iter().map(|c| sentences(&c.text)).collect();

    // Every sentence is inserted into one prefix trie; a node at depth d shared
    // by two chunks witnesses a d-token common prefix between them.
    let mut nodes = vec![TrieNode::default()];
    for (ci, sents) in per_chunk.iter().enumerate() {
        for (si, sentence) in sents.iter().enumerate() {
            let mut node = 0;
            for tok in &sentence.tokens {
                node = match nodes[node].children.get(tok) {
                    Some(&child) => child,
                    None => {
                        let depth = nodes[node].depth + 1;
                        nodes.push(TrieNode { depth, ..Default::default() });
                        let child = nodes.len() - 1;
                        nodes[node].children.insert(tok.clone(), child);
                        child
                    }
                };
                if nodes[node].depth >= threshold {
                    nodes[node].members.entry(ci).or_insert(si);
                }
            }
        }
    }

    // (lo, hi) chunk indices ordered by chunk id -> (depth, lo sentence, hi sentence)
    let mut best: BTreeMap<(usize, usize), (usize, usize, usize)> = BTreeMap::new();
    for node in nodes.iter().filter(|n| n.depth >= threshold && n.members.len() > 1) {
        let members: Vec<(usize, usize)> = node.members.iter().map(|(&c, &s)| (c, s)).collect();
        for (x, &(ca, sa)) in members.iter().enumerate() {
            for &(cb, sb) in &members[x + 1..] {
                let ((lo, slo), (hi, shi)) = if chunks[ca].chunk_id <= chunks[cb].chunk_id {
                    ((ca, sa), (cb, sb))
                } else {
                    ((cb, sb), (ca, sa))
                };
                let candidate = (node.depth, slo, shi);
                best.entry((lo, hi))
                    .and_modify(|cur| {
                        if candidate.0 > cur.0 || (candidate.0 == cur.0 && (slo, shi) < (cur.1, cur.2)) {
                            *cur = candidate;
                        }
                    })
                    .or_insert(candidate);
            }
        }
    }

    let mut entries: Vec<OverlapEntry> = best
        .into_iter()
        .map(|((lo, hi), (depth, slo, _))| OverlapEntry {
            chunk_id_a: chunks[lo].chunk_id.clone(),
            chunk_id_b: chunks[hi].chunk_id.clone(),
            shared_prefix_token_count: depth,
            shared_prefix_text: per_chunk[lo][slo].prefix_text(depth).to_string(),
        })
        .collect();
    entries.sort_by(|a, b| {
        b.shared_prefix_token_count
            .cmp(&a.shared_prefix_token_count)
            .then_with(|| a.chunk_id_a.cmp(&b.chunk_id_a))
            .then_with(|| a.chunk_id_b.cmp(&b.chunk_id_b))
    });
    OverlapReport { threshold, entries }
}
