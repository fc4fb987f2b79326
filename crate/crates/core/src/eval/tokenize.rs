//! The tokenizer shared by every metric, the corpus token counts and the
//! overlap auditor.
//!
//! Text is NFC-normalized, lowercased, split on whitespace, and every
//! punctuation or symbol character becomes a token of its own.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

/// An ordered list of lowercased unigram tokens.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn as_slice(&self) -> &[String] {
        &self.tokens
    }
}

impl From<Vec<String>> for TokenSequence {
    fn from(tokens: Vec<String>) -> Self {
        Self { tokens }
    }
}

/// A token together with its byte range in the NFC-normalized source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpannedToken {
    pub text: String,
    pub span: Range<usize>,
}

pub fn tokenize(text: &str) -> TokenSequence {
    let normalized = nfc(text);
    let tokens = token_spans(&normalized).into_iter().map(|t| t.text).collect();
    TokenSequence { tokens }
}

/// Tokenizes text that is already NFC-normalized, keeping byte spans so callers
/// can recover the original (cased) surface text of a token run.
pub fn token_spans(normalized: &str) -> Vec<SpannedToken> {
    let mut out = Vec::new();
    let mut word_start: Option<usize> = None;

    let flush = |out: &mut Vec<SpannedToken>, start: usize, end: usize| {
        out.push(SpannedToken { text: normalized[start..end].to_lowercase(), span: start..end });
    };

    for (idx, ch) in normalized.char_indices() {
        if ch.is_alphanumeric() || (word_start.is_some() && is_combining_mark(ch)) {
            if word_start.is_none() {
                word_start = Some(idx);
            }
            continue;
        }
        if let Some(start) = word_start.take() {
            flush(&mut out, start, idx);
        }
        if !ch.is_whitespace() {
            flush(&mut out, idx, idx + ch.len_utf8());
        }
    }
    if let Some(start) = word_start {
        flush(&mut out, start, normalized.len());
    }
    out
}

pub fn nfc(text: &str) -> String {
    text.nfc().collect()
}
