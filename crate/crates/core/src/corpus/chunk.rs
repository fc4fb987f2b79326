use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{normalize_expert_name, Chunk, Corpus, CorpusError, Section, SectionPath, PARAGRAPH_BREAK};
use crate::eval::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkPolicy {
    /// Section depth that becomes one expert each.
    pub target_depth: usize,
    /// Chunks with fewer tokens are folded into their preceding sibling.
    pub min_tokens: usize,
}

impl Default for ChunkPolicy {
    fn default() -> Self {
        Self { target_depth: 2, min_tokens: 50 }
    }
}

/// Emits one chunk per section at `policy.target_depth`, holding the section's
/// title, body and every descendant heading and body in document order.
///
/// Sections above the target depth contribute no chunk of their own. A chunk
/// under `min_tokens` is appended to the preceding chunk with the same parent;
/// a leading undersized chunk has no preceding sibling and stays on its own.
pub fn chunk_by_subsection(corpus: &Corpus, policy: ChunkPolicy) -> Result<Vec<Chunk>, CorpusError> {
    if policy.target_depth == 0 {
        return Err(CorpusError::InvalidPolicy("target_depth must be at least 1".into()));
    }

    let targets: Vec<(usize, &Section)> =
        corpus.sections.iter().enumerate().filter(|(_, s)| s.path.depth() == policy.target_depth).collect();
    if targets.is_empty() {
        return Err(CorpusError::EmptyChunking { depth: policy.target_depth });
    }

    let mut by_name: BTreeMap<String, Vec<SectionPath>> = BTreeMap::new();
    let mut named = Vec::with_capacity(targets.len());
    for &(idx, section) in &targets {
        let name = normalize_expert_name(&section.title)?;
        by_name.entry(name.clone()).or_default().push(section.path.clone());
        named.push((idx, section, name));
    }
    if let Some((name, paths)) = by_name.into_iter().find(|(_, paths)| paths.len() > 1) {
        return Err(CorpusError::NameCollision { name, paths });
    }

    let mut chunks: Vec<Chunk> = Vec::with_capacity(named.len());
    for (idx, section, expert_name) in named {
        let mut parts = vec![section.title.as_str()];
        if !section.body.is_empty() {
            parts.push(&section.body);
        }
        for desc in corpus.sections[idx + 1..].iter().take_while(|d| section.path.is_ancestor_of(&d.path)) {
            parts.push(&desc.title);
            if !desc.body.is_empty() {
                parts.push(&desc.body);
            }
        }
        let text = parts.join(PARAGRAPH_BREAK);
        let candidate = Chunk {
            chunk_id: format!("{}-s{}", corpus.doc_id, section.path),
            expert_name,
            source_path: section.path.clone(),
            token_count: tokenize(&text).len(),
            text,
        };

        match chunks.last_mut() {
            Some(prev)
                if candidate.token_count < policy.min_tokens
                    && prev.source_path.parent() == candidate.source_path.parent() =>
            {
                prev.text.push_str(PARAGRAPH_BREAK);
                prev.text.push_str(&candidate.text);
                prev.token_count = tokenize(&prev.text).len();
            }
            _ => chunks.push(candidate),
        }
    }
    Ok(chunks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_document, DocumentFormat};

    fn corpus(raw: &str) -> Corpus {
        parse_document(raw, DocumentFormat::MarkdownHeadings).unwrap()
    }

    fn policy(depth: usize, min: usize) -> ChunkPolicy {
        ChunkPolicy { target_depth: depth, min_tokens: min }
    }

    #[test]
    fn single_section_identity() {
        let c = corpus("# Landing Gear\nCheck the strut.");
        let chunks = chunk_by_subsection(&c, policy(1, 0)).unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].text, "Landing Gear\n\nCheck the strut.");
        assert_eq!(chunks[0].body(), "Check the strut.");
        assert_eq!(chunks[0].expert_name, "LANDING GEAR");
        assert_eq!(chunks[0].token_count, 6);
    }

    #[test]
    fn duplicate_titles_collide() {
        let c = corpus("# A\n## Inspection\nx\n# B\n## Inspection\ny");
        match chunk_by_subsection(&c, policy(2, 0)) {
            Err(CorpusError::NameCollision { name, paths }) => {
                assert_eq!(name, "INSPECTION");
                assert_eq!(paths, vec![SectionPath(vec![1, 1]), SectionPath(vec![2, 1])]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn no_sections_at_depth() {
        let c = corpus("# A\nx");
        assert_eq!(chunk_by_subsection(&c, policy(2, 0)), Err(CorpusError::EmptyChunking { depth: 2 }));
        assert!(matches!(chunk_by_subsection(&c, policy(0, 0)), Err(CorpusError::InvalidPolicy(_))));
    }

    #[test]
    fn descendants_fold_into_their_chunk() {
        let c = corpus("# Wing\nintro\n## Damage Classification\n### Spar Criteria\nNegligible damage: dents.\n### Rib Criteria\nCracks.\n## Skin\nPatch it.");
        let chunks = chunk_by_subsection(&c, policy(2, 0)).unwrap();
        assert_eq!(chunks.len(), 2);
        assert_eq!(
            chunks[0].text,
            "Damage Classification\n\nSpar Criteria\n\nNegligible damage: dents.\n\nRib Criteria\n\nCracks."
        );
        assert!(chunks[0].body().starts_with("Spar Criteria"));
        assert!(!chunks.iter().any(|ch| ch.text.contains("intro")));
    }

    #[test]
    fn small_chunks_merge_into_preceding_sibling() {
        let long = "word ".repeat(60);
        let raw = format!("# A\n## Big\n{long}\n## Tiny\nshort\n# B\n## Lonely\nshort too\n## Next\n{long}");
        let chunks = chunk_by_subsection(&corpus(&raw), policy(2, 50)).unwrap();
        let names: Vec<&str> = chunks.iter().map(|c| c.expert_name.as_str()).collect();
        // "Tiny" folds into "Big"; "Lonely" has no preceding sibling under B.
        assert_eq!(names, ["BIG", "LONELY", "NEXT"]);
        assert!(chunks[0].text.ends_with("Tiny\n\nshort"));
        assert_eq!(chunks[0].token_count, tokenize(&chunks[0].text).len());
    }

    #[test]
    fn merging_never_crosses_parents() {
        let long = "word ".repeat(60);
        let raw = format!("# A\n## Big\n{long}\n# B\n## Tiny\nshort");
        let chunks = chunk_by_subsection(&corpus(&raw), policy(2, 50)).unwrap();
        assert_eq!(chunks.len(), 2);
    }
}
