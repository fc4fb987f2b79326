mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{fixture, markdown, synthetic_manual};
use slg_core::corpus::{audit_overlap, chunk_by_subsection, sentences, Chunk, ChunkPolicy, OverlapEntry, SectionPath};

#[test]
fn srm_fixture_tree() {
    let corpus = markdown(&fixture("srm.md"));
    let paths: Vec<Vec<u32>> = corpus.sections.iter().map(|s| s.path.0.clone()).collect();
    let expected: Vec<Vec<u32>> =
        vec![vec![1], vec![1, 1], vec![1, 2], vec![2], vec![2, 1], vec![2, 2], vec![3], vec![3, 1], vec![3, 2]];
    assert_eq!(paths, expected);
    for s in &corpus.sections {
        assert_eq!(s.depth as usize, s.path.0.len());
        assert!(!s.body.contains('#'), "{:?}", s.body);
    }
    assert_eq!(corpus.sections[1].title, "1.1 Wing Damage Classification");
}

#[test]
fn srm_fixture_chunks_one_per_subsection() {
    let corpus = markdown(&fixture("srm.md"));
    let chunks = chunk_by_subsection(&corpus, ChunkPolicy { target_depth: 2, min_tokens: 0 }).unwrap();
    let names: Vec<&str> = chunks.iter().map(|c| c.expert_name.as_str()).collect();
    let depth_two = corpus.sections.iter().filter(|s| s.depth == 2).count();
    assert_eq!(chunks.len(), depth_two);
    assert_eq!(
        names,
        [
            "WING DAMAGE CLASSIFICATION",
            "WING SKIN REPAIRS",
            "FUSELAGE REPAIRS",
            "FUSELAGE INSPECTION",
            "CONTROL SURFACE REPAIRS",
            "CONTROL SURFACE BALANCING",
        ]
    );
    assert!(chunks[0].body().starts_with("Wing Fuel Bay Spars/Rib Damage Criteria"));
}

#[test]
fn table_one_prefix_collision() {
    let corpus = markdown(&fixture("shared_prefix.md"));
    let chunks = chunk_by_subsection(&corpus, ChunkPolicy { target_depth: 2, min_tokens: 0 }).unwrap();
    let report = audit_overlap(&chunks, 5);
    assert_eq!(report.entries.len(), 1);
    let e = &report.entries[0];
    assert_eq!(e.shared_prefix_text, "Damage which would involve a");
    // "damage which would involve a" is five tokens under the shared tokenizer
    assert_eq!(e.shared_prefix_token_count, 5);
    assert_eq!(
        (e.chunk_id_a.as_str(), e.chunk_id_b.as_str()),
        (chunks[0].chunk_id.as_str(), chunks[1].chunk_id.as_str())
    );
    assert!(audit_overlap(&chunks, 6).is_empty());
}

#[test]
fn srm_fixture_has_no_long_collisions() {
    let corpus = markdown(&fixture("srm.md"));
    let chunks = chunk_by_subsection(&corpus, ChunkPolicy { target_depth: 2, min_tokens: 0 }).unwrap();
    assert!(audit_overlap(&chunks, 5).is_empty());
}

fn chunk(i: usize, text: String) -> Chunk {
    Chunk {
        chunk_id: format!("c{i:02}"),
        expert_name: format!("E{i}"),
        source_path: SectionPath(vec![1, i as u32 + 1]),
        token_count: text.split_whitespace().count().max(1),
        text,
    }
}

/// Quadratic reference: every chunk pair, every sentence pair.
fn brute_force(chunks: &[Chunk], threshold: usize) -> Vec<OverlapEntry> {
    let sents: Vec<_> = chunks.iter().map(|c| sentences(&c.text)).collect();
    let mut out = Vec::new();
    for a in 0..chunks.len() {
        for b in 0..chunks.len() {
            if chunks[a].chunk_id >= chunks[b].chunk_id {
                continue;
            }
            let mut best: Option<(usize, usize, usize)> = None;
            for (si, x) in sents[a].iter().enumerate() {
                for (sj, y) in sents[b].iter().enumerate() {
                    let n = x.tokens.iter().zip(&y.tokens).take_while(|(p, q)| p == q).count();
                    let better = match best {
                        None => true,
                        Some((bn, bi, bj)) => n > bn || (n == bn && (si, sj) < (bi, bj)),
                    };
                    if better {
                        best = Some((n, si, sj));
                    }
                }
            }
            if let Some((n, si, _)) = best {
                if n >= threshold {
                    out.push(OverlapEntry {
                        chunk_id_a: chunks[a].chunk_id.clone(),
                        chunk_id_b: chunks[b].chunk_id.clone(),
                        shared_prefix_token_count: n,
                        shared_prefix_text: sents[a][si].prefix_text(n).to_string(),
                    });
                }
            }
        }
    }
    out.sort_by(|x, y| {
        y.shared_prefix_token_count
            .cmp(&x.shared_prefix_token_count)
            .then_with(|| x.chunk_id_a.cmp(&y.chunk_id_a))
            .then_with(|| x.chunk_id_b.cmp(&y.chunk_id_b))
    });
    out
}

const WORDS: &[&str] = &["Damage", "which", "would", "involve", "a", "repair", "skin", "panel"];

fn arb_chunks(n: usize) -> impl Strategy<Value = Vec<Chunk>> {
    let word = prop::sample::select(WORDS);
    let sentence = prop::collection::vec(word, 1..9).prop_map(|w| format!("{}.", w.join(" ")));
    let text = prop::collection::vec(sentence, 1..5).prop_map(|s| s.join(" "));
    prop::collection::vec(text, n).prop_map(|texts| texts.into_iter().enumerate().map(|(i, t)| chunk(i, t)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn audit_matches_brute_force(chunks in arb_chunks(50), threshold in 1usize..5) {
        prop_assert_eq!(audit_overlap(&chunks, threshold).entries, brute_force(&chunks, threshold));
    }

    #[test]
    fn audit_is_permutation_invariant(chunks in arb_chunks(12), seed in any::<u64>()) {
        let mut shuffled = chunks.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(audit_overlap(&chunks, 2), audit_overlap(&shuffled, 2));
    }

    #[test]
    fn reported_pairs_are_unique_and_above_threshold(chunks in arb_chunks(20), threshold in 1usize..6) {
        let report = audit_overlap(&chunks, threshold);
        let mut seen = std::collections::BTreeSet::new();
        for e in &report.entries {
            prop_assert!(e.shared_prefix_token_count >= threshold);
            prop_assert!(e.chunk_id_a < e.chunk_id_b);
            prop_assert!(seen.insert((e.chunk_id_a.clone(), e.chunk_id_b.clone())));
        }
    }

    #[test]
    fn chunk_bodies_partition_the_covered_text(tops in 1usize..5, subs in 1usize..5, seed in any::<u64>()) {
        let corpus = markdown(&synthetic_manual(tops, subs, seed));
        let chunks = chunk_by_subsection(&corpus, ChunkPolicy { target_depth: 2, min_tokens: 0 }).unwrap();
        let joined: String = chunks.iter().map(|c| c.text.as_str()).collect::<Vec<_>>().join("\n\n");
        for s in corpus.sections.iter().filter(|s| s.depth >= 2) {
            prop_assert_eq!(joined.matches(s.body.as_str()).count(), 1, "{}", s.path);
        }
        // chapter overviews sit above the target depth and stay out
        for s in corpus.sections.iter().filter(|s| s.depth == 1) {
            prop_assert!(!joined.contains(s.body.as_str()));
        }
        let mut names = BTreeMap::new();
        for c in &chunks {
            prop_assert!(names.insert(c.expert_name.clone(), ()).is_none());
        }
    }
}

#[test]
fn disjoint_vocabularies_report_nothing() {
    let chunks: Vec<Chunk> = ["alpha beta gamma delta.", "epsilon zeta eta theta.", "iota kappa lambda mu."]
        .iter()
        .enumerate()
        .map(|(i, t)| chunk(i, t.to_string()))
        .collect();
    assert!(audit_overlap(&chunks, 2).is_empty());
}

#[test]
fn undersized_sections_merge_into_preceding_sibling() {
    let raw = "# A\n## First\none two three four five six\n## Tiny\nseven\n# B\n## Lone\neight";
    let chunks = chunk_by_subsection(&markdown(raw), ChunkPolicy { target_depth: 2, min_tokens: 4 }).unwrap();
    let names: Vec<&str> = chunks.iter().map(|c| c.expert_name.as_str()).collect();
    assert_eq!(names, ["FIRST", "LONE"]);
    assert!(chunks[0].text.ends_with("Tiny\n\nseven"));
}
