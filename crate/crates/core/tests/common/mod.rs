#![allow(dead_code)]

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use slg_core::corpus::{chunk_by_subsection, parse_document, Chunk, ChunkPolicy, Corpus, DocumentFormat};

pub fn fixture(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn markdown(raw: &str) -> Corpus {
    parse_document(raw, DocumentFormat::MarkdownHeadings).unwrap()
}

const FILLER: &[&str] = &[
    "inspect",
    "the",
    "panel",
    "for",
    "cracks",
    "and",
    "corrosion",
    "before",
    "installing",
    "rivets",
    "along",
    "frame",
    "web",
    "replace",
    "damaged",
    "fasteners",
    "with",
    "approved",
    "parts",
    "torque",
    "bolts",
    "to",
    "limits",
    "seal",
    "edges",
    "after",
    "assembly",
];

const TOPICS: &[&str] = &[
    "Aileron", "Elevator", "Rudder", "Flap", "Spar", "Rib", "Stringer", "Bulkhead", "Longeron", "Firewall", "Cowling",
    "Strut", "Axle", "Hinge", "Bracket", "Doubler", "Fairing", "Canopy", "Keel", "Nacelle",
];

/// A markdown manual with `tops` chapters of `subs` sections each. Every
/// section body names a code word that appears nowhere else, e.g. `kw3x2`.
pub fn synthetic_manual(tops: usize, subs: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::new();
    for i in 1..=tops {
        out.push_str(&format!("# {i} {} Chapter {i}\n\nOverview of chapter {i}.\n\n", TOPICS[i % TOPICS.len()]));
        for j in 1..=subs {
            out.push_str(&format!("## {i}.{j} {} Procedure {i} {j}\n\n", TOPICS[(i * 7 + j) % TOPICS.len()]));
            let n_sentences = rng.gen_range(3..7);
            for s in 0..n_sentences {
                let len = rng.gen_range(6..14);
                let mut words: Vec<&str> = (0..len).map(|_| *FILLER.choose(&mut rng).unwrap()).collect();
                let code = format!("kw{i}x{j}");
                words.insert(rng.gen_range(0..words.len()), &code);
                let mut sentence = words.join(" ");
                sentence[..1].make_ascii_uppercase();
                out.push_str(&sentence);
                out.push_str(if s + 1 == n_sentences { ".\n\n" } else { ". " });
            }
        }
    }
    out
}

pub fn synthetic_chunks(tops: usize, subs: usize, seed: u64) -> Vec<Chunk> {
    let corpus = markdown(&synthetic_manual(tops, subs, seed));
    chunk_by_subsection(&corpus, ChunkPolicy { target_depth: 2, min_tokens: 0 }).unwrap()
}

/// The distinctive code word of section `i.j` in [`synthetic_manual`].
pub fn code_word(chunk: &Chunk) -> String {
    let p = &chunk.source_path.0;
    format!("kw{}x{}", p[0], p[1])
}

/// Runs the offline pipeline over `chunks` and writes the dataset layout the
/// sweep reads: `experts/*.jsonl`, `orchestrator.jsonl` and one pooled file
/// per split.
pub fn write_layout(dir: &std::path::Path, chunks: &[Chunk], n_questions: usize, seed: u64) {
    use slg_core::dataset::*;
    let gen = TemplateQuestionGenerator::new(chunks);
    let opts = QaOptions { n_questions, seed, ..Default::default() };
    let qa = generate_corpus_qa(chunks, &gen, &opts).unwrap();
    let experts = build_expert_datasets(chunks, &qa).unwrap();
    let experts: std::collections::BTreeMap<String, Dataset> = experts
        .into_iter()
        .map(|(k, ds)| (k, split_dataset(&ds, SplitRatios::default(), seed).unwrap().dataset))
        .collect();
    std::fs::create_dir_all(dir.join("experts")).unwrap();
    for (i, ds) in experts.values().enumerate() {
        save_dataset(ds, &dir.join(format!("experts/{i:03}.jsonl"))).unwrap();
    }
    save_dataset(&build_orchestrator_dataset(&experts).unwrap(), &dir.join("orchestrator.jsonl")).unwrap();
    for split in Split::ALL {
        save_dataset(&pooled_split(&experts, split), &dir.join(format!("{split}.jsonl"))).unwrap();
    }
}
