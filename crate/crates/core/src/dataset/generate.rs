use std::collections::{BTreeSet, HashMap, HashSet};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{DatasetError, QAPair, Split};
use crate::backends::{
    generate, BackendError, Capabilities, GenerationBackend, GenerationRequest, GenerationResponse, Usage,
};
use crate::corpus::{sentences, Chunk};
use crate::eval::tokenize;
use crate::util::sha256_hex;

pub const DEFAULT_QUESTIONS_PER_CHUNK: usize = 5;

const PASSAGE_MARKER: &str = "Passage:\n";

/// Which text becomes the answer of a generated pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnswerMode {
    /// The whole chunk body.
    #[default]
    Full,
    /// The body sentence sharing the most tokens with the question.
    Extractive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QaOptions {
    pub n_questions: usize,
    pub seed: u64,
    pub answer_mode: AnswerMode,
}

impl Default for QaOptions {
    fn default() -> Self {
        Self { n_questions: DEFAULT_QUESTIONS_PER_CHUNK, seed: 0, answer_mode: AnswerMode::Full }
    }
}

pub fn render_question_prompt(passage: &str, n: usize) -> String {
    format!(
        "Write {n} standalone questions that can be answered solely from the passage below. \
         Return one question per line with no numbering and no other text.\n\n{PASSAGE_MARKER}{passage}"
    )
}

/// Splits a line-per-question reply into questions, dropping list markers,
/// blank lines and repeats.
pub fn parse_question_list(raw: &str) -> Result<Vec<String>, DatasetError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for line in raw.lines() {
        let q = strip_marker(line.trim()).trim();
        if q.is_empty() || !q.chars().any(char::is_alphanumeric) {
            continue;
        }
        if seen.insert(q.to_string()) {
            out.push(q.to_string());
        }
    }
    if out.is_empty() {
        return Err(DatasetError::Format { raw: raw.to_string() });
    }
    Ok(out)
}

fn strip_marker(line: &str) -> &str {
    let line = line.trim_start_matches(['-', '*', '•']).trim_start();
    // "Q3:", "Question 3:"
    for prefix in ["Question", "Q"] {
        if let Some(rest) = line.strip_prefix(prefix) {
            let digits = rest.trim_start().trim_start_matches(|c: char| c.is_ascii_digit());
            if digits.len() < rest.trim_start().len() {
                if let Some(r) = digits.strip_prefix([':', '.', ')']) {
                    return r;
                }
            }
        }
    }
    // "3.", "3)", "(3)"
    let open = line.strip_prefix('(').unwrap_or(line);
    let digits = open.trim_start_matches(|c: char| c.is_ascii_digit());
    if digits.len() < open.len() {
        if let Some(r) = digits.strip_prefix(['.', ')', ':']) {
            return r;
        }
    }
    line
}

fn chunk_seed(seed: u64, chunk_id: &str) -> u64 {
    let digest = sha256_hex(chunk_id.as_bytes());
    seed ^ u64::from_str_radix(&digest[..16], 16).expect("hex digest")
}

/// Asks `backend` for questions about `chunk` and pairs each with an answer
/// taken from the chunk. Returns at most `n_questions` pairs, tagged `train`.
pub fn generate_qa(
    chunk: &Chunk,
    backend: &dyn GenerationBackend,
    opts: &QaOptions,
) -> Result<Vec<QAPair>, DatasetError> {
    if opts.n_questions == 0 {
        return Err(DatasetError::InvalidArgument("n_questions must be at least 1".into()));
    }
    let request = GenerationRequest::user(render_question_prompt(&chunk.text, opts.n_questions))
        .with_seed(chunk_seed(opts.seed, &chunk.chunk_id))
        .with_max_tokens(64 * opts.n_questions as u32);
    let response = generate(backend, &request)
        .map_err(|source| DatasetError::Backend { chunk_id: chunk.chunk_id.clone(), source })?;
    let questions = parse_question_list(&response.content)?;

    Ok(questions
        .into_iter()
        .take(opts.n_questions)
        .enumerate()
        .map(|(i, question)| {
            let answer = match opts.answer_mode {
                AnswerMode::Full => chunk.body().to_string(),
                AnswerMode::Extractive => extract_answer(chunk.body(), &question),
            };
            QAPair {
                pair_id: format!("{}-q{:03}", chunk.chunk_id, i + 1),
                question,
                answer,
                expert_name: chunk.expert_name.clone(),
                split: Split::Train,
            }
        })
        .collect())
}

/// Runs [`generate_qa`] over every chunk in parallel. Output order follows
/// `chunk_id`; on failure every failing chunk is reported.
pub fn generate_corpus_qa(
    chunks: &[Chunk],
    backend: &dyn GenerationBackend,
    opts: &QaOptions,
) -> Result<Vec<QAPair>, Vec<(String, DatasetError)>> {
    let mut ordered: Vec<&Chunk> = chunks.iter().collect();
    ordered.sort_by(|a, b| a.chunk_id.cmp(&b.chunk_id));
    let results: Vec<_> =
        ordered.par_iter().map(|chunk| (chunk.chunk_id.clone(), generate_qa(chunk, backend, opts))).collect();

    let mut pairs = Vec::new();
    let mut failures = Vec::new();
    for (chunk_id, result) in results {
        match result {
            Ok(p) => pairs.extend(p),
            Err(e) => failures.push((chunk_id, e)),
        }
    }
    if failures.is_empty() {
        Ok(pairs)
    } else {
        Err(failures)
    }
}

fn extract_answer(body: &str, question: &str) -> String {
    let q: BTreeSet<String> = tokenize(question).tokens.into_iter().collect();
    let sents = sentences(body);
    let mut best: Option<(usize, &str)> = None;
    for s in &sents {
        let overlap = s.tokens.iter().filter(|t| q.contains(*t)).count();
        if best.is_none_or(|(b, _)| overlap > b) {
            best = Some((overlap, s.text.as_str()));
        }
    }
    match best {
        Some((n, text)) if n > 0 => text.to_string(),
        _ => body.to_string(),
    }
}

const STOP_WORDS: &[&str] = &[
    "a", "about", "above", "after", "all", "also", "an", "and", "any", "are", "as", "at", "be", "been", "before",
    "being", "between", "both", "but", "by", "can", "could", "do", "does", "each", "for", "from", "has", "have", "if",
    "in", "into", "is", "it", "its", "may", "more", "most", "must", "no", "not", "of", "on", "or", "other", "shall",
    "should", "such", "than", "that", "the", "their", "them", "then", "there", "these", "they", "this", "those",
    "through", "to", "under", "up", "use", "used", "using", "was", "were", "when", "where", "which", "while", "will",
    "with", "within", "would",
];

const TEMPLATES: &[&str] = &[
    "What does the procedure specify about {a} and {b}?",
    "How should {a} be handled when {b} is involved?",
    "What criteria apply to {a} in relation to {b} and {c}?",
    "Which limits govern {a} and {c}?",
    "When is {b} required for {a}?",
    "What steps are described for {a} involving {b}?",
    "How is {c} assessed with respect to {a}?",
    "What are the key factors that determine how {a}, {b} and {c} are treated?",
];

const KEYWORDS: usize = 6;

/// Offline question generator. Questions are filled-in templates naming the
/// passage's most distinctive words, ranked by term frequency times
/// corpus-level inverse document frequency. Template order comes from the
/// request seed, so output is a pure function of the request.
pub struct TemplateQuestionGenerator {
    idf: HashMap<String, f64>,
    unseen_idf: f64,
}

impl TemplateQuestionGenerator {
    pub fn new(chunks: &[Chunk]) -> Self {
        let n = chunks.len() as f64;
        let mut df: HashMap<String, f64> = HashMap::new();
        for c in chunks {
            let terms: HashSet<String> = tokenize(&c.text).tokens.into_iter().filter(|t| is_content_word(t)).collect();
            for t in terms {
                *df.entry(t).or_default() += 1.0;
            }
        }
        let idf = df.into_iter().map(|(t, d)| (t, ((n + 1.0) / (d + 1.0)).ln() + 1.0)).collect();
        Self { idf, unseen_idf: (n + 1.0).ln() + 1.0 }
    }

    fn keywords(&self, passage: &str) -> Vec<String> {
        let mut tf: HashMap<String, f64> = HashMap::new();
        for t in tokenize(passage).tokens.into_iter().filter(|t| is_content_word(t)) {
            *tf.entry(t).or_default() += 1.0;
        }
        let mut scored: Vec<(f64, String)> =
            tf.into_iter().map(|(t, f)| (f * self.idf.get(&t).copied().unwrap_or(self.unseen_idf), t)).collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
        scored.into_iter().take(KEYWORDS).map(|(_, t)| t).collect()
    }

    fn questions(&self, passage: &str, n: usize, seed: u64) -> Vec<String> {
        let keywords = self.keywords(passage);
        if keywords.is_empty() {
            return Vec::new();
        }
        let mut order: Vec<usize> = (0..TEMPLATES.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let k = keywords.len();
        (0..n)
            .map(|i| {
                let shift = i / TEMPLATES.len();
                let word = |j: usize| keywords[(j + shift) % k].as_str();
                TEMPLATES[order[i % TEMPLATES.len()]]
                    .replace("{a}", word(0))
                    .replace("{b}", word(1))
                    .replace("{c}", word(2))
            })
            .collect()
    }
}

fn is_content_word(t: &str) -> bool {
    t.chars().count() >= 3 && t.chars().all(char::is_alphabetic) && !STOP_WORDS.contains(&t)
}

/// Reads `n` from "Write {n} standalone questions" in a rendered prompt.
fn requested_count(prompt: &str) -> Option<usize> {
    prompt.strip_prefix("Write ")?.split_whitespace().next()?.parse().ok()
}

impl GenerationBackend for TemplateQuestionGenerator {
    fn backend_id(&self) -> &str {
        "template-questions"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { deterministic: true, remote: false }
    }

    fn complete(&self, request: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
        let started = Instant::now();
        let prompt = request.last_user_content();
        let (Some(n), Some((_, passage))) = (requested_count(prompt), prompt.split_once(PASSAGE_MARKER)) else {
            return Err(BackendError::InvalidRequest("not a question-generation prompt".into()));
        };
        let content = self.questions(passage, n, request.seed).join("\n");
        Ok(GenerationResponse {
            usage: Usage {
                prompt_tokens: tokenize(prompt).len() as u64,
                completion_tokens: tokenize(&content).len() as u64,
            },
            content,
            backend_id: self.backend_id().to_string(),
            latency: started.elapsed(),
        })
    }
}
