//! METEOR over staged unigram alignments.
//!
//! Stage 1 aligns identical tokens, stage 2 aligns tokens whose stems agree,
//! and an optional stage 3 aligns tokens whose stems share a synonym group.
//! Every stage only sees tokens left unaligned by the earlier ones and aligns
//! as many as it can. Among all alignments of that cardinality the one with the
//! fewest contiguous chunks is chosen.
//!
//! Minimising chunks is a common-string-partition problem, so the search is a
//! depth-first branch and bound seeded with a greedy longest-run alignment. It
//! is exact whenever it finishes inside the node budget, which covers any
//! realistic answer whose repeated tokens are not pathological. When the budget
//! runs out the best alignment found so far is used.

use std::collections::HashMap;

use super::stem::stem;
use super::tokenize::tokenize;

const DEFAULT_NODE_BUDGET: usize = 250_000;

/// Groups of interchangeable words for the synonym stage. Entries are stemmed
/// on insertion, so the stage only ever compares stems.
#[derive(Debug, Clone, Default)]
pub struct SynonymTable {
    group_of: HashMap<String, usize>,
}

impl SynonymTable {
    pub fn new<G, W>(groups: G) -> Self
    where
        G: IntoIterator<Item = W>,
        W: IntoIterator,
        W::Item: AsRef<str>,
    {
        let mut group_of = HashMap::new();
        for (gid, words) in groups.into_iter().enumerate() {
            for w in words {
                for tok in tokenize(w.as_ref()).tokens {
                    group_of.entry(stem(&tok)).or_insert(gid);
                }
            }
        }
        Self { group_of }
    }

    pub fn is_empty(&self) -> bool {
        self.group_of.is_empty()
    }

    fn group(&self, stemmed: &str) -> Option<usize> {
        self.group_of.get(stemmed).copied()
    }
}

/// An alignment between prediction and reference token positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    /// `(prediction index, reference index)` pairs sorted by prediction index.
    pub pairs: Vec<(usize, usize)>,
    pub chunks: usize,
    /// Whether the branch and bound proved `chunks` minimal.
    pub exact: bool,
}

impl Alignment {
    pub fn matches(&self) -> usize {
        self.pairs.len()
    }
}

#[derive(Debug, Clone)]
pub struct Meteor {
    synonyms: SynonymTable,
    node_budget: usize,
}

impl Default for Meteor {
    fn default() -> Self {
        Self { synonyms: SynonymTable::default(), node_budget: DEFAULT_NODE_BUDGET }
    }
}

impl Meteor {
    pub fn with_synonyms(mut self, synonyms: SynonymTable) -> Self {
        self.synonyms = synonyms;
        self
    }

    pub fn with_node_budget(mut self, budget: usize) -> Self {
        self.node_budget = budget.max(1);
        self
    }

    pub fn score(&self, prediction: &str, reference: &str) -> f64 {
        let pred = tokenize(prediction);
        let refr = tokenize(reference);
        self.score_tokens(pred.as_slice(), refr.as_slice())
    }

    pub fn score_tokens(&self, pred: &[String], reference: &[String]) -> f64 {
        let alignment = self.align(pred, reference);
        score_from_counts(alignment.matches(), alignment.chunks, pred.len(), reference.len())
    }

    pub fn align(&self, pred: &[String], reference: &[String]) -> Alignment {
        let problem = Problem::new(pred, reference, &self.synonyms);
        problem.solve(self.node_budget)
    }
}

pub fn meteor(prediction: &str, reference: &str) -> f64 {
    Meteor::default().score(prediction, reference)
}

/// The METEOR formula given an alignment's match and chunk counts.
pub fn score_from_counts(matches: usize, chunks: usize, pred_len: usize, ref_len: usize) -> f64 {
    if matches == 0 {
        return 0.0;
    }
    let m = matches as f64;
    let precision = m / pred_len as f64;
    let recall = m / ref_len as f64;
    let fmean = 10.0 * precision * recall / (recall + 9.0 * precision);
    let penalty = 0.5 * (chunks as f64 / m).powi(3);
    fmean * (1.0 - penalty)
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    ref_idx: usize,
    counter: usize,
}

struct Problem {
    pred_len: usize,
    ref_len: usize,
    /// For each prediction token, compatible reference positions (ascending)
    /// with the requirement counter the pair would consume.
    candidates: Vec<Vec<Candidate>>,
    /// Stage of each counter (1, 2 or 3); candidates are greedily taken stage by stage.
    counter_stage: Vec<u8>,
    required: Vec<usize>,
    total: usize,
}

impl Problem {
    fn new(pred: &[String], reference: &[String], synonyms: &SynonymTable) -> Self {
        let pred_stems: Vec<String> = pred.iter().map(|t| stem(t)).collect();
        let ref_stems: Vec<String> = reference.iter().map(|t| stem(t)).collect();

        let mut counter_ids: HashMap<(u8, String), usize> = HashMap::new();
        let mut counter_stage = Vec::new();
        let mut required = Vec::new();

        // stage 1: identical surfaces
        let mut pred_surface: HashMap<&str, usize> = HashMap::new();
        let mut ref_surface: HashMap<&str, usize> = HashMap::new();
        for t in pred {
            *pred_surface.entry(t.as_str()).or_default() += 1;
        }
        for t in reference {
            *ref_surface.entry(t.as_str()).or_default() += 1;
        }
        let mut pred_left_by_stem: HashMap<String, usize> = HashMap::new();
        let mut ref_left_by_stem: HashMap<String, usize> = HashMap::new();
        let mut sorted_surfaces: Vec<&str> = pred_surface.keys().chain(ref_surface.keys()).copied().collect();
        sorted_surfaces.sort_unstable();
        sorted_surfaces.dedup();
        for surface in sorted_surfaces {
            let cp = pred_surface.get(surface).copied().unwrap_or(0);
            let cr = ref_surface.get(surface).copied().unwrap_or(0);
            let m = cp.min(cr);
            if m > 0 {
                counter_ids.insert((1, surface.to_string()), required.len());
                counter_stage.push(1);
                required.push(m);
            }
            let s = stem(surface);
            *pred_left_by_stem.entry(s.clone()).or_default() += cp - m;
            *ref_left_by_stem.entry(s).or_default() += cr - m;
        }

        // stage 2: shared stems among the leftovers
        let mut pred_left_by_group: HashMap<usize, usize> = HashMap::new();
        let mut ref_left_by_group: HashMap<usize, usize> = HashMap::new();
        let mut stems: Vec<&String> = pred_left_by_stem.keys().collect();
        stems.sort_unstable();
        for s in stems {
            let p = pred_left_by_stem[s];
            let r = ref_left_by_stem.get(s).copied().unwrap_or(0);
            let m = p.min(r);
            if m > 0 {
                counter_ids.insert((2, s.clone()), required.len());
                counter_stage.push(2);
                required.push(m);
            }
            if let Some(g) = synonyms.group(s) {
                *pred_left_by_group.entry(g).or_default() += p - m;
            }
        }
        for (s, &r) in &ref_left_by_stem {
            if let Some(g) = synonyms.group(s) {
                let p = pred_left_by_stem.get(s).copied().unwrap_or(0);
                *ref_left_by_group.entry(g).or_default() += r - p.min(r);
            }
        }

        // stage 3: synonym groups among what is still unaligned
        let mut groups: Vec<usize> = pred_left_by_group.keys().copied().collect();
        groups.sort_unstable();
        for g in groups {
            let m = pred_left_by_group[&g].min(ref_left_by_group.get(&g).copied().unwrap_or(0));
            if m > 0 {
                counter_ids.insert((3, g.to_string()), required.len());
                counter_stage.push(3);
                required.push(m);
            }
        }

        let mut candidates = vec![Vec::new(); pred.len()];
        for (i, p) in pred.iter().enumerate() {
            for (j, r) in reference.iter().enumerate() {
                let key = if p == r {
                    Some((1u8, p.clone()))
                } else if pred_stems[i] == ref_stems[j] {
                    Some((2u8, pred_stems[i].clone()))
                } else {
                    match (synonyms.group(&pred_stems[i]), synonyms.group(&ref_stems[j])) {
                        (Some(a), Some(b)) if a == b => Some((3u8, a.to_string())),
                        _ => None,
                    }
                };
                if let Some(counter) = key.and_then(|k| counter_ids.get(&k).copied()) {
                    candidates[i].push(Candidate { ref_idx: j, counter });
                }
            }
        }

        let total = required.iter().sum();
        Self { pred_len: pred.len(), ref_len: reference.len(), candidates, counter_stage, required, total }
    }

    fn solve(&self, budget: usize) -> Alignment {
        if self.total == 0 {
            return Alignment { pairs: Vec::new(), chunks: 0, exact: true };
        }
        let greedy = self.greedy();
        let mut search = Search {
            problem: self,
            remaining: self.required.clone(),
            ref_used: vec![false; self.ref_len],
            assignment: vec![None; self.pred_len],
            best_chunks: count_chunks(&greedy),
            best: greedy,
            nodes_left: budget,
        };
        search.dfs(0, 0, 0, 0);
        let exact = search.nodes_left > 0;
        let chunks = search.best_chunks;
        Alignment { pairs: search.best, chunks, exact }
    }

    /// Stage by stage, repeatedly take the longest diagonal run of
    /// still-available pairs.
    fn greedy(&self) -> Vec<(usize, usize)> {
        let mut remaining = self.required.clone();
        let mut pred_used = vec![false; self.pred_len];
        let mut ref_used = vec![false; self.ref_len];
        let mut pairs = Vec::with_capacity(self.total);

        let lookup: Vec<HashMap<usize, usize>> =
            self.candidates.iter().map(|cs| cs.iter().map(|c| (c.ref_idx, c.counter)).collect()).collect();

        for stage in 1..=3u8 {
            loop {
                let mut best: Option<(usize, usize, usize)> = None;
                for i in 0..self.pred_len {
                    if pred_used[i] {
                        continue;
                    }
                    for c in &self.candidates[i] {
                        if self.counter_stage[c.counter] != stage || ref_used[c.ref_idx] || remaining[c.counter] == 0 {
                            continue;
                        }
                        let mut used: HashMap<usize, usize> = HashMap::new();
                        let mut len = 0;
                        while i + len < self.pred_len && c.ref_idx + len < self.ref_len {
                            let (pi, rj) = (i + len, c.ref_idx + len);
                            if pred_used[pi] || ref_used[rj] {
                                break;
                            }
                            let Some(&counter) = lookup[pi].get(&rj) else { break };
                            if self.counter_stage[counter] != stage {
                                break;
                            }
                            let taken = used.entry(counter).or_default();
                            if *taken >= remaining[counter] {
                                break;
                            }
                            *taken += 1;
                            len += 1;
                        }
                        if best.is_none_or(|(_, _, l)| len > l) {
                            best = Some((i, c.ref_idx, len));
                        }
                    }
                }
                let Some((i, j, len)) = best else { break };
                for k in 0..len {
                    let counter = lookup[i + k][&(j + k)];
                    remaining[counter] -= 1;
                    pred_used[i + k] = true;
                    ref_used[j + k] = true;
                    pairs.push((i + k, j + k));
                }
            }
        }
        pairs.sort_unstable();
        pairs
    }
}

struct Search<'a> {
    problem: &'a Problem,
    remaining: Vec<usize>,
    ref_used: Vec<bool>,
    assignment: Vec<Option<usize>>,
    best: Vec<(usize, usize)>,
    best_chunks: usize,
    nodes_left: usize,
}

impl Search<'_> {
    fn dfs(&mut self, i: usize, matched: usize, skipped: usize, chunks: usize) {
        if self.nodes_left == 0 {
            return;
        }
        self.nodes_left -= 1;
        let p = self.problem;
        if matched == p.total {
            if chunks < self.best_chunks {
                self.best_chunks = chunks;
                self.best = self.assignment.iter().enumerate().filter_map(|(i, a)| a.map(|j| (i, j))).collect();
            }
            return;
        }
        if i == p.pred_len || chunks >= self.best_chunks || p.pred_len - i < p.total - matched {
            return;
        }

        let continues = i.checked_sub(1).and_then(|prev| self.assignment[prev]).map(|j| j + 1);

        if let Some(next) = continues {
            if let Some(c) = p.candidates[i].iter().find(|c| c.ref_idx == next).copied() {
                if self.try_take(i, c) {
                    self.dfs(i + 1, matched + 1, skipped, chunks);
                    self.untake(i, c);
                }
            }
        }
        if chunks + 1 < self.best_chunks {
            for idx in 0..p.candidates[i].len() {
                let c = p.candidates[i][idx];
                if Some(c.ref_idx) == continues {
                    continue;
                }
                if self.try_take(i, c) {
                    self.dfs(i + 1, matched + 1, skipped, chunks + 1);
                    self.untake(i, c);
                }
                if self.nodes_left == 0 {
                    return;
                }
            }
        }
        if skipped < p.pred_len - p.total {
            self.dfs(i + 1, matched, skipped + 1, chunks);
        }
    }

    fn try_take(&mut self, i: usize, c: Candidate) -> bool {
        if self.ref_used[c.ref_idx] || self.remaining[c.counter] == 0 {
            return false;
        }
        self.ref_used[c.ref_idx] = true;
        self.remaining[c.counter] -= 1;
        self.assignment[i] = Some(c.ref_idx);
        true
    }

    fn untake(&mut self, i: usize, c: Candidate) {
        self.ref_used[c.ref_idx] = false;
        self.remaining[c.counter] += 1;
        self.assignment[i] = None;
    }
}

/// Number of maximal runs in which consecutive prediction positions map to
/// consecutive reference positions. `pairs` must be sorted by prediction index.
pub fn count_chunks(pairs: &[(usize, usize)]) -> usize {
    pairs
        .iter()
        .enumerate()
        .filter(|&(k, &(i, j))| k == 0 || pairs[k - 1] != (i.wrapping_sub(1), j.wrapping_sub(1)))
        .count()
}
