use serde::{Deserialize, Serialize};

use super::Resolution;
use crate::corpus::normalize_expert_name;

/// How an orchestrator output was mapped onto a registered expert.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResolutionMethod {
    /// The trimmed output was a registered name verbatim.
    Exact,
    /// The output needed normalization and/or a bounded token edit.
    Fuzzy,
    Failed,
}

pub(crate) fn resolve<'a, I>(raw: &str, names: I, mode: Resolution) -> (Option<String>, ResolutionMethod)
where
    I: IntoIterator<Item = &'a str> + Clone,
{
    let trimmed = raw.trim();
    if names.clone().into_iter().any(|n| n == trimmed) {
        return (Some(trimmed.to_string()), ResolutionMethod::Exact);
    }
    let Ok(normalized) = normalize_expert_name(raw) else {
        return (None, ResolutionMethod::Failed);
    };
    if names.clone().into_iter().any(|n| n == normalized) {
        return (Some(normalized), ResolutionMethod::Fuzzy);
    }
    let Resolution::Fuzzy { max_edit_distance } = mode else {
        return (None, ResolutionMethod::Failed);
    };

    let raw_tokens: Vec<&str> = normalized.split(' ').collect();
    let mut best: Option<(usize, &str)> = None;
    for name in names {
        let name_tokens: Vec<&str> = name.split(' ').collect();
        let d = token_edit_distance(&raw_tokens, &name_tokens);
        if d <= max_edit_distance && best.is_none_or(|(bd, bn)| d < bd || (d == bd && name < bn)) {
            best = Some((d, name));
        }
    }
    match best {
        Some((_, name)) => (Some(name.to_string()), ResolutionMethod::Fuzzy),
        None => (None, ResolutionMethod::Failed),
    }
}

/// Levenshtein distance over whole tokens.
pub fn token_edit_distance(a: &[&str], b: &[&str]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut curr = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        curr[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            curr[j + 1] = sub.min(prev[j + 1] + 1).min(curr[j] + 1);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}
