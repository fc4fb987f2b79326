use super::CorpusError;
use crate::eval::nfc;

/// Turns a subsection title into an expert label: uppercase, numbering
/// stripped, only letters, digits, spaces and hyphens kept.
///
/// Applied until a fixed point so that `f(f(x)) == f(x)` holds even when
/// removing punctuation exposes another numbering token (`"(3) Wing"`).
pub fn normalize_expert_name(title: &str) -> Result<String, CorpusError> {
    let mut current = nfc(title);
    for _ in 0..8 {
        let next = normalize_once(&current);
        if next == current {
            break;
        }
        current = next;
    }
    if current.is_empty() {
        return Err(CorpusError::InvalidTitle { title: title.to_string() });
    }
    Ok(current)
}

fn normalize_once(title: &str) -> String {
    let mut words: Vec<&str> = title.split_whitespace().collect();
    while words.len() > 1 && is_numbering(words[0]) {
        words.remove(0);
    }
    if words.len() == 1 && is_numbering(words[0]) {
        words.clear();
    }
    let kept: String = words.join(" ").chars().filter(|c| c.is_alphanumeric() || *c == ' ' || *c == '-').collect();
    kept.to_uppercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

/// "3", "3.1", "3.1.", "3)", "A.", "b)", "IV."
fn is_numbering(token: &str) -> bool {
    let core = token.strip_suffix(['.', ')']).unwrap_or(token);
    if core.is_empty() {
        return false;
    }
    let dotted_digits = core.split('.').all(|p| !p.is_empty() && p.chars().all(|c| c.is_ascii_digit()));
    let has_terminator = core.len() < token.len();
    let letter = core.chars().count() == 1 && core.chars().all(|c| c.is_alphabetic()) && has_terminator;
    let roman = has_terminator && core.chars().all(|c| "IVXLCivxlc".contains(c)) && core.len() <= 4;
    dotted_digits || letter || roman
}
