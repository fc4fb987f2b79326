//! Suffix-stripping stemmer covering the plural, past-tense and progressive
//! classes of English inflection. It is intentionally small: stems only need to
//! agree across inflections of the same technical term, not be real words.

const VOWELS: &[char] = &['a', 'e', 'i', 'o', 'u', 'y'];

pub fn stem(token: &str) -> String {
    if token.chars().count() <= 3 || !token.chars().all(|c| c.is_alphabetic()) {
        return token.to_string();
    }
    let mut word = token.to_string();

    // plural class
    if let Some(base) = word.strip_suffix("sses") {
        word = format!("{base}ss");
    } else if let Some(base) = word.strip_suffix("ies").filter(|b| b.len() >= 2) {
        word = format!("{base}y");
    } else if let Some(base) =
        word.strip_suffix("es").filter(|b| ["s", "x", "z", "ch", "sh"].iter().any(|s| b.ends_with(s)))
    {
        word = base.to_string();
    } else if word.ends_with('s') && !word.ends_with("ss") && !word.ends_with("us") && !word.ends_with("is") {
        word.pop();
    }

    // past tense and progressive
    if let Some(base) = word.strip_suffix("ied").filter(|b| b.len() >= 2) {
        word = format!("{base}y");
    } else if let Some(base) = strip_verbal(&word, "ed").or_else(|| strip_verbal(&word, "ing")) {
        word = undouble(base);
    }

    // drop a silent final e so "damage", "damaged" and "damaging" agree
    if word.len() > 3 && word.ends_with('e') && !word.ends_with("ee") {
        word.pop();
    }
    word
}

fn strip_verbal<'a>(word: &'a str, suffix: &str) -> Option<&'a str> {
    let base = word.strip_suffix(suffix)?;
    (base.len() >= 3 && base.contains(VOWELS)).then_some(base)
}

fn undouble(base: &str) -> String {
    let chars: Vec<char> = base.chars().collect();
    let n = chars.len();
    if n >= 2 && chars[n - 1] == chars[n - 2] && !VOWELS.contains(&chars[n - 1]) && !"lsz".contains(chars[n - 1]) {
        chars[..n - 1].iter().collect()
    } else {
        base.to_string()
    }
}
