use serde::{Deserialize, Serialize};

use super::lcs::lcs_length;
use super::tokenize::{nfc, tokenize};

/// Precision, recall and F1 of a ROUGE-L comparison.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RougeL {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Whole-text ROUGE-L with β = 1. An empty prediction or reference scores zero.
pub fn rouge_l(prediction: &str, reference: &str) -> RougeL {
    let pred = tokenize(prediction);
    let refr = tokenize(reference);
    rouge_l_tokens(pred.as_slice(), refr.as_slice())
}

pub fn rouge_l_tokens(pred: &[String], reference: &[String]) -> RougeL {
    if pred.is_empty() || reference.is_empty() {
        return RougeL::default();
    }
    let lcs = lcs_length(pred, reference) as f64;
    let precision = lcs / pred.len() as f64;
    let recall = lcs / reference.len() as f64;
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    RougeL { precision, recall, f1 }
}

/// Case-sensitive string equality after NFC normalization and whitespace
/// collapsing.
pub fn exact_match(prediction: &str, reference: &str) -> bool {
    normalize_for_em(prediction) == normalize_for_em(reference)
}

fn normalize_for_em(text: &str) -> String {
    nfc(text).split_whitespace().collect::<Vec<_>>().join(" ")
}
