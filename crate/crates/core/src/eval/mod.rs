//! ROUGE-L, Exact Match and METEOR over a shared tokenizer, plus evaluation
//! of whole systems against test datasets.

mod lcs;
mod meteor;
mod metrics;
mod report;
mod stem;
mod tokenize;

pub use lcs::lcs_length;
pub use meteor::{count_chunks, meteor, score_from_counts, Alignment, Meteor, SynonymTable};
pub use metrics::{exact_match, rouge_l, rouge_l_tokens, RougeL};
pub use report::{
    comparison_csv, comparison_markdown, evaluate_run, ComparisonRow, EvalError, EvalOptions, EvalTarget, ExampleScore,
    MetricReport,
};
pub use stem::stem;
pub use tokenize::{nfc, token_spans, tokenize, SpannedToken, TokenSequence};
