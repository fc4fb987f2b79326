//! Question-answer records, isolated per-expert datasets, the orchestrator
//! dataset, splits and JSONL persistence.

mod build;
mod generate;
mod io;
mod split;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::BackendError;

pub use build::{build_expert_datasets, build_orchestrator_dataset, pooled_split};
pub use generate::{
    generate_corpus_qa, generate_qa, parse_question_list, render_question_prompt, AnswerMode, QaOptions,
    TemplateQuestionGenerator, DEFAULT_QUESTIONS_PER_CHUNK,
};
pub use io::{load_dataset, manifest_path, save_dataset, DatasetManifest, SplitCounts};
pub use split::{split_dataset, SplitOutcome, SplitRatios};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "validation" | "val" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

/// One question-answer record. Field order is the fixed JSONL field order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QAPair {
    pub pair_id: String,
    pub question: String,
    pub answer: String,
    pub expert_name: String,
    pub split: Split,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    /// One expert's pairs; answers are procedure text from that expert's chunk.
    Expert,
    /// Same questions as the experts; answers are expert names.
    Orchestrator,
    /// Pairs pooled across experts with procedure answers, used for scoring a
    /// whole graph.
    Evaluation,
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetKind::Expert => "expert",
            DatasetKind::Orchestrator => "orchestrator",
            DatasetKind::Evaluation => "evaluation",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub kind: DatasetKind,
    pub pairs: Vec<QAPair>,
    /// `doc_id` of the corpus the pairs were generated from, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_doc_id: Option<String>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, kind: DatasetKind, pairs: Vec<QAPair>) -> Self {
        Self { name: name.into(), kind, pairs, source_doc_id: None }
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    /// Pairs tagged with `split`, in dataset order.
    pub fn split(&self, split: Split) -> Dataset {
        Dataset {
            name: self.name.clone(),
            kind: self.kind,
            pairs: self.pairs.iter().filter(|p| p.split == split).cloned().collect(),
            source_doc_id: self.source_doc_id.clone(),
        }
    }

    pub fn counts(&self) -> SplitCounts {
        let mut counts = SplitCounts::default();
        for p in &self.pairs {
            match p.split {
                Split::Train => counts.train += 1,
                Split::Validation => counts.validation += 1,
                Split::Test => counts.test += 1,
            }
        }
        counts
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset integrity: {0}")]
    Integrity(String),
    #[error("generation failed for chunk {chunk_id}: {source}")]
    Backend {
        chunk_id: String,
        #[source]
        source: BackendError,
    },
    #[error("could not parse a question list from backend output: {raw:?}")]
    Format { raw: String },
    #[error("invalid split ratios: {0}")]
    InvalidRatios(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{path}: line {line}: {message}")]
    Load { path: PathBuf, line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
