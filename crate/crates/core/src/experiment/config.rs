use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// Training settings shared by every run of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedHyperparameters {
    pub lora_dropout: f64,
    pub task_type: String,
    pub weight_decay: f64,
    pub label_smoothing: f64,
    pub optim: String,
    pub max_epochs: u32,
    pub early_stopping_patience: u32,
    pub eval_strategy: String,
    pub save_strategy: String,
    pub half_precision: bool,
    pub per_device_batch: u32,
    pub per_device_eval_batch: u32,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub max_grad_norm: f64,
    pub warmup_ratio: f64,
    pub scheduler: String,
    pub load_best_model_at_end: bool,
    pub save_total_limit: u32,
}

impl Default for FixedHyperparameters {
    fn default() -> Self {
        Self {
            lora_dropout: 0.05,
            task_type: "CAUSAL_LM".into(),
            weight_decay: 0.001,
            label_smoothing: 0.01,
            optim: "adamw_torch".into(),
            max_epochs: 25,
            early_stopping_patience: 3,
            eval_strategy: "epoch".into(),
            save_strategy: "epoch".into(),
            half_precision: true,
            per_device_batch: 2,
            per_device_eval_batch: 2,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            max_grad_norm: 0.5,
            warmup_ratio: 0.03,
            scheduler: "linear".into(),
            load_best_model_at_end: true,
            save_total_limit: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub learning_rate: f64,
    pub lora_rank: u32,
    pub gradient_accumulation: u32,
    pub lora_alpha: u32,
    #[serde(default)]
    pub fixed: FixedHyperparameters,
}

impl Default for ExperimentConfig {
    /// The first row of the default sweep.
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            lora_rank: 4,
            gradient_accumulation: 2,
            lora_alpha: 8,
            fixed: FixedHyperparameters::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        for (name, v) in [
            ("lora_rank", self.lora_rank),
            ("gradient_accumulation", self.gradient_accumulation),
            ("lora_alpha", self.lora_alpha),
        ] {
            if v == 0 {
                return Err(format!("{name} must be positive"));
            }
        }
        Ok(())
    }

    /// The configuration under the argument names the trainer consumes.
    pub fn training_args(&self) -> BTreeMap<&'static str, Value> {
        let f = &self.fixed;
        BTreeMap::from([
            ("lora_alpha", json!(self.lora_alpha)),
            ("lora_r", json!(self.lora_rank)),
            ("lora_dropout", json!(f.lora_dropout)),
            ("task_type", json!(f.task_type)),
            ("learning_rate", json!(self.learning_rate)),
            ("gradient_accumulation_steps", json!(self.gradient_accumulation)),
            ("weight_decay", json!(f.weight_decay)),
            ("label_smoothing_factor", json!(f.label_smoothing)),
            ("optim", json!(f.optim)),
            ("num_train_epochs", json!(f.max_epochs)),
            ("early_stopping_patience", json!(f.early_stopping_patience)),
            ("eval_strategy", json!(f.eval_strategy)),
            ("save_strategy", json!(f.save_strategy)),
            ("fp16", json!(f.half_precision)),
            ("per_device_train_batch_size", json!(f.per_device_batch)),
            ("per_device_eval_batch_size", json!(f.per_device_eval_batch)),
            ("adam_beta1", json!(f.adam_beta1)),
            ("adam_beta2", json!(f.adam_beta2)),
            ("max_grad_norm", json!(f.max_grad_norm)),
            ("warmup_ratio", json!(f.warmup_ratio)),
            ("lr_scheduler_type", json!(f.scheduler)),
            ("load_best_model_at_end", json!(f.load_best_model_at_end)),
            ("save_total_limit", json!(f.save_total_limit)),
        ])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TunedField {
    LearningRate,
    LoraRank,
    GradientAccumulation,
    LoraAlpha,
}

impl TunedField {
    pub fn as_str(self) -> &'static str {
        match self {
            TunedField::LearningRate => "learning_rate",
            TunedField::LoraRank => "lora_rank",
            TunedField::GradientAccumulation => "gradient_accumulation",
            TunedField::LoraAlpha => "lora_alpha",
        }
    }

    fn short(self) -> &'static str {
        match self {
            TunedField::LearningRate => "lr",
            TunedField::LoraRank => "rank",
            TunedField::GradientAccumulation => "ga",
            TunedField::LoraAlpha => "alpha",
        }
    }
}

impl fmt::Display for TunedField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One tuning stage: a field and its candidate values, in run order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "field", content = "values", rename_all = "snake_case")]
pub enum Stage {
    LearningRate(Vec<f64>),
    LoraRank(Vec<u32>),
    GradientAccumulation(Vec<u32>),
    LoraAlpha(Vec<u32>),
}

impl Stage {
    pub fn field(&self) -> TunedField {
        match self {
            Stage::LearningRate(_) => TunedField::LearningRate,
            Stage::LoraRank(_) => TunedField::LoraRank,
            Stage::GradientAccumulation(_) => TunedField::GradientAccumulation,
            Stage::LoraAlpha(_) => TunedField::LoraAlpha,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Stage::LearningRate(v) => v.len(),
            Stage::LoraRank(v) | Stage::GradientAccumulation(v) | Stage::LoraAlpha(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `base` with the tuned field set to candidate `i`.
    pub fn apply(&self, base: &ExperimentConfig, i: usize) -> ExperimentConfig {
        let mut c = base.clone();
        match self {
            Stage::LearningRate(v) => c.learning_rate = v[i],
            Stage::LoraRank(v) => c.lora_rank = v[i],
            Stage::GradientAccumulation(v) => c.gradient_accumulation = v[i],
            Stage::LoraAlpha(v) => c.lora_alpha = v[i],
        }
        c
    }

    /// Index of the candidate equal to `config`'s current value, if any.
    pub fn position_of(&self, config: &ExperimentConfig) -> Option<usize> {
        match self {
            Stage::LearningRate(v) => v.iter().position(|x| *x == config.learning_rate),
            Stage::LoraRank(v) => v.iter().position(|x| *x == config.lora_rank),
            Stage::GradientAccumulation(v) => v.iter().position(|x| *x == config.gradient_accumulation),
            Stage::LoraAlpha(v) => v.iter().position(|x| *x == config.lora_alpha),
        }
    }
}

/// Printable value of `field` in `config`, e.g. "1e-3" or "16".
pub fn field_value(field: TunedField, config: &ExperimentConfig) -> String {
    match field {
        TunedField::LearningRate => format!("{:e}", config.learning_rate),
        TunedField::LoraRank => config.lora_rank.to_string(),
        TunedField::GradientAccumulation => config.gradient_accumulation.to_string(),
        TunedField::LoraAlpha => config.lora_alpha.to_string(),
    }
}

pub(crate) fn field_slug(field: TunedField, config: &ExperimentConfig) -> String {
    format!("{}-{}", field.short(), field_value(field, config))
}
