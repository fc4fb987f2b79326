use std::collections::BTreeMap;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetError, Split};
use crate::util::sha256_hex;

/// Smallest stratum that can give validation and test one pair each while
/// keeping one for training.
const MIN_STRATUM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self { train: 0.8, validation: 0.1, test: 0.1 }
    }
}

impl SplitRatios {
    pub fn new(train: f64, validation: f64, test: f64) -> Result<Self, DatasetError> {
        let r = Self { train, validation, test };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let all = [self.train, self.validation, self.test];
        if all.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(DatasetError::InvalidRatios(format!("ratios must be positive, got {all:?}")));
        }
        let sum: f64 = all.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(DatasetError::InvalidRatios(format!("ratios sum to {sum}, not 1")));
        }
        Ok(())
    }
}

impl FromStr for SplitRatios {
    type Err = DatasetError;

    /// Parses "train,validation,test", e.g. "0.8,0.1,0.1".
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| DatasetError::InvalidRatios(format!("{s:?}: {e}")))?;
        match parts[..] {
            [train, validation, test] => Self::new(train, validation, test),
            _ => Err(DatasetError::InvalidRatios(format!("{s:?}: expected three comma-separated ratios"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitOutcome {
    pub dataset: Dataset,
    /// Experts with too few pairs to stratify; all their pairs went to train.
    pub warnings: Vec<String>,
}

/// Assigns split tags by a seeded shuffle within each expert's pairs.
///
/// Validation and test each take `floor(n * ratio)` of a stratum, raised to
/// one so every expert is tested; the remainder trains. Strata smaller than
/// three pairs go entirely to train with a warning. Pair order is unchanged.
pub fn split_dataset(ds: &Dataset, ratios: SplitRatios, seed: u64) -> Result<SplitOutcome, DatasetError> {
    ratios.validate()?;
    let mut strata: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, p) in ds.pairs.iter().enumerate() {
        strata.entry(p.expert_name.as_str()).or_default().push(i);
    }

    let mut tags = vec![Split::Train; ds.pairs.len()];
    let mut warnings = Vec::new();
    for (expert, mut idx) in strata {
        let n = idx.len();
        if n < MIN_STRATUM {
            let msg = format!("expert {expert:?} has {n} pair(s); all assigned to train");
            tracing::warn!("{msg}");
            warnings.push(msg);
            continue;
        }
        idx.sort_by(|&a, &b| ds.pairs[a].pair_id.cmp(&ds.pairs[b].pair_id));
        let stratum_seed = seed ^ u64::from_str_radix(&sha256_hex(expert.as_bytes())[..16], 16).expect("hex digest");
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(stratum_seed));

        let take = |r: f64| (((n as f64) * r + 1e-9).floor() as usize).max(1);
        let n_test = take(ratios.test);
        let n_val = take(ratios.validation).min(n - n_test - 1);
        for (k, &i) in idx.iter().enumerate() {
            tags[i] = if k < n_test {
                Split::Test
            } else if k < n_test + n_val {
                Split::Validation
            } else {
                Split::Train
            };
        }
    }

    let mut dataset = ds.clone();
    for (p, tag) in dataset.pairs.iter_mut().zip(tags) {
        p.split = tag;
    }
    Ok(SplitOutcome { dataset, warnings })
}
