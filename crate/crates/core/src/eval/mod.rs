//! Evaluation of attack scores: exact ROC sweeps, TPR at fixed FPR, the
//! random-guessing baseline, identified sets and their overlap, class and
//! metadata characteristics, and aggregation over repetitions.

mod characteristics;
mod overlap;
mod roc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::{wilcoxon_signed_rank, Alternative, StatsError, TestResult};

pub use characteristics::{label_characteristics, metadata_characteristics, IdentifiedRepetition, LabelCharacteristics, MetadataCharacteristics};
pub(crate) use characteristics::median;
pub use overlap::{overlap_analysis, overlap_fraction, OverlapRepetition, OverlapSummary};
pub use roc::{baseline_tpr, identified_members, minority_tpr, roc_curve, tpr_at_fpr, IdentifiedSet, RocCurve, RocPoint};
pub(crate) use roc::identified_with;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("challenge needs at least one member and one non-member")]
    SingleClass,
    #[error("score and membership columns differ in length")]
    Shape,
    #[error("non-finite score")]
    NonFinite,
    #[error("FPR target {0} outside [0, 1]")]
    FprTarget(f64),
    #[error("no members")]
    NoMembers,
    #[error("no minority-class members")]
    NoMinority,
    #[error("no repetition with usable sets")]
    NoValidRepetitions,
    #[error("metadata key {0:?} not present")]
    MissingKey(String),
    #[error("unknown sample id {0:?}")]
    UnknownId(String),
    #[error("empty input")]
    Empty,
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// `***` below 0.001, `**` below 0.01, `*` below 0.05.
pub fn stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub values: Vec<f64>,
    pub median: f64,
    pub mean: f64,
    pub baseline: f64,
    pub test: TestResult,
    pub stars: String,
}

/// Median and one-sided signed-rank test of per-repetition TPRs against a
/// common baseline.
pub fn aggregate_repetitions(tprs: &[f64], baseline: f64) -> Result<Aggregate, EvalError> {
    aggregate_against(tprs, &vec![baseline; tprs.len()])
}

/// As [`aggregate_repetitions`] with one baseline per repetition; the test
/// runs on the differences. `baseline` in the result is their median.
pub fn aggregate_against(tprs: &[f64], baselines: &[f64]) -> Result<Aggregate, EvalError> {
    if tprs.is_empty() {
        return Err(EvalError::Empty);
    }
    if tprs.len() != baselines.len() {
        return Err(EvalError::Shape);
    }
    let diffs: Vec<f64> = tprs.iter().zip(baselines).map(|(t, b)| t - b).collect();
    let test = wilcoxon_signed_rank(&diffs, 0.0, Alternative::Greater)?;
    Ok(Aggregate {
        values: tprs.to_vec(),
        median: median(tprs),
        mean: tprs.iter().sum::<f64>() / tprs.len() as f64,
        baseline: median(baselines),
        stars: stars(test.p_value).to_string(),
        test,
    })
}
