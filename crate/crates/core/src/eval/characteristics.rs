use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::data::Dataset;
use crate::stats::{mann_whitney_u, Alternative, TestResult};

/// Identified members of one repetition alongside all members of its challenge.
#[derive(Clone, Debug, PartialEq)]
pub struct IdentifiedRepetition {
    pub identified: Vec<String>,
    pub members: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelCharacteristics {
    /// Positive fraction among identified members, per usable repetition.
    pub identified_positive: Vec<f64>,
    /// Positive fraction among members that were not identified.
    pub other_positive: Vec<f64>,
    pub mean_identified_positive: f64,
    pub mean_other_positive: f64,
    pub dataset_positive: f64,
    pub minority_label: u8,
    pub mean_identified_minority: f64,
    pub dataset_minority: f64,
    /// Repetitions whose identified minority share exceeds the dataset's.
    pub enriched_repetitions: usize,
    /// Identified sets carry more of the minority class than the rest of the members.
    pub minority_enriched: bool,
    pub skipped: usize,
    pub test: TestResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetadataCharacteristics {
    pub key: String,
    pub identified_values: usize,
    pub other_values: usize,
    pub identified_median: f64,
    pub other_median: f64,
    pub test: TestResult,
}

fn partition(rep: &IdentifiedRepetition) -> (Vec<&str>, Vec<&str>) {
    let ident: HashSet<&str> = rep.identified.iter().map(String::as_str).collect();
    rep.members.iter().map(String::as_str).partition(|id| ident.contains(id))
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub(crate) fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Per repetition positive fraction of identified versus non-identified
/// members, compared across repetitions by a two-sided Mann-Whitney test.
/// Repetitions where either group is empty are skipped.
pub fn label_characteristics(d: &Dataset, reps: &[IdentifiedRepetition]) -> Result<LabelCharacteristics, EvalError> {
    let positive_share = |ids: &[&str]| -> Result<f64, EvalError> {
        let mut pos = 0usize;
        for id in ids {
            let s = d.get(id).ok_or_else(|| EvalError::UnknownId(id.to_string()))?;
            pos += s.label as usize;
        }
        Ok(pos as f64 / ids.len() as f64)
    };
    let (mut ident, mut other) = (Vec::new(), Vec::new());
    for rep in reps {
        let (a, b) = partition(rep);
        if a.is_empty() || b.is_empty() {
            continue;
        }
        ident.push(positive_share(&a)?);
        other.push(positive_share(&b)?);
    }
    if ident.is_empty() {
        return Err(EvalError::NoValidRepetitions);
    }
    let skipped = reps.len() - ident.len();
    if skipped > 0 {
        log::info!("label analysis: {skipped} repetitions without identified members excluded");
    }
    let [neg, pos] = d.class_counts();
    let dataset_positive = pos as f64 / (neg + pos) as f64;
    let minority_label = d.minority_label();
    let to_minority = |p: f64| if minority_label == 1 { p } else { 1.0 - p };
    let dataset_minority = to_minority(dataset_positive);
    let (mi, mo) = (mean(&ident), mean(&other));
    Ok(LabelCharacteristics {
        test: mann_whitney_u(&ident, &other, Alternative::TwoSided)?,
        mean_identified_positive: mi,
        mean_other_positive: mo,
        dataset_positive,
        minority_label,
        mean_identified_minority: to_minority(mi),
        dataset_minority,
        enriched_repetitions: ident.iter().filter(|&&p| to_minority(p) > dataset_minority).count(),
        minority_enriched: to_minority(mi) > to_minority(mo),
        skipped,
        identified_positive: ident,
        other_positive: other,
    })
}

/// Scalar metadata of identified versus non-identified members, pooled over
/// repetitions, compared by a two-sided Mann-Whitney test.
pub fn metadata_characteristics(d: &Dataset, reps: &[IdentifiedRepetition], key: &str) -> Result<MetadataCharacteristics, EvalError> {
    if !d.metadata_keys().contains(key) {
        return Err(EvalError::MissingKey(key.to_string()));
    }
    let value = |id: &str| -> Result<f64, EvalError> {
        let s = d.get(id).ok_or_else(|| EvalError::UnknownId(id.to_string()))?;
        s.metadata.get(key).copied().ok_or_else(|| EvalError::MissingKey(key.to_string()))
    };
    let (mut ident, mut other) = (Vec::new(), Vec::new());
    for rep in reps {
        let (a, b) = partition(rep);
        for id in a {
            ident.push(value(id)?);
        }
        for id in b {
            other.push(value(id)?);
        }
    }
    if ident.is_empty() || other.is_empty() {
        return Err(EvalError::NoValidRepetitions);
    }
    Ok(MetadataCharacteristics {
        key: key.to_string(),
        identified_values: ident.len(),
        other_values: other.len(),
        identified_median: median(&ident),
        other_median: median(&other),
        test: mann_whitney_u(&ident, &other, Alternative::TwoSided)?,
    })
}
