use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::stats::{hypergeom_expected, wilcoxon_signed_rank, Alternative, TestResult};

/// `|A ∩ B| / min(|A|, |B|)`; `None` when either set is empty.
pub fn overlap_fraction<S: AsRef<str>>(a: &[S], b: &[S]) -> Option<f64> {
    let sa: HashSet<&str> = a.iter().map(AsRef::as_ref).collect();
    let sb: HashSet<&str> = b.iter().map(AsRef::as_ref).collect();
    let small = sa.len().min(sb.len());
    if small == 0 {
        return None;
    }
    Some(sa.intersection(&sb).count() as f64 / small as f64)
}

/// Two identified sets from one repetition and the member count they were drawn from.
#[derive(Clone, Debug, PartialEq)]
pub struct OverlapRepetition {
    pub a: Vec<String>,
    pub b: Vec<String>,
    pub population: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapSummary {
    /// Per repetition; `None` where a set was empty.
    pub observed: Vec<Option<f64>>,
    pub expected: Vec<Option<f64>>,
    pub observed_mean: f64,
    pub expected_mean: f64,
    pub valid: usize,
    pub test: TestResult,
}

/// Observed overlap against the chance level `E|A ∩ B| / min` with
/// `E|A ∩ B| = |A| |B| / N`, compared by a one-sided signed-rank test.
pub fn overlap_analysis(reps: &[OverlapRepetition]) -> Result<OverlapSummary, EvalError> {
    let mut observed = Vec::with_capacity(reps.len());
    let mut expected = Vec::with_capacity(reps.len());
    let mut diffs = Vec::new();
    for r in reps {
        let obs = overlap_fraction(&r.a, &r.b);
        let exp = match obs {
            Some(_) => {
                let (na, nb) = (r.a.len() as u64, r.b.len() as u64);
                Some(hypergeom_expected(r.population as u64, na.max(nb), na.min(nb))? / na.min(nb) as f64)
            }
            None => None,
        };
        if let (Some(o), Some(e)) = (obs, exp) {
            diffs.push((o, e));
        }
        observed.push(obs);
        expected.push(exp);
    }
    if diffs.is_empty() {
        return Err(EvalError::NoValidRepetitions);
    }
    let skipped = reps.len() - diffs.len();
    if skipped > 0 {
        log::info!("overlap: {skipped} repetitions with an empty identified set excluded");
    }
    let d: Vec<f64> = diffs.iter().map(|(o, e)| o - e).collect();
    let n = diffs.len() as f64;
    Ok(OverlapSummary {
        observed_mean: diffs.iter().map(|p| p.0).sum::<f64>() / n,
        expected_mean: diffs.iter().map(|p| p.1).sum::<f64>() / n,
        valid: diffs.len(),
        test: wilcoxon_signed_rank(&d, 0.0, Alternative::Greater)?,
        observed,
        expected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn fraction_examples() {
        assert_eq!(overlap_fraction(&["a", "b"], &["a", "b"]), Some(1.0));
        assert_eq!(overlap_fraction(&["a"], &["b", "c"]), Some(0.0));
        assert_eq!(overlap_fraction(&["a", "b"], &["b", "c", "d"]), Some(0.5));
        assert_eq!(overlap_fraction::<&str>(&[], &["b"]), None);
    }

    #[test]
    fn identical_sets_are_significant() {
        let rep = OverlapRepetition {
            a: ids(&["a", "b", "c"]),
            b: ids(&["a", "b", "c"]),
            population: 50,
        };
        let s = overlap_analysis(&vec![rep.clone(); 5]).unwrap();
        assert_eq!(s.observed_mean, 1.0);
        assert!((s.expected_mean - 3.0 / 50.0).abs() < 1e-12);
        assert!((s.test.p_value - 1.0 / 32.0).abs() < 1e-12);
        let one = overlap_analysis(&[rep]).unwrap();
        assert_eq!(one.test.p_value, 0.5);
    }

    #[test]
    fn empty_sets_are_excluded() {
        let reps = [
            OverlapRepetition {
                a: vec![],
                b: ids(&["a"]),
                population: 10,
            },
            OverlapRepetition {
                a: ids(&["a", "b"]),
                b: ids(&["b", "c", "d"]),
                population: 10,
            },
        ];
        let s = overlap_analysis(&reps).unwrap();
        assert_eq!(s.valid, 1);
        assert_eq!(s.observed, vec![None, Some(0.5)]);
        assert_eq!(s.expected[1], Some(0.3));
        assert!(matches!(overlap_analysis(&reps[..1]), Err(EvalError::NoValidRepetitions)));
    }
}
