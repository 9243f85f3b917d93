//! Synthetic two-cluster datasets for desk-scale experiments.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{DataError, Dataset, SampleRecord};
use crate::seed::{self, role};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    pub dimension: usize,
    pub positive_fraction: f64,
    /// Euclidean distance between the two class means; features have unit variance.
    pub separation: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n: 1000,
            dimension: 16,
            positive_fraction: 0.5,
            separation: 1.0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn positives(&self) -> usize {
        (self.n as f64 * self.positive_fraction).round() as usize
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::Invalid(m));
        if self.dimension == 0 {
            return bad("synthetic dimension must be positive".into());
        }
        if !(self.positive_fraction > 0.0 && self.positive_fraction < 1.0) {
            return bad(format!("positive fraction {} outside (0, 1)", self.positive_fraction));
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return bad(format!("separation {} must be finite and non-negative", self.separation));
        }
        let p = self.positives();
        if p == 0 || p == self.n {
            return bad(format!("{} samples at fraction {} leave one class empty", self.n, self.positive_fraction));
        }
        Ok(())
    }
}

/// Exactly `round(n * positive_fraction)` positives. Class means sit at
/// `±separation / 2` along the diagonal direction; each sample also carries
/// a `size` metadata value independent of its label.
pub fn synth_dataset(spec: &SynthSpec) -> Result<Dataset, DataError> {
    spec.validate()?;
    let mut rng = seed::rng(seed::derive(spec.seed, &[role::SYNTH]));
    let positives = spec.positives();
    let mut labels: Vec<u8> = (0..spec.n).map(|i| u8::from(i < positives)).collect();
    labels.shuffle(&mut rng);
    let offset = spec.separation / 2.0 / (spec.dimension as f64).sqrt();
    let samples = labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let shift = if label == 1 { offset } else { -offset };
            let features = (0..spec.dimension)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z + shift
                })
                .collect();
            let g: f64 = StandardNormal.sample(&mut rng);
            let size = (20.0 + 5.0 * g).round().max(1.0);
            SampleRecord {
                id: format!("s{i:06}"),
                label,
                features,
                metadata: BTreeMap::from([("size".to_string(), size)]),
            }
        })
        .collect();
    Dataset::new(samples)
}
