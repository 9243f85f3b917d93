//! Ensemble manifest (`manifest.json`): per-shadow seeds, training sets and
//! checkpoint paths, the reference set Z, and the inclusion mask over the
//! tracked ids (candidates followed by Z). Rows of `mask` are strings of
//! `0`/`1`, one character per shadow.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::shadow::shadow_training_set;
use super::{GameError, ShadowEnsemble};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShadowEntry {
    pub index: usize,
    pub seed: u64,
    pub training_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleManifest {
    pub seed: u64,
    pub epochs: usize,
    pub inclusion_rate: f64,
    pub pool: Vec<String>,
    pub z_ids: Vec<String>,
    pub shadows: Vec<ShadowEntry>,
    pub tracked_ids: Vec<String>,
    pub mask: Vec<String>,
}

impl EnsembleManifest {
    pub fn new(ensemble: &ShadowEnsemble, candidates: &[String], checkpoints: Option<&[String]>) -> Self {
        let tracked_ids: Vec<String> = candidates.iter().chain(&ensemble.z_ids).cloned().collect();
        let sets: Vec<HashSet<&str>> = ensemble.training_sets.iter().map(|s| s.iter().map(String::as_str).collect()).collect();
        let mask = tracked_ids
            .iter()
            .map(|id| sets.iter().map(|s| if s.contains(id.as_str()) { '1' } else { '0' }).collect())
            .collect();
        Self {
            seed: ensemble.seed,
            epochs: ensemble.epochs,
            inclusion_rate: ensemble.inclusion_rate,
            pool: ensemble.pool.clone(),
            z_ids: ensemble.z_ids.clone(),
            shadows: ensemble
                .seeds
                .iter()
                .zip(&ensemble.training_sets)
                .enumerate()
                .map(|(index, (&seed, ids))| ShadowEntry {
                    index,
                    seed,
                    training_ids: ids.clone(),
                    checkpoint: checkpoints.and_then(|c| c.get(index).cloned()),
                })
                .collect(),
            tracked_ids,
            mask,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, GameError> {
        let manifest: Self = serde_json::from_str(text).map_err(|e| GameError::Manifest(e.to_string()))?;
        manifest.verify()?;
        Ok(manifest)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    /// Re-checks the mask against the training sets, that Z stays out of
    /// every shadow, and that each training set is the replay of its seed.
    pub fn verify(&self) -> Result<(), GameError> {
        let fail = |m: String| Err(GameError::Manifest(m));
        if self.shadows.len() < 2 {
            return fail(format!("{} shadows, need at least 2", self.shadows.len()));
        }
        if !(self.inclusion_rate > 0.0 && self.inclusion_rate < 1.0) {
            return fail(format!("inclusion rate {}", self.inclusion_rate));
        }
        if self.mask.len() != self.tracked_ids.len() {
            return fail("mask and tracked ids differ in length".into());
        }
        let sets: Vec<HashSet<&str>> = self.shadows.iter().map(|s| s.training_ids.iter().map(String::as_str).collect()).collect();
        for (i, entry) in self.shadows.iter().enumerate() {
            if entry.index != i {
                return fail(format!("shadow {i} has index {}", entry.index));
            }
            if shadow_training_set(&self.pool, entry.seed, self.inclusion_rate) != entry.training_ids {
                return fail(format!("shadow {i} training set does not replay from its seed"));
            }
        }
        for (id, row) in self.tracked_ids.iter().zip(&self.mask) {
            if row.chars().count() != sets.len() {
                return fail(format!("mask row for {id:?} has wrong width"));
            }
            for (bit, set) in row.chars().zip(&sets) {
                let expected = if set.contains(id.as_str()) { '1' } else { '0' };
                if bit != expected {
                    return fail(format!("mask bit for {id:?} disagrees with training set"));
                }
            }
        }
        let pool: HashSet<&str> = self.pool.iter().map(String::as_str).collect();
        if let Some(z) = self.z_ids.iter().find(|z| pool.contains(z.as_str())) {
            return fail(format!("reference point {z:?} is in the shadow pool"));
        }
        Ok(())
    }
}
