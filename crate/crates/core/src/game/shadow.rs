use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Challenge, GameError};
use crate::data::{Dataset, SampleRecord};
use crate::nnet::{fit, predict_confidence, TrainConfig, TrainedModel};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShadowConfig {
    pub count: usize,
    pub inclusion_rate: f64,
    pub epochs: usize,
    /// Share of the shadow pool reserved as RMIA reference points.
    pub z_fraction: f64,
    pub z_cap: usize,
}

impl Default for ShadowConfig {
    fn default() -> Self {
        Self {
            count: 10,
            inclusion_rate: 0.5,
            epochs: 15,
            z_fraction: 0.25,
            z_cap: 10_000,
        }
    }
}

impl ShadowConfig {
    pub fn validate(&self) -> Result<(), GameError> {
        if self.count < 2 {
            return Err(GameError::TooFewShadows(self.count));
        }
        if !(self.inclusion_rate > 0.0 && self.inclusion_rate < 1.0) {
            return Err(GameError::InclusionRate(self.inclusion_rate));
        }
        if !(0.0..1.0).contains(&self.z_fraction) {
            return Err(GameError::ZFraction(self.z_fraction));
        }
        Ok(())
    }
}

/// Trained shadow models and the bookkeeping needed to audit them.
#[derive(Clone, Debug, PartialEq)]
pub struct ShadowEnsemble {
    pub models: Vec<TrainedModel>,
    /// Per-shadow seeds, `seed::derive(ensemble_seed, &[i])`.
    pub seeds: Vec<u64>,
    /// Shadow-pool ids in the order inclusion coins are flipped.
    pub pool: Vec<String>,
    /// Training ids of each shadow, in pool order.
    pub training_sets: Vec<Vec<String>>,
    /// Reference points excluded from every shadow.
    pub z_ids: Vec<String>,
    pub epochs: usize,
    pub inclusion_rate: f64,
    pub seed: u64,
    /// Candidates without at least one in-shadow and one out-shadow.
    pub unbalanced_candidates: Vec<String>,
}

impl ShadowEnsemble {
    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    /// Inclusion flags of `id` across shadows.
    pub fn inclusion(&self, id: &str) -> Vec<bool> {
        self.training_sets.iter().map(|set| set.iter().any(|x| x == id)).collect()
    }
}

/// Replays the inclusion coins of one shadow over the pool.
pub(crate) fn shadow_training_set(pool: &[String], shadow_seed: u64, inclusion_rate: f64) -> Vec<String> {
    let mut rng = seed::rng(seed::derive(shadow_seed, &[0xC014]));
    pool.iter().filter(|_| rng.random::<f64>() < inclusion_rate).cloned().collect()
}

/// Trains `cfg.count` shadow models.
///
/// The pool is `population_ids` plus the challenge's member candidates. A
/// uniformly chosen reference set Z of `z_fraction * |pool|` ids is taken
/// from population samples that are not challenge candidates (capped by
/// availability and `z_cap`) and excluded from all shadows. Every other pool
/// sample enters each shadow independently with probability
/// `inclusion_rate`. Shadows reuse `train_cfg` but run exactly `cfg.epochs`
/// epochs with a per-shadow derived seed, so the result does not depend on
/// how many threads train them.
pub fn train_shadow_ensemble(
    d: &Dataset,
    population_ids: &[String],
    challenge: &Challenge,
    validation_ids: &[String],
    cfg: &ShadowConfig,
    train_cfg: &TrainConfig,
    seed_value: u64,
) -> Result<ShadowEnsemble, GameError> {
    cfg.validate()?;
    if population_ids.is_empty() {
        return Err(GameError::EmptyPool);
    }
    let candidates: HashSet<&str> = challenge.candidates.iter().map(String::as_str).collect();
    let mut pool_all: Vec<String> = population_ids.to_vec();
    let pop_set: HashSet<&str> = population_ids.iter().map(String::as_str).collect();
    pool_all.extend(challenge.members().filter(|id| !pop_set.contains(id)).map(str::to_string));

    let mut z_eligible: Vec<String> = population_ids.iter().filter(|id| !candidates.contains(id.as_str())).cloned().collect();
    z_eligible.shuffle(&mut seed::rng(seed::derive(seed_value, &[0x2222])));
    let wanted = (cfg.z_fraction * pool_all.len() as f64).round() as usize;
    let z_len = wanted.min(z_eligible.len()).min(cfg.z_cap);
    if z_len < wanted {
        log::warn!("reference set truncated to {z_len} of {wanted} requested samples");
    }
    let mut z_ids = z_eligible[..z_len].to_vec();
    let z_set: HashSet<&str> = z_ids.iter().map(String::as_str).collect();
    let mut pool: Vec<String> = pool_all.iter().filter(|id| !z_set.contains(id.as_str())).cloned().collect();
    pool.sort_by_key(|id| d.position(id).unwrap_or(usize::MAX));
    z_ids.sort_by_key(|id| d.position(id).unwrap_or(usize::MAX));
    if pool.is_empty() {
        return Err(GameError::EmptyPool);
    }

    let seeds: Vec<u64> = (0..cfg.count as u64).map(|i| seed::derive(seed_value, &[i])).collect();
    let training_sets: Vec<Vec<String>> = seeds.iter().map(|&s| shadow_training_set(&pool, s, cfg.inclusion_rate)).collect();
    let validation = d.select(validation_ids)?;
    let models = training_sets
        .par_iter()
        .zip(seeds.par_iter())
        .enumerate()
        .map(|(index, (ids, &s))| {
            let train = d.select(ids)?;
            let shadow_cfg = TrainConfig {
                seed: seed::derive(s, &[0x7A12]),
                ..train_cfg.clone()
            };
            fit(&train, &validation, &shadow_cfg, Some(cfg.epochs)).map_err(|source| GameError::Shadow { index, source })
        })
        .collect::<Result<Vec<_>, GameError>>()?;

    let sets: Vec<HashSet<&str>> = training_sets.iter().map(|s| s.iter().map(String::as_str).collect()).collect();
    let unbalanced_candidates: Vec<String> = challenge
        .candidates
        .iter()
        .filter(|id| {
            let ins = sets.iter().filter(|s| s.contains(id.as_str())).count();
            ins == 0 || ins == sets.len()
        })
        .cloned()
        .collect();
    if !unbalanced_candidates.is_empty() {
        log::warn!(
            "{} candidates lack an in-shadow or an out-shadow",
            unbalanced_candidates.len()
        );
    }

    Ok(ShadowEnsemble {
        models,
        seeds,
        pool,
        training_sets,
        z_ids,
        epochs: cfg.epochs,
        inclusion_rate: cfg.inclusion_rate,
        seed: seed_value,
        unbalanced_candidates,
    })
}

/// `(sample x shadow)` true-label confidences with the parallel inclusion mask.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfidenceMatrix {
    pub ids: Vec<String>,
    pub shadows: usize,
    /// Row-major `ids.len() x shadows`.
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
}

impl ConfidenceMatrix {
    pub fn rows(&self) -> usize {
        self.ids.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.shadows..(i + 1) * self.shadows]
    }

    pub fn mask_row(&self, i: usize) -> &[bool] {
        &self.mask[i * self.shadows..(i + 1) * self.shadows]
    }
}

pub fn collect_confidences(ensemble: &ShadowEnsemble, samples: &[&SampleRecord]) -> Result<ConfidenceMatrix, GameError> {
    let sets: Vec<HashSet<&str>> = ensemble.training_sets.iter().map(|s| s.iter().map(String::as_str).collect()).collect();
    let k = ensemble.len();
    let rows = samples
        .par_iter()
        .map(|s| {
            let mut values = Vec::with_capacity(k);
            for model in &ensemble.models {
                values.push(predict_confidence(model, &s.features, s.label)?);
            }
            let mask: Vec<bool> = sets.iter().map(|set| set.contains(s.id.as_str())).collect();
            Ok((values, mask))
        })
        .collect::<Result<Vec<_>, GameError>>()?;
    let mut out = ConfidenceMatrix {
        ids: samples.iter().map(|s| s.id.clone()).collect(),
        shadows: k,
        values: Vec::with_capacity(samples.len() * k),
        mask: Vec::with_capacity(samples.len() * k),
    };
    for (v, m) in rows {
        out.values.extend(v);
        out.mask.extend(m);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{run_game, GameConfig};
    use crate::synth::{synth_dataset, SynthSpec};

    fn fixture(count: usize) -> (Dataset, crate::game::TargetArtifacts, ShadowEnsemble) {
        let d = synth_dataset(&SynthSpec {
            n: 240,
            dimension: 5,
            positive_fraction: 0.4,
            separation: 1.5,
            seed: 8,
        })
        .unwrap();
        let cfg = TrainConfig {
            hidden_dims: vec![8],
            max_epochs: 3,
            ..TrainConfig::default()
        };
        let art = run_game(&d, &cfg, &GameConfig::default()).unwrap();
        let sc = ShadowConfig {
            count,
            epochs: 2,
            ..ShadowConfig::default()
        };
        let ens = train_shadow_ensemble(&d, &art.split.population_ids, &art.challenge, &art.split.validation_ids, &sc, &cfg, 77).unwrap();
        (d, art, ens)
    }

    #[test]
    fn mask_matches_training_sets_and_z_is_excluded() {
        let (d, art, ens) = fixture(4);
        assert_eq!(ens.len(), 4);
        let tracked: Vec<&SampleRecord> = d.select(art.challenge.candidates.iter().chain(&ens.z_ids)).unwrap();
        let m = collect_confidences(&ens, &tracked).unwrap();
        assert_eq!((m.rows(), m.shadows), (tracked.len(), 4));
        for (i, s) in tracked.iter().enumerate() {
            let expected: Vec<bool> = ens.training_sets.iter().map(|set| set.contains(&s.id)).collect();
            assert_eq!(m.mask_row(i), expected.as_slice());
            assert_eq!(ens.inclusion(&s.id), expected);
        }
        for z in &ens.z_ids {
            assert!(ens.training_sets.iter().all(|set| !set.contains(z)));
            assert!(!art.challenge.candidates.contains(z));
        }
        assert!(!ens.z_ids.is_empty());
        assert!(m.values.iter().all(|&v| v > 0.0 && v < 1.0));
        assert_eq!(m, collect_confidences(&ens, &tracked).unwrap());
        for (i, &s) in ens.seeds.iter().enumerate() {
            assert_eq!(shadow_training_set(&ens.pool, s, ens.inclusion_rate), ens.training_sets[i]);
        }
    }

    #[test]
    fn two_shadows_suffice_and_ensembles_replay() {
        let (_, _, a) = fixture(2);
        let (_, _, b) = fixture(2);
        assert_eq!(a, b);
    }

    #[test]
    fn parameter_errors() {
        let bad = ShadowConfig {
            count: 1,
            ..ShadowConfig::default()
        };
        assert!(matches!(bad.validate(), Err(GameError::TooFewShadows(1))));
        let bad = ShadowConfig {
            inclusion_rate: 1.0,
            ..ShadowConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = ShadowConfig {
            z_fraction: 1.0,
            ..ShadowConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
