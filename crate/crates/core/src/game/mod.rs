//! The membership-inference game: split the data, build a challenge of
//! members and non-members, train the target model, and train shadow models
//! with tracked per-sample inclusion.

mod inputs;
mod manifest;
mod shadow;

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{split_dataset, DataError, Dataset, SplitAssignment, SplitFractions};
use crate::nnet::{fit, predict_confidence, NnetError, TrainConfig, TrainedModel};
use crate::seed::{self, role};

pub use inputs::{collect_attack_inputs, read_attack_inputs, write_attack_inputs, AttackInputs, Role};
pub use manifest::{EnsembleManifest, ShadowEntry};
pub use shadow::{collect_confidences, train_shadow_ensemble, ConfidenceMatrix, ShadowConfig, ShadowEnsemble};

#[derive(Debug, Error)]
pub enum GameError {
    #[error("empty candidate set")]
    NoCandidates,
    #[error("membership probability {0} outside [0, 1]")]
    Probability(f64),
    #[error("population split has {available} samples, {needed} needed for non-members")]
    PopulationTooSmall { needed: usize, available: usize },
    #[error("need at least 2 shadow models, got {0}")]
    TooFewShadows(usize),
    #[error("inclusion rate {0} outside (0, 1)")]
    InclusionRate(f64),
    #[error("z fraction {0} outside [0, 1)")]
    ZFraction(f64),
    #[error("empty shadow pool")]
    EmptyPool,
    #[error("shadow {index}: {source}")]
    Shadow {
        index: usize,
        #[source]
        source: NnetError,
    },
    #[error(transparent)]
    Nnet(#[from] NnetError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("confidence table: {0}")]
    Table(String),
}

/// Candidate queries and their hidden membership bits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Challenge {
    pub candidates: Vec<String>,
    pub is_member: Vec<bool>,
    pub p_member: f64,
    pub seed: u64,
}

impl Challenge {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn members(&self) -> impl Iterator<Item = &str> {
        self.candidates.iter().zip(&self.is_member).filter(|(_, &m)| m).map(|(id, _)| id.as_str())
    }

    pub fn non_members(&self) -> impl Iterator<Item = &str> {
        self.candidates.iter().zip(&self.is_member).filter(|(_, &m)| !m).map(|(id, _)| id.as_str())
    }

    pub fn member_count(&self) -> usize {
        self.is_member.iter().filter(|&&m| m).count()
    }
}

/// Independent biased coin per candidate: member with probability `p_member`.
pub fn assign_membership(candidates: &[String], p_member: f64, seed_value: u64) -> Result<Challenge, GameError> {
    if candidates.is_empty() {
        return Err(GameError::NoCandidates);
    }
    if !(0.0..=1.0).contains(&p_member) {
        return Err(GameError::Probability(p_member));
    }
    let mut rng = seed::rng(seed_value);
    let is_member = candidates.iter().map(|_| rng.random::<f64>() < p_member).collect();
    Ok(Challenge {
        candidates: candidates.to_vec(),
        is_member,
        p_member,
        seed: seed_value,
    })
}

/// How the challenge draws its members and non-members.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MembershipMode {
    /// Every training sample is a member; non-members are added from the
    /// population so members make up `p_member` of the challenge.
    Ratio,
    /// One coin per training slot: heads keeps the training sample, tails
    /// substitutes the next population sample.
    Bernoulli,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameConfig {
    pub p_member: f64,
    pub fractions: SplitFractions,
    pub seed: u64,
    pub membership: MembershipMode,
    /// Train the target on samples disjoint from every candidate (negative control).
    pub null_target: bool,
}

impl Default for GameConfig {
    fn default() -> Self {
        Self {
            p_member: 0.67,
            fractions: SplitFractions::default(),
            seed: 0,
            membership: MembershipMode::Ratio,
            null_target: false,
        }
    }
}

/// Everything the adversary's oracle produced for one game.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetArtifacts {
    pub model: TrainedModel,
    pub train_config: TrainConfig,
    pub challenge: Challenge,
    /// `f(x)_y` of the target for each challenge candidate, in challenge order.
    pub confidences: Vec<f64>,
    pub split: SplitAssignment,
    /// Ids the target was actually trained on.
    pub target_training_ids: Vec<String>,
}

fn in_dataset_order(d: &Dataset, mut ids: Vec<String>) -> Vec<String> {
    ids.sort_by_key(|id| d.position(id).unwrap_or(usize::MAX));
    ids
}

/// Runs the game up to the point where the adversary is queried.
pub fn run_game(d: &Dataset, cfg: &TrainConfig, game: &GameConfig) -> Result<TargetArtifacts, GameError> {
    if !(0.0..=1.0).contains(&game.p_member) || game.p_member == 0.0 {
        return Err(GameError::Probability(game.p_member));
    }
    let split = split_dataset(d, game.fractions, seed::derive(game.seed, &[role::SPLIT]))?;
    let challenge_seed = seed::derive(game.seed, &[role::CHALLENGE]);
    let mut rng = seed::rng(challenge_seed);

    let mut member_pool = split.train_ids.clone();
    member_pool.shuffle(&mut rng);
    let target_training_ids = if game.null_target {
        let decoys = member_pool.split_off(member_pool.len() / 2);
        if member_pool.is_empty() || decoys.is_empty() {
            return Err(GameError::NoCandidates);
        }
        decoys
    } else {
        member_pool.clone()
    };
    let mut population = split.population_ids.clone();
    population.shuffle(&mut rng);

    let (members, non_members): (Vec<String>, Vec<String>) = match game.membership {
        MembershipMode::Ratio => {
            let n = member_pool.len() as f64;
            let needed = (n * (1.0 - game.p_member) / game.p_member).round() as usize;
            if needed > population.len() {
                return Err(GameError::PopulationTooSmall {
                    needed,
                    available: population.len(),
                });
            }
            (member_pool, population[..needed].to_vec())
        }
        MembershipMode::Bernoulli => {
            let coins = assign_membership(&member_pool, game.p_member, seed::derive(challenge_seed, &[1]))?;
            let mut members = Vec::new();
            let mut substitutes = population.iter();
            let mut non_members = Vec::new();
            for (id, heads) in coins.candidates.iter().zip(&coins.is_member) {
                if *heads {
                    members.push(id.clone());
                } else {
                    let sub = substitutes.next().ok_or(GameError::PopulationTooSmall {
                        needed: coins.len() - coins.member_count(),
                        available: population.len(),
                    })?;
                    non_members.push(sub.clone());
                }
            }
            (members, non_members)
        }
    };
    if members.is_empty() && non_members.is_empty() {
        return Err(GameError::NoCandidates);
    }

    let member_set: HashSet<&String> = members.iter().collect();
    let candidates = in_dataset_order(d, members.iter().chain(&non_members).cloned().collect());
    let is_member = candidates.iter().map(|id| member_set.contains(id)).collect();
    let challenge = Challenge {
        candidates,
        is_member,
        p_member: game.p_member,
        seed: challenge_seed,
    };

    let target_training_ids = in_dataset_order(d, target_training_ids);
    let train = d.select(&target_training_ids)?;
    let validation = d.select(&split.validation_ids)?;
    let model = fit(&train, &validation, cfg, None)?;
    let confidences = d
        .select(&challenge.candidates)?
        .iter()
        .map(|s| predict_confidence(&model, &s.features, s.label))
        .collect::<Result<Vec<_>, _>>()?;

    Ok(TargetArtifacts {
        model,
        train_config: cfg.clone(),
        challenge,
        confidences,
        split,
        target_training_ids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{synth_dataset, SynthSpec};

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn membership_extremes_and_errors() {
        assert!(assign_membership(&ids(50), 1.0, 3).unwrap().is_member.iter().all(|&m| m));
        assert!(assign_membership(&ids(50), 0.0, 3).unwrap().is_member.iter().all(|&m| !m));
        assert!(matches!(assign_membership(&[], 0.5, 0), Err(GameError::NoCandidates)));
        assert!(matches!(assign_membership(&ids(3), 1.5, 0), Err(GameError::Probability(_))));
        assert_eq!(assign_membership(&ids(99), 0.4, 8).unwrap(), assign_membership(&ids(99), 0.4, 8).unwrap());
    }

    #[test]
    fn membership_count_is_binomial() {
        // 10,000 draws at p = 2/3: sd = sqrt(n p (1-p)) ~= 47.1
        let c = assign_membership(&ids(10_000), 2.0 / 3.0, 12).unwrap();
        let members = c.member_count() as f64;
        let sd = (10_000.0f64 * (2.0 / 3.0) * (1.0 / 3.0)).sqrt();
        assert!((members - 6_666.67).abs() < 4.0 * sd, "{members}");
    }

    fn small_dataset() -> Dataset {
        synth_dataset(&SynthSpec {
            n: 300,
            dimension: 6,
            positive_fraction: 0.3,
            separation: 2.0,
            seed: 4,
        })
        .unwrap()
    }

    fn quick_config() -> TrainConfig {
        TrainConfig {
            hidden_dims: vec![16],
            max_epochs: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn challenge_is_consistent_with_training_split() {
        let d = small_dataset();
        for mode in [MembershipMode::Ratio, MembershipMode::Bernoulli] {
            let game = GameConfig {
                membership: mode,
                seed: 5,
                ..GameConfig::default()
            };
            let art = run_game(&d, &quick_config(), &game).unwrap();
            let train: HashSet<&String> = art.split.train_ids.iter().collect();
            let pop: HashSet<&String> = art.split.population_ids.iter().collect();
            let trained: HashSet<&String> = art.target_training_ids.iter().collect();
            for (id, &m) in art.challenge.candidates.iter().zip(&art.challenge.is_member) {
                assert_eq!(m, trained.contains(id));
                assert!(if m { train.contains(id) } else { pop.contains(id) });
            }
            let unique: HashSet<&String> = art.challenge.candidates.iter().collect();
            assert_eq!(unique.len(), art.challenge.len());
            assert_eq!(art.confidences.len(), art.challenge.len());
            assert!(art.confidences.iter().all(|&c| c > 0.0 && c < 1.0));
            if mode == MembershipMode::Ratio {
                let n = art.split.train_ids.len();
                assert_eq!(art.challenge.member_count(), n);
                let expected = (n as f64 * 0.33 / 0.67).round() as usize;
                assert_eq!(art.challenge.len() - n, expected);
            }
        }
    }

    #[test]
    fn null_target_trains_on_decoys() {
        let d = small_dataset();
        let game = GameConfig {
            null_target: true,
            seed: 2,
            ..GameConfig::default()
        };
        let art = run_game(&d, &quick_config(), &game).unwrap();
        let trained: HashSet<&String> = art.target_training_ids.iter().collect();
        assert!(art.challenge.candidates.iter().all(|id| !trained.contains(id)));
        assert!(art.challenge.member_count() > 0);
    }

    #[test]
    fn run_game_is_deterministic_and_checks_population() {
        let d = small_dataset();
        let game = GameConfig {
            seed: 9,
            ..GameConfig::default()
        };
        assert_eq!(run_game(&d, &quick_config(), &game).unwrap(), run_game(&d, &quick_config(), &game).unwrap());
        let starved = GameConfig {
            p_member: 0.2,
            ..game
        };
        assert!(matches!(
            run_game(&d, &quick_config(), &starved),
            Err(GameError::PopulationTooSmall { .. })
        ));
    }
}
