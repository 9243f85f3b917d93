//! Uniform random search over the tuned hyperparameters.
//!
//! Bounds (chosen for tabular fingerprint-sized inputs):
//! * hidden layers: 1 to 3, each width drawn from {32, 64, 128, 256, 512}
//! * dropout: uniform in [0, 0.5)
//! * learning rate: log-uniform in [1e-4, 1e-2)
//! * weight decay: log-uniform in [1e-6, 1e-2)

use rand::Rng as _;

use super::{fit, NnetError, TrainConfig};
use crate::data::SampleRecord;
use crate::seed;

#[derive(Clone, Debug, PartialEq)]
pub struct SearchSpace {
    pub layer_counts: (usize, usize),
    pub widths: Vec<usize>,
    pub dropout: (f64, f64),
    pub learning_rate: (f64, f64),
    pub weight_decay: (f64, f64),
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            layer_counts: (1, 3),
            widths: vec![32, 64, 128, 256, 512],
            dropout: (0.0, 0.5),
            learning_rate: (1e-4, 1e-2),
            weight_decay: (1e-6, 1e-2),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchTrial {
    pub config: TrainConfig,
    pub best_validation_loss: f64,
}

fn log_uniform(rng: &mut seed::Rng, (lo, hi): (f64, f64)) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

impl SearchSpace {
    fn sample(&self, base: &TrainConfig, rng: &mut seed::Rng) -> TrainConfig {
        let layers = rng.random_range(self.layer_counts.0..=self.layer_counts.1);
        TrainConfig {
            hidden_dims: (0..layers).map(|_| self.widths[rng.random_range(0..self.widths.len())]).collect(),
            dropout_rate: rng.random_range(self.dropout.0..self.dropout.1),
            learning_rate: log_uniform(rng, self.learning_rate),
            weight_decay: log_uniform(rng, self.weight_decay),
            ..base.clone()
        }
    }
}

/// Tries `trials` sampled configs and returns the one with the lowest best
/// validation loss, plus every trial. Ties keep the earlier trial.
pub fn random_search(
    train: &[&SampleRecord],
    validation: &[&SampleRecord],
    base: &TrainConfig,
    space: &SearchSpace,
    trials: usize,
    seed_value: u64,
) -> Result<(TrainConfig, Vec<SearchTrial>), NnetError> {
    if trials == 0 {
        return Ok((base.clone(), Vec::new()));
    }
    let mut rng = seed::rng(seed_value);
    let mut results = Vec::with_capacity(trials);
    for _ in 0..trials {
        let config = space.sample(base, &mut rng);
        let trained = fit(train, validation, &config, None)?;
        let best_validation_loss = trained.log[trained.best_epoch - 1].validation_loss;
        results.push(SearchTrial {
            config,
            best_validation_loss,
        });
    }
    let best = results
        .iter()
        .min_by(|a, b| a.best_validation_loss.total_cmp(&b.best_validation_loss))
        .map(|t| t.config.clone())
        .expect("at least one trial");
    Ok((best, results))
}
