use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{init_model, weighted_bce_loss, AdamW, Gradients, MlpModel, Mode, NnetError};
use crate::data::{class_weights, SampleRecord};
use crate::seed;

/// Confidences handed to attacks are clipped to `[CONFIDENCE_CLIP, 1 - CONFIDENCE_CLIP]`.
pub const CONFIDENCE_CLIP: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden_dims: Vec<usize>,
    pub dropout_rate: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// When false, all `max_epochs` run and the final weights are kept.
    pub early_stopping: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_dims: vec![256, 128],
            dropout_rate: 0.2,
            learning_rate: 1e-3,
            weight_decay: 1e-4,
            batch_size: 64,
            max_epochs: 100,
            patience: 10,
            early_stopping: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnetError> {
        let bad = |m: String| Err(NnetError::Config(m));
        if self.hidden_dims.contains(&0) {
            return bad(format!("hidden dims must be positive: {:?}", self.hidden_dims));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout rate {} outside [0, 1)", self.dropout_rate));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight decay {} must be non-negative", self.weight_decay));
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if self.max_epochs == 0 {
            return bad("max epochs must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub model: MlpModel,
    pub log: Vec<EpochLog>,
    /// Epoch (1-based) whose weights `model` holds.
    pub best_epoch: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    /// New best validation loss; snapshot the weights.
    Improved,
    Continue,
    Stop,
}

/// Patience-based early stopping on validation loss.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    waited: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            waited: 0,
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn observe(&mut self, epoch: usize, validation_loss: f64) -> StopDecision {
        if validation_loss < self.best {
            self.best = validation_loss;
            self.best_epoch = epoch;
            self.waited = 0;
            return StopDecision::Improved;
        }
        self.waited += 1;
        if self.waited >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_dims(set: &[&SampleRecord], dim: usize) -> Result<(), NnetError> {
    match set.iter().find(|s| s.features.len() != dim) {
        Some(s) => Err(NnetError::DimensionMismatch {
            expected: dim,
            got: s.features.len(),
        }),
        None => Ok(()),
    }
}

/// Trains a classifier with shuffled mini-batches.
///
/// Without `fixed_epochs`, training stops once validation loss has not
/// improved for `cfg.patience` consecutive epochs (or at `cfg.max_epochs`),
/// and the weights of the lowest-validation-loss epoch are returned. With
/// `fixed_epochs`, exactly that many epochs run and the final weights are
/// returned; the same happens when `cfg.early_stopping` is false.
pub fn fit(
    train: &[&SampleRecord],
    validation: &[&SampleRecord],
    cfg: &TrainConfig,
    fixed_epochs: Option<usize>,
) -> Result<TrainedModel, NnetError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(NnetError::EmptySet("training"));
    }
    if validation.is_empty() {
        return Err(NnetError::EmptySet("validation"));
    }
    let dim = train[0].features.len();
    check_dims(train, dim)?;
    check_dims(validation, dim)?;
    let weights = class_weights(train.iter().map(|s| s.label))?;

    let mut model = init_model(dim, cfg)?;
    let mut optimizer = AdamW::new(&model);
    let mut rng = seed::rng(seed::derive(cfg.seed, &[0x7EA1]));
    let epochs = fixed_epochs.unwrap_or(cfg.max_epochs);
    let restore_best = fixed_epochs.is_none() && cfg.early_stopping;

    let val_x: Vec<&[f64]> = validation.iter().map(|s| s.features.as_slice()).collect();
    let val_y: Vec<u8> = validation.iter().map(|s| s.label).collect();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best_model = model.clone();
    let mut log = Vec::with_capacity(epochs);
    let mut batch_x: Vec<&[f64]> = Vec::with_capacity(cfg.batch_size);
    let mut batch_y: Vec<u8> = Vec::with_capacity(cfg.batch_size);

    for epoch in 1..=epochs {
        order.shuffle(&mut rng);
        let mut train_total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            batch_x.clear();
            batch_y.clear();
            batch_x.extend(chunk.iter().map(|&i| train[i].features.as_slice()));
            batch_y.extend(chunk.iter().map(|&i| train[i].label));
            let (loss, grads): (f64, Gradients) = model.loss_and_gradients(&batch_x, &batch_y, weights, Mode::Train(&mut rng))?;
            train_total += loss * chunk.len() as f64;
            optimizer.step(&mut model, &grads, cfg.learning_rate, cfg.weight_decay)?;
        }
        let logits = val_x
            .iter()
            .map(|x| model.forward_logit(x, Mode::Infer))
            .collect::<Result<Vec<_>, _>>()?;
        let validation_loss = weighted_bce_loss(&logits, &val_y, weights)?;
        log.push(EpochLog {
            epoch,
            train_loss: train_total / train.len() as f64,
            validation_loss,
        });
        if restore_best {
            match stopper.observe(epoch, validation_loss) {
                StopDecision::Improved => best_model.clone_from(&model),
                StopDecision::Continue => {}
                StopDecision::Stop => break,
            }
        }
    }

    if restore_best {
        Ok(TrainedModel {
            model: best_model,
            log,
            best_epoch: stopper.best_epoch(),
        })
    } else {
        Ok(TrainedModel {
            model,
            best_epoch: log.len(),
            log,
        })
    }
}

/// Probability the model assigns to label `y`, clipped away from 0 and 1.
pub fn predict_confidence(model: &TrainedModel, x: &[f64], y: u8) -> Result<f64, NnetError> {
    if y > 1 {
        return Err(NnetError::Label(y));
    }
    let logit = model.model.forward_logit(x, Mode::Infer)?;
    let p = if y == 1 { logistic(logit) } else { logistic(-logit) };
    Ok(p.clamp(CONFIDENCE_CLIP, 1.0 - CONFIDENCE_CLIP))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn rec(id: usize, label: u8, features: Vec<f64>) -> SampleRecord {
        SampleRecord {
            id: format!("s{id}"),
            label,
            features,
            metadata: BTreeMap::new(),
        }
    }

    /// Two clusters separated along the first axis.
    fn separable(n: usize, seed_value: u64) -> Vec<SampleRecord> {
        use rand::Rng as _;
        let mut rng = seed::rng(seed_value);
        (0..n)
            .map(|i| {
                let label = (i % 2) as u8;
                let center = if label == 1 { 2.0 } else { -2.0 };
                rec(i, label, vec![center + rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            })
            .collect()
    }

    #[test]
    fn patience_trace_on_increasing_loss() {
        let mut stop = EarlyStopping::new(10);
        let mut stopped_after = None;
        for epoch in 1..=50 {
            let loss = 1.0 + epoch as f64 * 0.01;
            match stop.observe(epoch, loss) {
                StopDecision::Stop => {
                    stopped_after = Some(epoch);
                    break;
                }
                StopDecision::Improved => assert_eq!(epoch, 1),
                StopDecision::Continue => {}
            }
        }
        assert_eq!(stopped_after, Some(11));
        assert_eq!(stop.best_epoch(), 1);
    }

    #[test]
    fn learns_separable_toy_problem() {
        let data = separable(80, 1);
        let val_data = separable(20, 2);
        let train: Vec<&SampleRecord> = data.iter().collect();
        let val: Vec<&SampleRecord> = val_data.iter().collect();
        let cfg = TrainConfig {
            hidden_dims: vec![8],
            dropout_rate: 0.0,
            learning_rate: 1e-2,
            weight_decay: 0.0,
            batch_size: 16,
            max_epochs: 200,
            patience: 200,
            early_stopping: false,
            seed: 3,
        };
        let trained = fit(&train, &val, &cfg, None).unwrap();
        let correct = train
            .iter()
            .filter(|s| (predict_confidence(&trained, &s.features, 1).unwrap() > 0.5) == (s.label == 1))
            .count();
        assert_eq!(correct, train.len());
    }

    #[test]
    fn fixed_epochs_runs_exactly() {
        let data = separable(40, 5);
        let train: Vec<&SampleRecord> = data[..30].iter().collect();
        let val: Vec<&SampleRecord> = data[30..].iter().collect();
        let cfg = TrainConfig {
            hidden_dims: vec![4],
            patience: 1,
            ..TrainConfig::default()
        };
        let trained = fit(&train, &val, &cfg, Some(15)).unwrap();
        assert_eq!(trained.log.len(), 15);
        assert_eq!(trained.best_epoch, 15);
    }

    #[test]
    fn early_stopping_returns_best_logged_epoch() {
        let data = separable(60, 9);
        let train: Vec<&SampleRecord> = data[..40].iter().collect();
        let val: Vec<&SampleRecord> = data[40..].iter().collect();
        let cfg = TrainConfig {
            hidden_dims: vec![16],
            learning_rate: 0.05,
            max_epochs: 60,
            patience: 3,
            seed: 4,
            ..TrainConfig::default()
        };
        let trained = fit(&train, &val, &cfg, None).unwrap();
        let best = trained.log.iter().map(|e| e.validation_loss).fold(f64::INFINITY, f64::min);
        assert_eq!(trained.log[trained.best_epoch - 1].validation_loss, best);
        let logits: Vec<f64> = val.iter().map(|s| trained.model.forward_logit(&s.features, Mode::Infer).unwrap()).collect();
        let labels: Vec<u8> = val.iter().map(|s| s.label).collect();
        let w = class_weights(train.iter().map(|s| s.label)).unwrap();
        assert_eq!(weighted_bce_loss(&logits, &labels, w).unwrap(), best);
    }

    #[test]
    fn training_is_deterministic() {
        let data = separable(50, 11);
        let train: Vec<&SampleRecord> = data[..40].iter().collect();
        let val: Vec<&SampleRecord> = data[40..].iter().collect();
        let cfg = TrainConfig {
            hidden_dims: vec![8, 4],
            max_epochs: 5,
            seed: 21,
            ..TrainConfig::default()
        };
        assert_eq!(fit(&train, &val, &cfg, None).unwrap(), fit(&train, &val, &cfg, None).unwrap());
    }

    #[test]
    fn fit_errors() {
        let data = separable(10, 1);
        let all: Vec<&SampleRecord> = data.iter().collect();
        let ones: Vec<&SampleRecord> = data.iter().filter(|s| s.label == 1).collect();
        let cfg = TrainConfig::default();
        assert!(matches!(fit(&ones, &all, &cfg, Some(1)), Err(NnetError::Data(_))));
        assert!(matches!(fit(&[], &all, &cfg, Some(1)), Err(NnetError::EmptySet("training"))));
        let odd = rec(99, 0, vec![1.0]);
        let bad_val = vec![&odd];
        assert!(matches!(fit(&all, &bad_val, &cfg, Some(1)), Err(NnetError::DimensionMismatch { .. })));
        let bad_cfg = TrainConfig {
            dropout_rate: 1.0,
            ..TrainConfig::default()
        };
        assert!(matches!(fit(&all, &all, &bad_cfg, Some(1)), Err(NnetError::Config(_))));
    }

    #[test]
    fn confidence_examples() {
        let cfg = TrainConfig {
            hidden_dims: vec![],
            ..TrainConfig::default()
        };
        let mut model = TrainedModel {
            model: init_model(1, &cfg).unwrap(),
            log: vec![],
            best_epoch: 0,
        };
        model.model.layers[0].weights = vec![1.0];
        model.model.layers[0].biases = vec![0.0];
        assert_eq!(predict_confidence(&model, &[0.0], 1).unwrap(), 0.5);
        assert_eq!(predict_confidence(&model, &[0.0], 0).unwrap(), 0.5);
        assert!((predict_confidence(&model, &[1.0], 1).unwrap() - 0.731_058_578_630_004_9).abs() < 1e-15);
        for x in [-30.0, -3.0, -0.2, 0.7, 4.0, 25.0] {
            let p1 = predict_confidence(&model, &[x], 1).unwrap();
            let p0 = predict_confidence(&model, &[x], 0).unwrap();
            assert!(p1 > 0.0 && p1 < 1.0);
            assert!((p0 - (1.0 - p1)).abs() < 1e-12);
        }
        assert!(matches!(predict_confidence(&model, &[0.0, 1.0], 1), Err(NnetError::DimensionMismatch { .. })));
    }
}
