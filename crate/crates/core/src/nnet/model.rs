use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{NnetError, TrainConfig};
use crate::seed::{self, Rng};

/// One dense layer. `weights` is row-major `outputs x inputs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    fn affine(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.biases.iter().enumerate().map(|(j, &b)| {
            let row = &self.weights[j * self.inputs..(j + 1) * self.inputs];
            b + row.iter().zip(input).map(|(w, a)| w * a).sum::<f64>()
        }));
    }
}

/// Rectifier MLP with a single logit output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub layers: Vec<Layer>,
    pub dropout_rate: f64,
}

pub enum Mode<'a> {
    Infer,
    /// Dropout active, masks drawn from the given stream.
    Train(&'a mut Rng),
}

/// Gradient buffers shaped like the model's layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Self {
            layers: model.layers.iter().map(|l| Layer::zeros(l.inputs, l.outputs)).collect(),
        }
    }

    pub fn clear(&mut self) {
        for l in &mut self.layers {
            l.weights.fill(0.0);
            l.biases.fill(0.0);
        }
    }
}

/// Per-sample forward state kept for backpropagation.
#[derive(Default)]
pub(crate) struct Trace {
    /// `acts[0]` is the input; `acts[l + 1]` the (post-dropout) output of layer `l`.
    acts: Vec<Vec<f64>>,
    /// Multiplier applied after the rectifier: 0 for inactive or dropped units.
    gates: Vec<Vec<f64>>,
}

/// Fan-in scaled uniform initialization: weights of a layer with fan-in `n`
/// are drawn from `U(-sqrt(6/n), sqrt(6/n))`, biases start at zero.
pub fn init_model(dim: usize, cfg: &TrainConfig) -> Result<MlpModel, NnetError> {
    if dim < 1 {
        return Err(NnetError::ZeroDimension);
    }
    let mut rng = seed::rng(seed::derive(cfg.seed, &[0x1717]));
    let mut widths = vec![dim];
    widths.extend(&cfg.hidden_dims);
    widths.push(1);
    let layers = widths
        .windows(2)
        .map(|w| {
            let mut layer = Layer::zeros(w[0], w[1]);
            let bound = (6.0 / w[0] as f64).sqrt();
            for v in &mut layer.weights {
                *v = rng.random_range(-bound..bound);
            }
            layer
        })
        .collect();
    Ok(MlpModel {
        layers,
        dropout_rate: cfg.dropout_rate,
    })
}

impl MlpModel {
    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn hidden_dims(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1].iter().map(|l| l.outputs).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Parameter blocks in a fixed order with their names.
    pub fn blocks_mut(&mut self) -> impl Iterator<Item = (String, &mut Vec<f64>)> {
        self.layers.iter_mut().enumerate().flat_map(|(i, l)| {
            [(format!("layer{i}.weight"), &mut l.weights), (format!("layer{i}.bias"), &mut l.biases)]
        })
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), NnetError> {
        if x.len() != self.input_dim() {
            return Err(NnetError::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward_logit(&self, x: &[f64], mode: Mode<'_>) -> Result<f64, NnetError> {
        self.check_dim(x)?;
        let mut trace = Trace::default();
        Ok(self.forward_traced(x, mode, &mut trace))
    }

    pub(crate) fn forward_traced(&self, x: &[f64], mut mode: Mode<'_>, trace: &mut Trace) -> f64 {
        let depth = self.layers.len();
        trace.acts.resize_with(depth + 1, Vec::new);
        trace.gates.resize_with(depth.saturating_sub(1), Vec::new);
        trace.acts[0].clear();
        trace.acts[0].extend_from_slice(x);
        let keep = 1.0 - self.dropout_rate;
        for (l, layer) in self.layers.iter().enumerate() {
            let (before, after) = trace.acts.split_at_mut(l + 1);
            let out = &mut after[0];
            layer.affine(&before[l], out);
            if l + 1 == depth {
                break;
            }
            let gate = &mut trace.gates[l];
            gate.clear();
            for v in out.iter_mut() {
                let mut g = if *v > 0.0 { 1.0 } else { 0.0 };
                if let Mode::Train(rng) = &mut mode {
                    if self.dropout_rate > 0.0 {
                        g = if rng.random::<f64>() < self.dropout_rate { 0.0 } else { g / keep };
                    }
                }
                *v *= g;
                gate.push(g);
            }
        }
        trace.acts[depth][0]
    }

    /// Accumulates `d_logit * d(logit)/d(params)` into `grads`.
    pub(crate) fn backward(&self, trace: &Trace, d_logit: f64, grads: &mut Gradients, scratch: &mut (Vec<f64>, Vec<f64>)) {
        let (delta, prev) = scratch;
        delta.clear();
        delta.push(d_logit);
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &trace.acts[l];
            let g = &mut grads.layers[l];
            for (j, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g.biases[j] += d;
                let row = &mut g.weights[j * layer.inputs..(j + 1) * layer.inputs];
                for (gw, a) in row.iter_mut().zip(input) {
                    *gw += d * a;
                }
            }
            if l == 0 {
                break;
            }
            prev.clear();
            prev.resize(layer.inputs, 0.0);
            for (j, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weights[j * layer.inputs..(j + 1) * layer.inputs];
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += d * w;
                }
            }
            for (p, gate) in prev.iter_mut().zip(&trace.gates[l - 1]) {
                *p *= gate;
            }
            std::mem::swap(delta, prev);
        }
    }

    /// Batch loss and its gradient, computed by backpropagation.
    pub fn loss_and_gradients(
        &self,
        xs: &[&[f64]],
        labels: &[u8],
        weights: crate::data::ClassWeights,
        mut mode: Mode<'_>,
    ) -> Result<(f64, Gradients), NnetError> {
        if xs.len() != labels.len() {
            return Err(NnetError::LengthMismatch {
                logits: xs.len(),
                labels: labels.len(),
            });
        }
        if xs.is_empty() {
            return Err(NnetError::EmptyBatch);
        }
        let mut grads = Gradients::zeros_like(self);
        let mut trace = Trace::default();
        let mut scratch = Default::default();
        let scale = 1.0 / xs.len() as f64;
        let mut total = 0.0;
        for (x, &y) in xs.iter().zip(labels) {
            self.check_dim(x)?;
            if y > 1 {
                return Err(NnetError::Label(y));
            }
            let m = match &mut mode {
                Mode::Infer => Mode::Infer,
                Mode::Train(rng) => Mode::Train(rng),
            };
            let logit = self.forward_traced(x, m, &mut trace);
            let (l, d) = super::bce_term(logit, y);
            let w = weights.of(y);
            total += w * l;
            self.backward(&trace, w * d * scale, &mut grads, &mut scratch);
        }
        Ok((total * scale, grads))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ClassWeights;
    use crate::nnet::weighted_bce_loss;

    fn cfg(hidden: Vec<usize>, seed: u64) -> TrainConfig {
        TrainConfig {
            hidden_dims: hidden,
            seed,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn parameter_counts() {
        let m = init_model(8, &cfg(vec![16], 0)).unwrap();
        assert_eq!(m.parameter_count(), 8 * 16 + 16 + 16 + 1);
        assert_eq!(m.parameter_count(), 161);
        let m = init_model(5, &cfg(vec![], 0)).unwrap();
        assert_eq!(m.parameter_count(), 6);
        let m = init_model(4, &cfg(vec![3, 2], 0)).unwrap();
        assert_eq!(m.parameter_count(), (4 * 3 + 3) + (3 * 2 + 2) + (2 + 1));
        assert!(matches!(init_model(0, &cfg(vec![], 0)), Err(NnetError::ZeroDimension)));
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = init_model(10, &cfg(vec![7], 3)).unwrap();
        let b = init_model(10, &cfg(vec![7], 3)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, init_model(10, &cfg(vec![7], 4)).unwrap());
        let bound = (6.0f64 / 10.0).sqrt();
        assert!(a.layers[0].weights.iter().all(|w| w.abs() < bound));
        assert!(a.layers.iter().all(|l| l.biases.iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn zero_network_and_linear_case() {
        let mut m = init_model(3, &cfg(vec![4], 0)).unwrap();
        for (_, block) in m.blocks_mut() {
            block.fill(0.0);
        }
        assert_eq!(m.forward_logit(&[1.0, -2.0, 3.0], Mode::Infer).unwrap(), 0.0);

        let mut lin = init_model(3, &cfg(vec![], 0)).unwrap();
        lin.layers[0].weights = vec![0.5, -1.0, 2.0];
        lin.layers[0].biases = vec![0.25];
        let logit = lin.forward_logit(&[2.0, 1.0, -1.0], Mode::Infer).unwrap();
        assert_eq!(logit, 0.5 * 2.0 - 1.0 - 2.0 + 0.25);
        assert!(matches!(lin.forward_logit(&[1.0], Mode::Infer), Err(NnetError::DimensionMismatch { .. })));
    }

    #[test]
    fn dropout_zero_matches_infer_and_dropout_changes_train() {
        let mut c = cfg(vec![16, 8], 5);
        c.dropout_rate = 0.0;
        let m = init_model(6, &c).unwrap();
        let x = [0.1, -0.3, 0.7, 1.1, -0.2, 0.05];
        let mut rng = seed::rng(1);
        assert_eq!(
            m.forward_logit(&x, Mode::Infer).unwrap(),
            m.forward_logit(&x, Mode::Train(&mut rng)).unwrap()
        );
        c.dropout_rate = 0.5;
        let m = init_model(6, &c).unwrap();
        let infer = m.forward_logit(&x, Mode::Infer).unwrap();
        let differs = (0..20).any(|_| m.forward_logit(&x, Mode::Train(&mut rng)).unwrap() != infer);
        assert!(differs);
        assert_eq!(infer, m.forward_logit(&x, Mode::Infer).unwrap());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = seed::rng(77);
        for case in 0..4 {
            let dim = rng.random_range(1..8);
            let hidden: Vec<usize> = (0..rng.random_range(0..3)).map(|_| rng.random_range(1..6)).collect();
            let mut model = init_model(dim, &cfg(hidden, case)).unwrap();
            for (_, block) in model.blocks_mut() {
                for v in block.iter_mut() {
                    *v += rng.random_range(-0.1..0.1);
                }
            }
            let xs: Vec<Vec<f64>> = (0..5).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let views: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
            let labels: Vec<u8> = (0..5).map(|i| (i % 2) as u8).collect();
            let w = ClassWeights {
                negative: 0.7,
                positive: 1.9,
            };
            let (_, grads) = model.loss_and_gradients(&views, &labels, w, Mode::Infer).unwrap();
            let loss_of = |m: &MlpModel| {
                let logits: Vec<f64> = views.iter().map(|x| m.forward_logit(x, Mode::Infer).unwrap()).collect();
                weighted_bce_loss(&logits, &labels, w).unwrap()
            };
            let analytic: Vec<f64> = grads.layers.iter().flat_map(|l| l.weights.iter().chain(&l.biases).copied()).collect();
            let mut numeric = Vec::new();
            let n_layers = model.layers.len();
            for l in 0..n_layers {
                for which in 0..2 {
                    let len = if which == 0 { model.layers[l].weights.len() } else { model.layers[l].biases.len() };
                    for i in 0..len {
                        let h = 1e-5;
                        let mut plus = model.clone();
                        let mut minus = model.clone();
                        let (p, m) = if which == 0 {
                            (&mut plus.layers[l].weights[i], &mut minus.layers[l].weights[i])
                        } else {
                            (&mut plus.layers[l].biases[i], &mut minus.layers[l].biases[i])
                        };
                        *p += h;
                        *m -= h;
                        numeric.push((loss_of(&plus) - loss_of(&minus)) / (2.0 * h));
                    }
                }
            }
            let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let norm: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt() + numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
            assert!(diff / norm < 1e-6, "case {case}: relative error {}", diff / norm);
        }
        // keep `model` order in blocks_mut aligned with the gradient flattening above
        let mut m = init_model(2, &cfg(vec![3], 0)).unwrap();
        let names: Vec<String> = m.blocks_mut().map(|(n, _)| n).collect();
        assert_eq!(names, ["layer0.weight", "layer0.bias", "layer1.weight", "layer1.bias"]);
    }
}
