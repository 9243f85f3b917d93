use super::{Gradients, MlpModel, NnetError};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// One AdamW update of a single parameter block, `step` counted from 1.
///
/// The adaptive step uses bias-corrected moments; decoupled decay
/// `p <- p - lr * weight_decay * p` is applied to the result.
pub fn adamw_update(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    lr: f64,
    weight_decay: f64,
    step: u64,
) {
    debug_assert!(step >= 1);
    let c1 = 1.0 - ADAM_BETA1.powf(step as f64);
    let c2 = 1.0 - ADAM_BETA2.powf(step as f64);
    let decay = lr * weight_decay;
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(m.iter_mut()).zip(v.iter_mut()) {
        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        *p -= decay * *p;
    }
}

/// AdamW optimizer state for a whole model.
#[derive(Clone, Debug)]
pub struct AdamW {
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl AdamW {
    pub fn new(model: &MlpModel) -> Self {
        let sizes: Vec<usize> = model.layers.iter().flat_map(|l| [l.weights.len(), l.biases.len()]).collect();
        Self {
            first: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update. Gradients are checked before anything is touched,
    /// so a non-finite gradient leaves model and state unchanged.
    pub fn step(&mut self, model: &mut MlpModel, grads: &Gradients, lr: f64, weight_decay: f64) -> Result<(), NnetError> {
        let grad_blocks: Vec<&Vec<f64>> = grads.layers.iter().flat_map(|l| [&l.weights, &l.biases]).collect();
        for ((name, params), g) in model.blocks_mut().zip(&grad_blocks) {
            if params.len() != g.len() {
                return Err(NnetError::Config(format!("gradient shape mismatch in {name}")));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(NnetError::NonFiniteGradient(name));
            }
        }
        self.step += 1;
        for (((_, params), g), (m, v)) in model
            .blocks_mut()
            .zip(grad_blocks)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            adamw_update(params, g, m, v, lr, weight_decay, self.step);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::{init_model, TrainConfig};

    #[test]
    fn zero_gradient_without_decay_is_identity() {
        let mut p = vec![0.3, -1.5, 2.0];
        let before = p.clone();
        let (mut m, mut v) = (vec![0.0; 3], vec![0.0; 3]);
        adamw_update(&mut p, &[0.0; 3], &mut m, &mut v, 1e-3, 0.0, 1);
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = vec![1.0, 1.0, 1.0, 1.0];
        let g = [0.02, -3.0, 150.0, -1e-3];
        let (mut m, mut v) = (vec![0.0; 4], vec![0.0; 4]);
        let lr = 0.01;
        adamw_update(&mut p, &g, &mut m, &mut v, lr, 0.0, 1);
        for (after, grad) in p.iter().zip(g) {
            let delta = after - 1.0;
            assert_eq!(delta.signum(), -grad.signum());
            assert!((delta.abs() - lr).abs() < 1e-6, "delta {delta}");
        }
    }

    #[test]
    fn decoupled_decay_scales_parameters() {
        let mut p = vec![2.0, -4.0];
        let (mut m, mut v) = (vec![0.0; 2], vec![0.0; 2]);
        adamw_update(&mut p, &[0.0, 0.0], &mut m, &mut v, 0.1, 0.5, 1);
        assert_eq!(p, vec![2.0 * (1.0 - 0.05), -4.0 * (1.0 - 0.05)]);
    }

    #[test]
    fn non_finite_gradient_names_block_and_leaves_model() {
        let mut model = init_model(3, &TrainConfig {
            hidden_dims: vec![2],
            ..TrainConfig::default()
        })
        .unwrap();
        let before = model.clone();
        let mut grads = Gradients::zeros_like(&model);
        grads.layers[1].biases[0] = f64::NAN;
        let mut opt = AdamW::new(&model);
        match opt.step(&mut model, &grads, 1e-3, 0.0) {
            Err(NnetError::NonFiniteGradient(name)) => assert_eq!(name, "layer1.bias"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(model, before);
        assert_eq!(opt.steps_taken(), 0);
    }
}
