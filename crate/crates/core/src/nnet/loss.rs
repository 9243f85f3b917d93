use super::NnetError;
use crate::data::ClassWeights;

/// Probabilities are clipped to `[PROBABILITY_CLIP, 1 - PROBABILITY_CLIP]` inside the loss.
pub const PROBABILITY_CLIP: f64 = 1e-7;

/// Unweighted cross-entropy of one example and its derivative with respect
/// to the logit. The derivative is zero where the probability is clipped.
pub fn bce_term(logit: f64, label: u8) -> (f64, f64) {
    let p = super::logistic(logit);
    let clipped = p.clamp(PROBABILITY_CLIP, 1.0 - PROBABILITY_CLIP);
    let y = f64::from(label);
    let loss = -y * clipped.ln() - (1.0 - y) * (1.0 - clipped).ln();
    let grad = if clipped == p { p - y } else { 0.0 };
    (loss, grad)
}

/// Mean over the batch of `w_y * BCE(sigmoid(logit), y)`.
pub fn weighted_bce_loss(logits: &[f64], labels: &[u8], weights: ClassWeights) -> Result<f64, NnetError> {
    if logits.len() != labels.len() {
        return Err(NnetError::LengthMismatch {
            logits: logits.len(),
            labels: labels.len(),
        });
    }
    if logits.is_empty() {
        return Err(NnetError::EmptyBatch);
    }
    let mut total = 0.0;
    for (&l, &y) in logits.iter().zip(labels) {
        if y > 1 {
            return Err(NnetError::Label(y));
        }
        total += weights.of(y) * bce_term(l, y).0;
    }
    Ok(total / logits.len() as f64)
}
