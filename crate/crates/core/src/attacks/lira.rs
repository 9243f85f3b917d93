use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AttackError, AttackKind, AttackScores, ScoreFlag};
use crate::game::AttackInputs;
use crate::stats::{fit_gaussian, gaussian_log_pdf, GaussianFit};

/// What replaces a missing in- or out-population.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LiraFallback {
    /// Gaussian fitted to the out-shadow logits of all candidates pooled.
    PooledOut,
    /// Score the sample with `LR = 1`.
    Neutral,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiraParams {
    pub epsilon: f64,
    pub variance_floor: f64,
    pub fallback: LiraFallback,
    /// Share one in-variance and one out-variance across all candidates.
    pub global_variance: bool,
}

impl Default for LiraParams {
    fn default() -> Self {
        Self {
            epsilon: 1e-6,
            variance_floor: 1e-6,
            fallback: LiraFallback::PooledOut,
            global_variance: false,
        }
    }
}

impl LiraParams {
    pub fn validate(&self) -> Result<(), AttackError> {
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(AttackError::Param {
                name: "epsilon",
                message: format!("{} outside (0, 0.5)", self.epsilon),
            });
        }
        if !(self.variance_floor > 0.0 && self.variance_floor.is_finite()) {
            return Err(AttackError::Param {
                name: "variance_floor",
                message: format!("{} must be positive", self.variance_floor),
            });
        }
        Ok(())
    }
}

/// `Φ(p) = ln(p / (1 - p))` after clipping `p` into `[ε, 1 - ε]`.
pub fn rescale_confidence(p: f64, epsilon: f64) -> f64 {
    let c = p.clamp(epsilon, 1.0 - epsilon);
    c.ln() - (1.0 - c).ln()
}

/// `ln N(o | in) - ln N(o | out)`.
pub fn lira_log_score(o: f64, fit_in: &GaussianFit, fit_out: &GaussianFit) -> Result<f64, AttackError> {
    Ok(gaussian_log_pdf(o, fit_in.mean, fit_in.variance)? - gaussian_log_pdf(o, fit_out.mean, fit_out.variance)?)
}

/// Likelihood ratio of the rescaled target confidence `o` under Gaussians
/// fitted to the rescaled in- and out-shadow confidences.
pub fn lira_score(o: f64, o_in: &[f64], o_out: &[f64], params: &LiraParams) -> Result<f64, AttackError> {
    params.validate()?;
    if o_in.is_empty() {
        return Err(AttackError::EmptyPopulation("in"));
    }
    if o_out.is_empty() {
        return Err(AttackError::EmptyPopulation("out"));
    }
    let fit_in = fit_gaussian(o_in, params.variance_floor)?;
    let fit_out = fit_gaussian(o_out, params.variance_floor)?;
    Ok(lira_log_score(o, &fit_in, &fit_out)?.exp())
}

struct Split {
    target: f64,
    ins: Vec<f64>,
    outs: Vec<f64>,
}

fn pooled_within_variance(groups: impl Iterator<Item = Vec<f64>>, floor: f64) -> Option<f64> {
    let (mut ss, mut dof) = (0.0, 0usize);
    for g in groups {
        if g.len() < 2 {
            continue;
        }
        let mean = g.iter().sum::<f64>() / g.len() as f64;
        ss += g.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
        dof += g.len() - 1;
    }
    (dof > 0).then(|| (ss / dof as f64).max(floor))
}

/// LiRA over every challenge candidate. Scores are `ln LR`.
pub fn run_lira(inputs: &AttackInputs, params: &LiraParams) -> Result<AttackScores, AttackError> {
    params.validate()?;
    let k = inputs.shadows();
    let n = inputs.candidate_ids.len();
    if inputs.shadow.rows() != n || inputs.target.len() != n || inputs.shadow.values.len() != n * k {
        return Err(AttackError::Shape("candidate rows do not match the confidence matrix".into()));
    }
    let phi = |p: f64| rescale_confidence(p, params.epsilon);
    let splits: Vec<Split> = (0..n)
        .map(|i| {
            let (mut ins, mut outs) = (Vec::new(), Vec::new());
            for (&c, &m) in inputs.shadow.row(i).iter().zip(inputs.shadow.mask_row(i)) {
                if m { ins.push(phi(c)) } else { outs.push(phi(c)) }
            }
            Split {
                target: phi(inputs.target[i]),
                ins,
                outs,
            }
        })
        .collect();

    let all_outs: Vec<f64> = splits.iter().flat_map(|s| s.outs.iter().copied()).collect();
    let pooled = if all_outs.is_empty() {
        None
    } else {
        Some(fit_gaussian(&all_outs, params.variance_floor)?)
    };
    let (var_in, var_out) = if params.global_variance {
        (
            pooled_within_variance(splits.iter().map(|s| s.ins.clone()), params.variance_floor),
            pooled_within_variance(splits.iter().map(|s| s.outs.clone()), params.variance_floor),
        )
    } else {
        (None, None)
    };
    let fit = |xs: &[f64], global: Option<f64>| -> Result<GaussianFit, AttackError> {
        let mut g = fit_gaussian(xs, params.variance_floor)?;
        if let Some(v) = global {
            g.variance = v;
        }
        Ok(g)
    };

    let results = splits
        .par_iter()
        .map(|s| {
            let mut flags = Vec::new();
            let fit_in = if s.ins.is_empty() {
                flags.push(ScoreFlag::NoInShadows);
                None
            } else {
                Some(fit(&s.ins, var_in)?)
            };
            let fit_out = if s.outs.is_empty() {
                flags.push(ScoreFlag::NoOutShadows);
                None
            } else {
                Some(fit(&s.outs, var_out)?)
            };
            let substitute = match params.fallback {
                LiraFallback::PooledOut => pooled,
                LiraFallback::Neutral => None,
            };
            let score = match (fit_in.or(substitute), fit_out.or(substitute)) {
                (Some(a), Some(b)) => lira_log_score(s.target, &a, &b)?,
                _ => {
                    flags.push(ScoreFlag::Neutral);
                    0.0
                }
            };
            Ok((score, flags))
        })
        .collect::<Result<Vec<_>, AttackError>>()?;

    let (scores, flags): (Vec<f64>, Vec<Vec<ScoreFlag>>) = results.into_iter().unzip();
    let out = AttackScores {
        attack: AttackKind::Lira,
        ids: inputs.candidate_ids.clone(),
        scores,
        is_member: inputs.is_member.clone(),
        flags,
    };
    out.check()?;
    Ok(out)
}
