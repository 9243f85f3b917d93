use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AttackError, AttackKind, AttackScores, ScoreFlag};
use crate::game::{AttackInputs, ConfidenceMatrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmiaParams {
    pub gamma: f64,
}

impl Default for RmiaParams {
    fn default() -> Self {
        Self { gamma: 2.0 }
    }
}

impl RmiaParams {
    pub fn validate(&self) -> Result<(), AttackError> {
        if !(self.gamma > 0.0) {
            return Err(AttackError::Param {
                name: "gamma",
                message: format!("{} must be positive", self.gamma),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RmiaScore {
    pub score: f64,
    /// Every shadow contained the candidate, so `P(z)` used all shadows.
    pub all_shadows_include: bool,
}

/// `f(z) / P(z)` for every reference point, with `P(z)` averaged over the
/// shadows selected by `use_shadow`.
fn reference_ratios(z_target: &[f64], z_shadow: &ConfidenceMatrix, use_shadow: &[bool]) -> Vec<f64> {
    let used = use_shadow.iter().filter(|&&u| u).count() as f64;
    (0..z_shadow.rows())
        .map(|j| {
            let p: f64 = z_shadow.row(j).iter().zip(use_shadow).filter(|(_, &u)| u).map(|(c, _)| c).sum::<f64>() / used;
            z_target[j] / p
        })
        .collect()
}

fn dominated_share(ratio_m: f64, ratio_z: &[f64], gamma: f64) -> f64 {
    ratio_z.iter().filter(|&&r| ratio_m / r >= gamma).count() as f64 / ratio_z.len() as f64
}

fn excluded_or_all(mask: &[bool]) -> (Vec<bool>, bool) {
    let excluded: Vec<bool> = mask.iter().map(|&m| !m).collect();
    if excluded.iter().any(|&e| e) {
        (excluded, false)
    } else {
        (vec![true; mask.len()], true)
    }
}

/// Share of reference points `z` with `Ratio_m / Ratio_z >= gamma`, where
/// `Ratio_m = f(m) / mean_i s_i(m)` over all shadows and
/// `Ratio_z = f(z) / mean s_i(z)` over the shadows not trained on `m`.
pub fn rmia_score(
    target_m: f64,
    shadow_m: &[f64],
    mask_m: &[bool],
    z_target: &[f64],
    z_shadow: &ConfidenceMatrix,
    params: &RmiaParams,
) -> Result<RmiaScore, AttackError> {
    params.validate()?;
    if z_shadow.rows() == 0 {
        return Err(AttackError::EmptyReference);
    }
    if shadow_m.is_empty() || shadow_m.len() != mask_m.len() || shadow_m.len() != z_shadow.shadows || z_target.len() != z_shadow.rows() {
        return Err(AttackError::Shape("shadow counts disagree".into()));
    }
    let p_m = shadow_m.iter().sum::<f64>() / shadow_m.len() as f64;
    let (use_shadow, all_shadows_include) = excluded_or_all(mask_m);
    let ratios = reference_ratios(z_target, z_shadow, &use_shadow);
    Ok(RmiaScore {
        score: dominated_share(target_m / p_m, &ratios, params.gamma),
        all_shadows_include,
    })
}

/// RMIA over every challenge candidate against the shared reference set.
/// Reference ratios depend only on which shadows exclude the candidate and
/// are computed once per distinct inclusion pattern.
pub fn run_rmia(inputs: &AttackInputs, params: &RmiaParams) -> Result<AttackScores, AttackError> {
    params.validate()?;
    let k = inputs.shadows();
    let n = inputs.candidate_ids.len();
    if inputs.z_ids.is_empty() || inputs.z_shadow.rows() == 0 {
        return Err(AttackError::EmptyReference);
    }
    if inputs.shadow.rows() != n || inputs.target.len() != n || inputs.z_shadow.shadows != k || inputs.z_target.len() != inputs.z_shadow.rows() {
        return Err(AttackError::Shape("candidate and reference tables disagree".into()));
    }
    let mut patterns: Vec<Vec<bool>> = (0..n).map(|i| inputs.shadow.mask_row(i).to_vec()).collect();
    patterns.sort();
    patterns.dedup();
    let cache: HashMap<Vec<bool>, (Vec<f64>, bool)> = patterns
        .into_par_iter()
        .map(|mask| {
            let (use_shadow, all) = excluded_or_all(&mask);
            let ratios = reference_ratios(&inputs.z_target, &inputs.z_shadow, &use_shadow);
            (mask, (ratios, all))
        })
        .collect();

    let (scores, flags): (Vec<f64>, Vec<Vec<ScoreFlag>>) = (0..n)
        .into_par_iter()
        .map(|i| {
            let row = inputs.shadow.row(i);
            let p_m = row.iter().sum::<f64>() / k as f64;
            let (ratios, all) = &cache[inputs.shadow.mask_row(i)];
            let score = dominated_share(inputs.target[i] / p_m, ratios, params.gamma);
            let flags = if *all { vec![ScoreFlag::AllShadowsInclude] } else { Vec::new() };
            (score, flags)
        })
        .unzip();
    let out = AttackScores {
        attack: AttackKind::Rmia,
        ids: inputs.candidate_ids.clone(),
        scores,
        is_member: inputs.is_member.clone(),
        flags,
    };
    out.check()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn z_table(targets: &[f64], shadows: &[[f64; 2]]) -> (Vec<f64>, ConfidenceMatrix) {
        let m = ConfidenceMatrix {
            ids: (0..targets.len()).map(|i| format!("z{i}")).collect(),
            shadows: 2,
            values: shadows.iter().flatten().copied().collect(),
            mask: vec![false; 2 * targets.len()],
        };
        (targets.to_vec(), m)
    }

    #[test]
    fn counting_fixture() {
        // P(m) = 0.2, f(m) = 0.8: Ratio_m = 4. Reference ratios 1, 1.5, 3, 8.
        let (zt, zs) = z_table(&[0.4, 0.6, 0.6, 0.8], &[[0.4, 0.4], [0.4, 0.4], [0.2, 0.2], [0.1, 0.1]]);
        let p = RmiaParams::default();
        let s = rmia_score(0.8, &[0.3, 0.1], &[true, false], &zt, &zs, &p).unwrap();
        assert_eq!(s.score, 0.5);
        assert!(!s.all_shadows_include);
        assert_eq!(rmia_score(0.8, &[0.3, 0.1], &[true, false], &zt, &zs, &RmiaParams { gamma: 0.1 }).unwrap().score, 1.0);
        assert_eq!(rmia_score(0.8, &[0.3, 0.1], &[true, false], &zt, &zs, &RmiaParams { gamma: 100.0 }).unwrap().score, 0.0);
    }

    #[test]
    fn out_shadows_select_the_reference_average() {
        // Shadow 0 includes m, so only shadow 1 enters P(z): Ratio_z = 0.5 / 0.25 = 2.
        let (zt, zs) = z_table(&[0.5], &[[0.9, 0.25]]);
        let p = RmiaParams { gamma: 1.0 };
        // Ratio_m = 0.6 / 0.3 = 2 >= 1 * 2.
        assert_eq!(rmia_score(0.6, &[0.3, 0.3], &[true, false], &zt, &zs, &p).unwrap().score, 1.0);
        // With shadow 1 including m instead, Ratio_z = 0.5 / 0.9 and Ratio_m / Ratio_z = 3.6.
        assert_eq!(rmia_score(0.6, &[0.3, 0.3], &[false, true], &zt, &zs, &RmiaParams { gamma: 3.5 }).unwrap().score, 1.0);
        assert_eq!(rmia_score(0.6, &[0.3, 0.3], &[false, true], &zt, &zs, &RmiaParams { gamma: 3.7 }).unwrap().score, 0.0);
        let all = rmia_score(0.6, &[0.3, 0.3], &[true, true], &zt, &zs, &p).unwrap();
        assert!(all.all_shadows_include);
    }

    #[test]
    fn errors() {
        let (zt, zs) = z_table(&[], &[]);
        assert!(matches!(rmia_score(0.5, &[0.5, 0.5], &[true, false], &zt, &zs, &RmiaParams::default()), Err(AttackError::EmptyReference)));
        let (zt, zs) = z_table(&[0.5], &[[0.5, 0.5]]);
        assert!(rmia_score(0.5, &[0.5], &[true], &zt, &zs, &RmiaParams::default()).is_err());
        assert!(RmiaParams { gamma: -1.0 }.validate().is_err());
        assert!(RmiaParams { gamma: f64::NAN }.validate().is_err());
    }

    proptest! {
        #[test]
        fn non_increasing_in_gamma(
            tm in 0.01f64..0.99,
            sm in prop::array::uniform2(0.01f64..0.99),
            mask in prop::array::uniform2(any::<bool>()),
            z in prop::collection::vec((0.01f64..0.99, 0.01f64..0.99, 0.01f64..0.99), 1..20),
            g1 in 0.01f64..10.0,
            g2 in 0.01f64..10.0,
        ) {
            let targets: Vec<f64> = z.iter().map(|t| t.0).collect();
            let shadows: Vec<[f64; 2]> = z.iter().map(|t| [t.1, t.2]).collect();
            let (zt, zs) = z_table(&targets, &shadows);
            let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
            let a = rmia_score(tm, &sm, &mask, &zt, &zs, &RmiaParams { gamma: lo }).unwrap();
            let b = rmia_score(tm, &sm, &mask, &zt, &zs, &RmiaParams { gamma: hi }).unwrap();
            prop_assert!(a.score >= b.score);
            prop_assert!((0.0..=1.0).contains(&a.score));
            let inf = rmia_score(tm, &sm, &mask, &zt, &zs, &RmiaParams { gamma: f64::INFINITY }).unwrap();
            prop_assert_eq!(inf.score, 0.0);
        }
    }
}
