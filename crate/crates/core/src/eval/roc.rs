use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::attacks::{AttackKind, AttackScores};

/// One operating point: every candidate scoring `>= threshold` is called a member.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fp: usize,
    pub tp: usize,
    pub fpr: f64,
    pub tpr: f64,
}

/// Exact step ROC. The first point has threshold `+inf` and admits nothing;
/// each later point admits one more distinct score value, ties together.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub members: usize,
    pub non_members: usize,
}

pub fn roc_curve(scores: &AttackScores) -> Result<RocCurve, EvalError> {
    if scores.scores.len() != scores.is_member.len() {
        return Err(EvalError::Shape);
    }
    if scores.scores.iter().any(|s| !s.is_finite()) {
        return Err(EvalError::NonFinite);
    }
    let members = scores.members();
    let non_members = scores.len() - members;
    if members == 0 || non_members == 0 {
        return Err(EvalError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores.scores[b].total_cmp(&scores.scores[a]));
    let point = |threshold, fp: usize, tp: usize| RocPoint {
        threshold,
        fp,
        tp,
        fpr: fp as f64 / non_members as f64,
        tpr: tp as f64 / members as f64,
    };
    let mut points = vec![point(f64::INFINITY, 0, 0)];
    let (mut fp, mut tp) = (0, 0);
    let mut i = 0;
    while i < order.len() {
        let s = scores.scores[order[i]];
        while i < order.len() && scores.scores[order[i]] == s {
            if scores.is_member[order[i]] { tp += 1 } else { fp += 1 }
            i += 1;
        }
        points.push(point(s, fp, tp));
    }
    Ok(RocCurve {
        points,
        members,
        non_members,
    })
}

impl RocCurve {
    /// The lowest-threshold point whose false positive rate stays within `target`.
    pub fn operating_point(&self, fpr_target: f64) -> Result<&RocPoint, EvalError> {
        if !(0.0..=1.0).contains(&fpr_target) {
            return Err(EvalError::FprTarget(fpr_target));
        }
        Ok(self.points.iter().rev().find(|p| p.fpr <= fpr_target).unwrap_or(&self.points[0]))
    }

    /// Area under the step curve, ties counted as one half.
    pub fn auc(&self) -> f64 {
        self.points.windows(2).map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0).sum()
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "threshold,fpr,tpr")?;
        for p in &self.points {
            writeln!(w, "{:?},{:?},{:?}", p.threshold, p.fpr, p.tpr)?;
        }
        Ok(())
    }
}

/// Largest TPR among points with FPR at most `fpr_target`.
pub fn tpr_at_fpr(roc: &RocCurve, fpr_target: f64) -> Result<f64, EvalError> {
    Ok(roc.operating_point(fpr_target)?.tpr)
}

/// Expected TPR at FPR 0 of a random guesser when members are two thirds of the challenge.
pub fn baseline_tpr(n_members: usize) -> Result<f64, EvalError> {
    if n_members == 0 {
        return Err(EvalError::NoMembers);
    }
    Ok(2.0 / n_members as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentifiedSet {
    pub attack: AttackKind,
    pub fpr_target: f64,
    /// `None` when nothing is admitted (threshold `+inf`).
    pub threshold: Option<f64>,
    pub achieved_fpr: f64,
    pub tpr: f64,
    /// Admitted members in challenge order.
    pub ids: Vec<String>,
}

impl IdentifiedSet {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

pub fn identified_members(scores: &AttackScores, fpr_target: f64) -> Result<IdentifiedSet, EvalError> {
    let roc = roc_curve(scores)?;
    identified_with(scores, &roc, fpr_target)
}

pub(crate) fn identified_with(scores: &AttackScores, roc: &RocCurve, fpr_target: f64) -> Result<IdentifiedSet, EvalError> {
    let p = roc.operating_point(fpr_target)?;
    let ids = (0..scores.len())
        .filter(|&i| scores.is_member[i] && scores.scores[i] >= p.threshold)
        .map(|i| scores.ids[i].clone())
        .collect();
    Ok(IdentifiedSet {
        attack: scores.attack,
        fpr_target,
        threshold: p.threshold.is_finite().then_some(p.threshold),
        achieved_fpr: p.fpr,
        tpr: p.tpr,
        ids,
    })
}

/// TPR over members with `label == minority`, at the threshold chosen on the full challenge.
pub fn minority_tpr(scores: &AttackScores, labels: &[u8], minority: u8, fpr_target: f64) -> Result<f64, EvalError> {
    if labels.len() != scores.len() {
        return Err(EvalError::Shape);
    }
    let roc = roc_curve(scores)?;
    let p = roc.operating_point(fpr_target)?;
    let (mut hit, mut total) = (0usize, 0usize);
    for ((&s, &member), &label) in scores.scores.iter().zip(&scores.is_member).zip(labels) {
        if member && label == minority {
            total += 1;
            if s >= p.threshold {
                hit += 1;
            }
        }
    }
    if total == 0 {
        return Err(EvalError::NoMinority);
    }
    Ok(hit as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn scores(members: &[f64], non_members: &[f64]) -> AttackScores {
        let n = members.len() + non_members.len();
        AttackScores {
            attack: AttackKind::Lira,
            ids: (0..n).map(|i| format!("c{i}")).collect(),
            scores: members.iter().chain(non_members).copied().collect(),
            is_member: (0..n).map(|i| i < members.len()).collect(),
            flags: vec![Vec::new(); n],
        }
    }

    /// Evaluates every candidate threshold from scratch.
    fn brute_force(s: &AttackScores, target: f64) -> f64 {
        let pos = s.members() as f64;
        let neg = (s.len() - s.members()) as f64;
        let mut best = 0.0f64;
        for &t in &s.scores {
            let fp = (0..s.len()).filter(|&i| !s.is_member[i] && s.scores[i] >= t).count() as f64;
            let tp = (0..s.len()).filter(|&i| s.is_member[i] && s.scores[i] >= t).count() as f64;
            if fp / neg <= target {
                best = best.max(tp / pos);
            }
        }
        best
    }

    #[test]
    fn hand_sweeps() {
        let r = roc_curve(&scores(&[5.0, 4.0, 3.0], &[2.0, 1.0])).unwrap();
        assert_eq!(tpr_at_fpr(&r, 0.0).unwrap(), 1.0);
        assert!(r.points.iter().any(|p| p.fpr == 0.0 && p.tpr == 1.0));
        assert_eq!(r.auc(), 1.0);
        let r = roc_curve(&scores(&[3.0, 2.0, 1.0], &[5.0, 4.0])).unwrap();
        assert_eq!(tpr_at_fpr(&r, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn all_ties_are_atomic() {
        let r = roc_curve(&scores(&[1.0, 1.0], &[1.0, 1.0, 1.0])).unwrap();
        let pts: Vec<(f64, f64)> = r.points.iter().map(|p| (p.fpr, p.tpr)).collect();
        assert_eq!(pts, vec![(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(r.auc(), 0.5);
    }

    #[test]
    fn small_targets_round_down_to_zero_false_positives() {
        let non: Vec<f64> = (0..500).map(|i| i as f64 / 1000.0).collect();
        let mut mem: Vec<f64> = (0..100).map(|i| 0.2 + i as f64 / 100.0).collect();
        mem.push(0.4985);
        let s = scores(&mem, &non);
        let r = roc_curve(&s).unwrap();
        assert_eq!(tpr_at_fpr(&r, 1e-3).unwrap(), tpr_at_fpr(&r, 0.0).unwrap());
        assert!(tpr_at_fpr(&r, 2e-3).unwrap() > tpr_at_fpr(&r, 0.0).unwrap());
    }

    #[test]
    fn identified_sets_follow_the_operating_point() {
        let s = scores(&[9.0, 8.0, 3.0, 1.0], &[7.0, 2.0]);
        let at0 = identified_members(&s, 0.0).unwrap();
        assert_eq!(at0.ids, vec!["c0", "c1"]);
        assert_eq!(at0.threshold, Some(8.0));
        let at_half = identified_members(&s, 0.5).unwrap();
        assert_eq!(at_half.ids, vec!["c0", "c1", "c2"]);
        assert_eq!(at_half.len() as f64, at_half.tpr * 4.0);
        let none = identified_members(&scores(&[1.0], &[2.0]), 0.0).unwrap();
        assert!(none.is_empty() && none.threshold.is_none());
        assert!(identified_members(&s, 1.5).is_err());
    }

    #[test]
    fn errors_and_baseline() {
        assert!(matches!(roc_curve(&scores(&[1.0], &[])), Err(EvalError::SingleClass)));
        assert!((baseline_tpr(859).unwrap() - 0.002328).abs() < 1e-6);
        assert_eq!(baseline_tpr(2).unwrap(), 1.0);
        assert!(baseline_tpr(0).is_err());
    }

    #[test]
    fn minority_tpr_reuses_the_full_threshold() {
        let s = scores(&[9.0, 8.0, 3.0, 1.0], &[7.0, 2.0]);
        let labels = [1, 0, 1, 1, 0, 0];
        assert_eq!(minority_tpr(&s, &labels, 0, 0.0).unwrap(), 1.0);
        assert!((minority_tpr(&s, &labels, 1, 0.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(matches!(minority_tpr(&s, &[1; 6], 0, 0.0), Err(EvalError::NoMinority)));
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            raw in prop::collection::vec((0u8..20, any::<bool>()), 2..120),
            target in 0.0f64..1.0,
        ) {
            let mem: Vec<f64> = raw.iter().filter(|r| r.1).map(|r| r.0 as f64).collect();
            let non: Vec<f64> = raw.iter().filter(|r| !r.1).map(|r| r.0 as f64).collect();
            prop_assume!(!mem.is_empty() && !non.is_empty());
            let s = scores(&mem, &non);
            let r = roc_curve(&s).unwrap();
            prop_assert_eq!(tpr_at_fpr(&r, target).unwrap(), brute_force(&s, target));
            prop_assert_eq!(tpr_at_fpr(&r, 0.0).unwrap(), brute_force(&s, 0.0));
            for w in r.points.windows(2) {
                prop_assert!(w[0].fpr <= w[1].fpr && w[0].tpr <= w[1].tpr);
            }
            let last = r.points.last().unwrap();
            prop_assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        }

        #[test]
        fn monotone_transforms_change_nothing(
            raw in prop::collection::vec((-5.0f64..5.0, any::<bool>()), 2..80),
            f1 in 0.0f64..0.5,
            df in 0.0f64..0.5,
        ) {
            let mem: Vec<f64> = raw.iter().filter(|r| r.1).map(|r| r.0).collect();
            let non: Vec<f64> = raw.iter().filter(|r| !r.1).map(|r| r.0).collect();
            prop_assume!(!mem.is_empty() && !non.is_empty());
            let a = scores(&mem, &non);
            let mut b = a.clone();
            b.scores.iter_mut().for_each(|s| *s = s.exp() * 3.0 + 1.0);
            let (ia, ib) = (identified_members(&a, f1).unwrap(), identified_members(&b, f1).unwrap());
            prop_assert_eq!(&ia.ids, &ib.ids);
            prop_assert_eq!(ia.tpr, ib.tpr);
            let wider = identified_members(&a, f1 + df).unwrap();
            prop_assert!(ia.ids.iter().all(|id| wider.ids.contains(id)));
            prop_assert!(wider.tpr >= ia.tpr);
        }
    }
}
