//! EER, ROC-AUC, thresholded confusion and DET export. Spoof is the
//! positive class; higher scores mean "more likely spoof".

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::Label;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    pub score: f64,
    pub label: Label,
    pub speaker_id: String,
    pub dataset_id: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreSet {
    pub records: Vec<ScoreRecord>,
}

impl ScoreSet {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (f64, Label)>) -> Self {
        let records = pairs
            .into_iter()
            .map(|(score, label)| ScoreRecord { score, label, speaker_id: String::new(), dataset_id: 0 })
            .collect();
        Self { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.records.iter().filter(|r| r.label == label).count()
    }

    pub fn map_scores(&self, f: impl Fn(f64) -> f64) -> Self {
        let records = self.records.iter().map(|r| ScoreRecord { score: f(r.score), ..r.clone() }).collect();
        Self { records }
    }

    fn check(&self) -> Result<(usize, usize)> {
        if self.records.iter().any(|r| !r.score.is_finite()) {
            return Err(Error::DegenerateScores);
        }
        let spoof = self.count(Label::Spoof);
        let bona = self.len() - spoof;
        if spoof == 0 || bona == 0 {
            return Err(Error::DegenerateScores);
        }
        Ok((bona, spoof))
    }
}

/// Rank-sum AUC with average ranks for ties.
pub fn roc_auc(s: &ScoreSet) -> Result<f64> {
    let (n_bona, n_spoof) = s.check()?;
    let mut idx: Vec<usize> = (0..s.len()).collect();
    idx.sort_by(|&a, &b| s.records[a].score.total_cmp(&s.records[b].score));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && s.records[idx[j + 1]].score == s.records[idx[i]].score {
            j += 1;
        }
        // ranks i+1 ..= j+1
        let avg = (i + j + 2) as f64 / 2.0;
        rank_sum += avg * idx[i..=j].iter().filter(|&&k| s.records[k].label.is_spoof()).count() as f64;
        i = j + 1;
    }
    let ns = n_spoof as f64;
    Ok((rank_sum - ns * (ns + 1.0) / 2.0) / (ns * n_bona as f64))
}

/// `(threshold, FAR, FRR)` over the sweep grid, thresholds ascending:
/// `min - 1`, every midpoint between distinct scores, `max + 1`.
/// A sample is called spoof when `score >= threshold`.
fn sweep(s: &ScoreSet, n_bona: usize, n_spoof: usize) -> Vec<(f64, f64, f64)> {
    let mut sorted: Vec<(f64, bool)> = s.records.iter().map(|r| (r.score, r.label.is_spoof())).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (nb, ns) = (n_bona as f64, n_spoof as f64);
    // counts of scores strictly below the running threshold
    let (mut spoof_below, mut bona_below) = (0usize, 0usize);
    let mut out = Vec::with_capacity(sorted.len() + 1);
    out.push((sorted[0].0 - 1.0, 0.0, 1.0));
    let mut i = 0;
    while i < sorted.len() {
        let v = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == v {
            if sorted[i].1 {
                spoof_below += 1;
            } else {
                bona_below += 1;
            }
            i += 1;
        }
        let t = if i < sorted.len() { 0.5 * (v + sorted[i].0) } else { v + 1.0 };
        out.push((t, spoof_below as f64 / ns, (nb - bona_below as f64) / nb));
    }
    out
}

/// Equal error rate and its threshold, interpolating linearly between the
/// two bracketing sweep thresholds.
pub fn eer(s: &ScoreSet) -> Result<(f64, f64)> {
    let (n_bona, n_spoof) = s.check()?;
    Ok(eer_from_sweep(&sweep(s, n_bona, n_spoof)))
}

fn eer_from_sweep(points: &[(f64, f64, f64)]) -> (f64, f64) {
    let i = points.iter().position(|p| p.1 - p.2 >= 0.0).expect("last point has FAR - FRR = 1");
    let (t1, far1, frr1) = points[i];
    let d1 = far1 - frr1;
    if d1 == 0.0 || i == 0 {
        return ((far1 + frr1) / 2.0, t1);
    }
    let (t0, far0, frr0) = points[i - 1];
    let d0 = far0 - frr0;
    let a = -d0 / (d1 - d0);
    let far = far0 + a * (far1 - far0);
    let frr = frr0 + a * (frr1 - frr0);
    ((far + frr) / 2.0, t0 + a * (t1 - t0))
}

/// DET staircase as `(FAR, FRR)` pairs ordered by descending threshold:
/// from `(1, 0)` to `(0, 1)`. Along the sequence FAR never increases and FRR
/// never decreases.
pub fn det_curve(s: &ScoreSet) -> Result<Vec<(f64, f64)>> {
    let (n_bona, n_spoof) = s.check()?;
    Ok(sweep(s, n_bona, n_spoof).into_iter().rev().map(|(_, far, frr)| (far, frr)).collect())
}

/// Trapezoidal area under the ROC implied by a DET curve
/// (TPR = 1 - FAR against FPR = FRR).
pub fn det_area(points: &[(f64, f64)]) -> f64 {
    points.windows(2).map(|w| (w[1].1 - w[0].1) * ((1.0 - w[0].0) + (1.0 - w[1].0)) / 2.0).sum()
}

pub fn det_to_csv(points: &[(f64, f64)]) -> String {
    let mut out = String::from("far,frr\n");
    for (far, frr) in points {
        let _ = writeln!(out, "{far},{frr}");
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ClassMetrics {
    /// Zero denominators give zero rather than NaN.
    fn from_counts(hit: usize, predicted: usize, actual: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(hit, predicted);
        let recall = ratio(hit, actual);
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        Self { precision, recall, f1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub auc: f64,
    pub eer: f64,
    pub eer_threshold: f64,
    pub threshold: f64,
    pub confusion: Confusion,
    pub bona_fide: ClassMetrics,
    pub spoof: ClassMetrics,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Full report; samples with `score >= threshold` are called spoof.
pub fn evaluate(s: &ScoreSet, threshold: f64) -> Result<EvalReport> {
    let auc = roc_auc(s)?;
    let (eer, eer_threshold) = eer(s)?;
    let mut c = Confusion::default();
    for r in &s.records {
        match (r.label.is_spoof(), r.score >= threshold) {
            (true, true) => c.tp += 1,
            (true, false) => c.fn_ += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(EvalReport {
        accuracy: (c.tp + c.tn) as f64 / c.total() as f64,
        auc,
        eer,
        eer_threshold,
        threshold,
        confusion: c,
        spoof: ClassMetrics::from_counts(c.tp, c.tp + c.fp, c.tp + c.fn_),
        bona_fide: ClassMetrics::from_counts(c.tn, c.tn + c.fn_, c.tn + c.fp),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Label::{BonaFide as B, Spoof as S};

    fn set(bona: &[f64], spoof: &[f64]) -> ScoreSet {
        ScoreSet::from_pairs(bona.iter().map(|&x| (x, B)).chain(spoof.iter().map(|&x| (x, S))))
    }

    fn pair_count_auc(s: &ScoreSet) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for a in s.records.iter().filter(|r| r.label == S) {
            for b in s.records.iter().filter(|r| r.label == B) {
                den += 1.0;
                num += if a.score > b.score { 1.0 } else if a.score == b.score { 0.5 } else { 0.0 };
            }
        }
        num / den
    }

    fn brute_eer(s: &ScoreSet) -> f64 {
        let mut u: Vec<f64> = s.records.iter().map(|r| r.score).collect();
        u.sort_by(f64::total_cmp);
        u.dedup();
        let mut ts = vec![u[0] - 1.0];
        ts.extend(u.windows(2).map(|w| (w[0] + w[1]) / 2.0));
        ts.push(u[u.len() - 1] + 1.0);
        let rates = |t: f64| {
            let far = s.records.iter().filter(|r| r.label == S && r.score < t).count() as f64
                / s.records.iter().filter(|r| r.label == S).count() as f64;
            let frr = s.records.iter().filter(|r| r.label == B && r.score >= t).count() as f64
                / s.records.iter().filter(|r| r.label == B).count() as f64;
            (far, frr)
        };
        for k in 0..ts.len() {
            let (far, frr) = rates(ts[k]);
            if far >= frr {
                if far == frr || k == 0 {
                    return far;
                }
                let (pfar, pfrr) = rates(ts[k - 1]);
                let a = (pfrr - pfar) / ((far - frr) - (pfar - pfrr));
                return (pfar + a * (far - pfar) + pfrr + a * (frr - pfrr)) / 2.0;
            }
        }
        unreachable!()
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&set(&[0.1, 0.2], &[0.8, 0.9])).unwrap(), 1.0);
        assert_eq!(roc_auc(&set(&[0.5, 0.5], &[0.5, 0.5])).unwrap(), 0.5);
        assert_eq!(roc_auc(&set(&[0.1, 0.4], &[0.3, 0.9])).unwrap(), 0.75);
    }

    #[test]
    fn single_class_is_degenerate() {
        assert!(matches!(roc_auc(&set(&[0.1, 0.2], &[])), Err(Error::DegenerateScores)));
        assert!(matches!(eer(&set(&[], &[0.3])), Err(Error::DegenerateScores)));
        assert!(matches!(eer(&set(&[f64::NAN], &[0.3])), Err(Error::DegenerateScores)));
    }

    #[test]
    fn eer_examples() {
        assert_eq!(eer(&set(&[0.1, 0.2], &[0.8, 0.9])).unwrap().0, 0.0);
        assert_eq!(eer(&set(&[0.6], &[0.4])).unwrap().0, 1.0);
        // brute-force sweep with interpolation gives 1/3 at threshold 0.35
        let (e, t) = eer(&set(&[0.1, 0.3, 0.5], &[0.2, 0.4, 0.6])).unwrap();
        let oracle = brute_eer(&set(&[0.1, 0.3, 0.5], &[0.2, 0.4, 0.6]));
        assert!((e - oracle).abs() < 1e-12);
        assert!((e - 1.0 / 3.0).abs() < 1e-12, "{e}");
        assert!((t - 0.35).abs() < 1e-12, "{t}");
    }

    #[test]
    fn interpolated_crossing() {
        // uneven class sizes force interpolation
        let s = set(&[0.1, 0.3, 0.35], &[0.2, 0.4]);
        let (e, _) = eer(&s).unwrap();
        assert!((e - brute_eer(&s)).abs() < 1e-12);
        // t=0.325: FAR 1/2, FRR 1/3 and the previous t=0.25: FAR 1/2, FRR 2/3
        // cross at a=1/2 → (1/2 + 1/2)/2
        assert!((e - 0.5).abs() < 1e-12, "{e}");
    }

    #[test]
    fn evaluate_examples() {
        let r = evaluate(&set(&[0.1, 0.2], &[0.8, 0.9]), 0.5).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.spoof.f1, 1.0);
        assert_eq!(r.bona_fide.f1, 1.0);

        let r = evaluate(&set(&[0.7, 0.8], &[0.6, 0.9]), 0.5).unwrap();
        assert_eq!(r.accuracy, 0.5);
        assert_eq!(r.bona_fide.recall, 0.0);
        assert_eq!(r.bona_fide.precision, 0.0);
    }

    #[test]
    fn hand_tallied_confusion() {
        // bona: 0.1 TN, 0.4 TN, 0.55 FP, 0.7 FP ; spoof: 0.2 FN, 0.5 TP, 0.6 TP, 0.95 TP
        let r = evaluate(&set(&[0.1, 0.4, 0.55, 0.7], &[0.2, 0.5, 0.6, 0.95]), 0.5).unwrap();
        assert_eq!(r.confusion, Confusion { tp: 3, fp: 2, tn: 2, fn_: 1 });
        assert_eq!(r.accuracy, 5.0 / 8.0);
        assert_eq!(r.spoof.precision, 3.0 / 5.0);
        assert_eq!(r.spoof.recall, 3.0 / 4.0);
        assert!((r.spoof.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.bona_fide.precision, 2.0 / 3.0);
        assert_eq!(r.bona_fide.recall, 2.0 / 4.0);
        assert!((r.bona_fide.f1 - 4.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn report_json_keys() {
        let json = evaluate(&set(&[0.1], &[0.9]), 0.5).unwrap().to_json();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        for key in ["accuracy", "auc", "eer", "eer_threshold", "confusion", "bona_fide", "spoof"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert!(v["confusion"].get("fn").is_some());
    }

    #[test]
    fn det_endpoints_and_separation() {
        let d = det_curve(&set(&[0.1, 0.2], &[0.8, 0.9])).unwrap();
        assert_eq!(d.first(), Some(&(1.0, 0.0)));
        assert_eq!(d.last(), Some(&(0.0, 1.0)));
        assert!(d.contains(&(0.0, 0.0)));
        assert!(det_to_csv(&d).starts_with("far,frr\n1,0\n"));
    }

    fn score_sets() -> impl Strategy<Value = ScoreSet> {
        (1usize..25, 1usize..25).prop_flat_map(|(nb, ns)| {
            // coarse grid makes ties common
            (proptest::collection::vec(0u8..20, nb), proptest::collection::vec(0u8..20, ns)).prop_map(|(b, s)| {
                let f = |v: &Vec<u8>| v.iter().map(|&x| x as f64 / 19.0).collect::<Vec<_>>();
                set(&f(&b), &f(&s))
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn auc_matches_pair_count(s in score_sets()) {
            prop_assert!((roc_auc(&s).unwrap() - pair_count_auc(&s)).abs() <= 1e-9);
        }

        #[test]
        fn eer_matches_brute_force(s in score_sets()) {
            let (e, _) = eer(&s).unwrap();
            prop_assert!((e - brute_eer(&s)).abs() <= 1e-9);
            prop_assert!((0.0..=1.0).contains(&e));
        }

        #[test]
        fn monotone_transforms_preserve_auc_and_eer(s in score_sets()) {
            let auc = roc_auc(&s).unwrap();
            let e = eer(&s).unwrap().0;
            for t in [s.map_scores(f64::exp), s.map_scores(|x| 3.0 * x - 7.0)] {
                prop_assert!((roc_auc(&t).unwrap() - auc).abs() <= 1e-9);
                prop_assert!((eer(&t).unwrap().0 - e).abs() <= 1e-9);
            }
        }

        #[test]
        fn eer_flip_symmetry(s in score_sets()) {
            let flipped = ScoreSet::from_pairs(s.records.iter().map(|r| (1.0 - r.score, r.label.flipped())));
            prop_assert!((eer(&flipped).unwrap().0 - eer(&s).unwrap().0).abs() <= 1e-9);
        }

        #[test]
        fn det_is_monotone_and_integrates_to_auc(s in score_sets()) {
            let d = det_curve(&s).unwrap();
            prop_assert_eq!(d[0], (1.0, 0.0));
            prop_assert_eq!(d[d.len() - 1], (0.0, 1.0));
            for w in d.windows(2) {
                prop_assert!(w[1].0 <= w[0].0 && w[1].1 >= w[0].1);
            }
            prop_assert!((det_area(&d) - roc_auc(&s).unwrap()).abs() <= 1e-9);
        }

        #[test]
        fn accuracy_matches_confusion(s in score_sets(), t in 0.0f64..1.0) {
            let r = evaluate(&s, t).unwrap();
            let c = r.confusion;
            prop_assert_eq!(c.total(), s.len());
            prop_assert_eq!(r.accuracy, (c.tp + c.tn) as f64 / s.len() as f64);
        }
    }
}
