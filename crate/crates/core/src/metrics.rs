//! Classification and biometric verification metrics: confusion matrix,
//! precision/recall/F1, FAR/FRR, EER, and one-vs-all ROC/AUC.
//!
//! Acceptance convention throughout: a trial is accepted iff its score is
//! greater than or equal to the threshold.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::train::Prediction;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("score lists must be nonempty")]
    EmptyScores,
    #[error("label {label} out of range for {class_count} classes")]
    LabelOutOfRange { label: usize, class_count: usize },
}

/// Genuine and imposter trial scores (softmax probabilities in [0, 1]).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScoreSet {
    pub genuine: Vec<f64>,
    pub imposter: Vec<f64>,
}

/// Row-major M×M counts; rows are true labels, columns predictions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub class_count: usize,
    pub counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn at(&self, true_label: usize, predicted: usize) -> u64 {
        self.counts[true_label * self.class_count + predicted]
    }

    /// Row-stochastic normalization; rows with zero support stay all-zero.
    pub fn normalized(&self) -> Vec<f64> {
        let m = self.class_count;
        let mut out = vec![0.0; m * m];
        for r in 0..m {
            let row_sum: u64 = self.counts[r * m..(r + 1) * m].iter().sum();
            if row_sum > 0 {
                for c in 0..m {
                    out[r * m + c] = self.counts[r * m + c] as f64 / row_sum as f64;
                }
            }
        }
        out
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

pub fn confusion(
    pairs: &[(usize, usize)],
    class_count: usize,
) -> Result<ConfusionMatrix, MetricsError> {
    let mut counts = vec![0u64; class_count * class_count];
    for &(t, p) in pairs {
        for label in [t, p] {
            if label >= class_count {
                return Err(MetricsError::LabelOutOfRange { label, class_count });
            }
        }
        counts[t * class_count + p] += 1;
    }
    Ok(ConfusionMatrix { class_count, counts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

/// Per-class and macro precision/recall/F1. Zero denominators yield zero
/// (a class never predicted has precision 0, not an error).
pub fn classification_report(cm: &ConfusionMatrix) -> ClassificationReport {
    let m = cm.class_count;
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let mut per_class = Vec::with_capacity(m);
    for c in 0..m {
        let tp = cm.at(c, c);
        let row: u64 = (0..m).map(|p| cm.at(c, p)).sum();
        let col: u64 = (0..m).map(|t| cm.at(t, c)).sum();
        let precision = ratio(tp, col);
        let recall = ratio(tp, row);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        per_class.push(ClassMetrics { precision, recall, f1, support: row });
    }
    let mean = |f: fn(&ClassMetrics) -> f64, v: &[ClassMetrics]| {
        v.iter().map(f).sum::<f64>() / v.len() as f64
    };
    let trace: u64 = (0..m).map(|c| cm.at(c, c)).sum();
    ClassificationReport {
        accuracy: ratio(trace, cm.total()),
        macro_precision: mean(|c| c.precision, &per_class),
        macro_recall: mean(|c| c.recall, &per_class),
        macro_f1: mean(|c| c.f1, &per_class),
        per_class,
    }
}

/// FAR = imposters accepted, FRR = genuines rejected, at `threshold`.
pub fn far_frr(scores: &ScoreSet, threshold: f64) -> Result<(f64, f64), MetricsError> {
    if scores.genuine.is_empty() || scores.imposter.is_empty() {
        return Err(MetricsError::EmptyScores);
    }
    let far = scores.imposter.iter().filter(|&&s| s >= threshold).count() as f64
        / scores.imposter.len() as f64;
    let frr = scores.genuine.iter().filter(|&&s| s < threshold).count() as f64
        / scores.genuine.len() as f64;
    Ok((far, frr))
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

/// FAR via sorted imposter scores: fraction at or above the threshold.
fn far_sorted(imposter: &[f64], threshold: f64) -> f64 {
    let below = imposter.partition_point(|&s| s < threshold);
    (imposter.len() - below) as f64 / imposter.len() as f64
}

fn frr_sorted(genuine: &[f64], threshold: f64) -> f64 {
    let below = genuine.partition_point(|&s| s < threshold);
    below as f64 / genuine.len() as f64
}

/// Candidate thresholds: every observed score, the midpoints between
/// consecutive distinct scores, and one point above the maximum.
fn candidate_thresholds(scores: &ScoreSet) -> Vec<f64> {
    let mut all: Vec<f64> = scores.genuine.iter().chain(&scores.imposter).cloned().collect();
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    all.dedup();
    let mut cands = Vec::with_capacity(2 * all.len() + 1);
    for (i, &s) in all.iter().enumerate() {
        cands.push(s);
        if i + 1 < all.len() {
            cands.push(0.5 * (s + all[i + 1]));
        }
    }
    cands.push(all[all.len() - 1] + 1.0);
    cands
}

/// Equal error rate and its threshold. FAR−FRR is non-increasing in the
/// threshold, so the sweep either hits an exact crossing at a candidate or
/// brackets it; in the latter case both rates are linearly interpolated
/// between the bracketing candidates and the common value is reported.
pub fn eer(scores: &ScoreSet) -> Result<(f64, f64), MetricsError> {
    if scores.genuine.is_empty() || scores.imposter.is_empty() {
        return Err(MetricsError::EmptyScores);
    }
    let genuine = sorted(&scores.genuine);
    let imposter = sorted(&scores.imposter);
    let mut prev: Option<(f64, f64, f64)> = None; // (threshold, far, frr)
    for theta in candidate_thresholds(scores) {
        let far = far_sorted(&imposter, theta);
        let frr = frr_sorted(&genuine, theta);
        let d = far - frr;
        if d.abs() < 1e-15 {
            return Ok((0.5 * (far + frr), theta));
        }
        if let Some((t1, f1, r1)) = prev {
            let d1 = f1 - r1;
            if d1 > 0.0 && d < 0.0 {
                let t = d1 / (d1 - d);
                let eer = f1 + t * (far - f1);
                return Ok((eer, t1 + t * (theta - t1)));
            }
        }
        prev = Some((theta, far, frr));
    }
    unreachable!("far - frr runs from +1 to -1 over the candidate sweep");
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub far: f64,
    pub tpr: f64,
}

/// ROC curve (descending threshold sweep) and its trapezoidal AUC, which
/// equals the Mann-Whitney statistic P(genuine > imposter) + ½·P(tie).
pub fn roc_auc(scores: &ScoreSet) -> Result<(f64, Vec<RocPoint>), MetricsError> {
    if scores.genuine.is_empty() || scores.imposter.is_empty() {
        return Err(MetricsError::EmptyScores);
    }
    let genuine = sorted(&scores.genuine);
    let imposter = sorted(&scores.imposter);
    let mut uniq: Vec<f64> = genuine.iter().chain(&imposter).cloned().collect();
    uniq.sort_by(|a, b| a.partial_cmp(b).unwrap());
    uniq.dedup();

    let mut curve = Vec::with_capacity(uniq.len() + 1);
    let top = uniq[uniq.len() - 1] + 1.0;
    curve.push(RocPoint { threshold: top, far: 0.0, tpr: 0.0 });
    for &s in uniq.iter().rev() {
        curve.push(RocPoint {
            threshold: s,
            far: far_sorted(&imposter, s),
            tpr: 1.0 - frr_sorted(&genuine, s),
        });
    }
    let mut auc = 0.0;
    for pair in curve.windows(2) {
        auc += (pair[1].far - pair[0].far) * (pair[0].tpr + pair[1].tpr) * 0.5;
    }
    Ok((auc, curve))
}

/// Pooled one-vs-all scores plus the per-class score sets.
#[derive(Debug, Clone, Default)]
pub struct ScoreCollection {
    pub pooled: ScoreSet,
    pub per_class: Vec<ScoreSet>,
}

/// One-vs-all trial protocol: every window contributes its true-class
/// probability as a genuine trial and each other class's probability as an
/// imposter trial.
pub fn build_scores(predictions: &[Prediction], class_count: usize) -> ScoreCollection {
    let mut pooled = ScoreSet::default();
    let mut per_class = vec![ScoreSet::default(); class_count];
    for p in predictions {
        for (c, &prob) in p.probs.iter().enumerate() {
            if c == p.label {
                pooled.genuine.push(prob);
                per_class[c].genuine.push(prob);
            } else {
                pooled.imposter.push(prob);
                per_class[c].imposter.push(prob);
            }
        }
    }
    ScoreCollection { pooled, per_class }
}

/// Everything the evaluation CLI reports for one model/dataset pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    pub operating_threshold: f64,
    pub far: f64,
    pub frr: f64,
    pub eer: f64,
    pub eer_threshold: f64,
    pub per_class_auc: Vec<f64>,
}

pub fn compute_report(
    predictions: &[Prediction],
    class_count: usize,
    operating_threshold: f64,
) -> Result<MetricsReport, MetricsError> {
    let pairs: Vec<(usize, usize)> = predictions.iter().map(|p| (p.label, p.predicted)).collect();
    let cm = confusion(&pairs, class_count)?;
    let report = classification_report(&cm);
    let scores = build_scores(predictions, class_count);
    let (far, frr) = far_frr(&scores.pooled, operating_threshold)?;
    let (eer_value, eer_threshold) = eer(&scores.pooled)?;
    let per_class_auc = scores
        .per_class
        .iter()
        .map(|s| roc_auc(s).map(|(auc, _)| auc))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MetricsReport {
        accuracy: report.accuracy,
        macro_precision: report.macro_precision,
        macro_recall: report.macro_recall,
        macro_f1: report.macro_f1,
        per_class: report.per_class,
        operating_threshold,
        far,
        frr,
        eer: eer_value,
        eer_threshold,
        per_class_auc,
    })
}

/// Per-class ROC points as plot-ready CSV (`threshold,far,tpr`).
pub fn roc_curve_csv(scores: &ScoreSet) -> Result<String, MetricsError> {
    let (_, curve) = roc_auc(scores)?;
    let mut out = String::from("threshold,far,tpr\n");
    for p in curve {
        out.push_str(&format!("{},{},{}\n", p.threshold, p.far, p.tpr));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    // -- independent oracles --------------------------------------------

    /// Brute-force EER over the 2N+1 rank thresholds (below min, between
    /// each consecutive pair, above max), with the same crossing rule.
    fn eer_brute_force(scores: &ScoreSet) -> f64 {
        let mut all: Vec<f64> = scores.genuine.iter().chain(&scores.imposter).cloned().collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut cands = vec![all[0] - 1.0];
        for pair in all.windows(2) {
            cands.push(0.5 * (pair[0] + pair[1]));
        }
        cands.push(all[all.len() - 1] + 1.0);

        let rates = |theta: f64| {
            let far = scores.imposter.iter().filter(|&&s| s >= theta).count() as f64
                / scores.imposter.len() as f64;
            let frr = scores.genuine.iter().filter(|&&s| s < theta).count() as f64
                / scores.genuine.len() as f64;
            (far, frr)
        };
        let mut prev: Option<(f64, f64)> = None;
        for &theta in &cands {
            let (far, frr) = rates(theta);
            if (far - frr).abs() < 1e-15 {
                return far;
            }
            if let Some((f1, r1)) = prev {
                if f1 - r1 > 0.0 && far - frr < 0.0 {
                    let t = (f1 - r1) / ((f1 - r1) - (far - frr));
                    return f1 + t * (far - f1);
                }
            }
            prev = Some((far, frr));
        }
        unreachable!()
    }

    /// Pairwise Mann-Whitney statistic with half-credit ties.
    fn auc_pairwise(scores: &ScoreSet) -> f64 {
        let mut wins = 0.0;
        for &g in &scores.genuine {
            for &i in &scores.imposter {
                if g > i {
                    wins += 1.0;
                } else if g == i {
                    wins += 0.5;
                }
            }
        }
        wins / (scores.genuine.len() * scores.imposter.len()) as f64
    }

    fn random_scores(rng: &mut ChaCha20Rng, n_gen: usize, n_imp: usize) -> ScoreSet {
        // genuine biased high, imposter low, with deliberate tie mass
        let quantize = |v: f64| (v * 20.0).round() / 20.0;
        ScoreSet {
            genuine: (0..n_gen).map(|_| quantize(rng.random_range(0.2..1.0))).collect(),
            imposter: (0..n_imp).map(|_| quantize(rng.random_range(0.0..0.8))).collect(),
        }
    }

    // -- confusion / report ---------------------------------------------

    #[test]
    fn confusion_all_correct_is_diagonal() {
        let pairs: Vec<(usize, usize)> = (0..9).map(|i| (i % 3, i % 3)).collect();
        let cm = confusion(&pairs, 3).unwrap();
        let norm = cm.normalized();
        for r in 0..3 {
            for c in 0..3 {
                assert_eq!(norm[r * 3 + c], if r == c { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn confusion_single_pair() {
        let cm = confusion(&[(1, 2)], 3).unwrap();
        assert_eq!(cm.at(1, 2), 1);
        assert_eq!(cm.total(), 1);
        let norm = cm.normalized();
        assert_eq!(norm[1 * 3 + 2], 1.0);
        assert!(norm[..3].iter().all(|&v| v == 0.0), "zero-support row stays zero");
    }

    #[test]
    fn confusion_matches_hand_tally() {
        let pairs = [(0, 0), (0, 1), (1, 1), (1, 1), (2, 0), (2, 2)];
        let cm = confusion(&pairs, 3).unwrap();
        assert_eq!(cm.at(0, 0), 1);
        assert_eq!(cm.at(0, 1), 1);
        assert_eq!(cm.at(1, 1), 2);
        assert_eq!(cm.at(2, 0), 1);
        assert_eq!(cm.at(2, 2), 1);
        assert_eq!(cm.total(), 6);
    }

    #[test]
    fn confusion_rejects_out_of_range() {
        assert!(matches!(
            confusion(&[(0, 5)], 3),
            Err(MetricsError::LabelOutOfRange { label: 5, .. })
        ));
    }

    #[test]
    fn report_perfect_matrix() {
        let cm = confusion(&[(0, 0), (1, 1), (2, 2)], 3).unwrap();
        let r = classification_report(&cm);
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.macro_f1, 1.0);
        assert!(r.per_class.iter().all(|c| c.precision == 1.0 && c.recall == 1.0));
    }

    #[test]
    fn report_never_predicted_class_has_zero_precision() {
        // class 2 exists but is never predicted
        let cm = confusion(&[(0, 0), (1, 1), (2, 0)], 3).unwrap();
        let r = classification_report(&cm);
        assert_eq!(r.per_class[2].precision, 0.0);
        assert_eq!(r.per_class[2].recall, 0.0);
        assert_eq!(r.per_class[2].f1, 0.0);
    }

    #[test]
    fn report_matches_hand_computation() {
        // rows true, cols predicted:
        //      p0 p1 p2
        // t0 [  2  1  0 ]
        // t1 [  0  3  1 ]
        // t2 [  1  0  2 ]
        let pairs = [
            (0, 0), (0, 0), (0, 1),
            (1, 1), (1, 1), (1, 1), (1, 2),
            (2, 0), (2, 2), (2, 2),
        ];
        let cm = confusion(&pairs, 3).unwrap();
        let r = classification_report(&cm);
        let p = [2.0 / 3.0, 3.0 / 4.0, 2.0 / 3.0];
        let rec = [2.0 / 3.0, 3.0 / 4.0, 2.0 / 3.0];
        for c in 0..3 {
            assert!((r.per_class[c].precision - p[c]).abs() < 1e-12);
            assert!((r.per_class[c].recall - rec[c]).abs() < 1e-12);
        }
        assert!((r.accuracy - 0.7).abs() < 1e-12);
    }

    #[test]
    fn macro_f1_is_invariant_under_relabeling() {
        let pairs = [(0, 0), (0, 1), (1, 1), (1, 1), (2, 0), (2, 2), (2, 1)];
        let cm = classification_report(&confusion(&pairs, 3).unwrap());
        // permute labels 0->2, 1->0, 2->1
        let perm = [2usize, 0, 1];
        let permuted: Vec<(usize, usize)> = pairs.iter().map(|&(t, p)| (perm[t], perm[p])).collect();
        let cm2 = classification_report(&confusion(&permuted, 3).unwrap());
        assert!((cm.macro_f1 - cm2.macro_f1).abs() < 1e-12);
        assert!((cm.macro_precision - cm2.macro_precision).abs() < 1e-12);
    }

    // -- far/frr/eer/auc --------------------------------------------------

    fn demo_scores() -> ScoreSet {
        ScoreSet { genuine: vec![0.9, 0.8], imposter: vec![0.3, 0.7] }
    }

    #[test]
    fn far_frr_boundaries() {
        let s = demo_scores();
        assert_eq!(far_frr(&s, 0.0).unwrap(), (1.0, 0.0));
        assert_eq!(far_frr(&s, 0.95).unwrap(), (0.0, 1.0));
    }

    #[test]
    fn far_frr_direct_count() {
        let s = demo_scores();
        // at 0.75 every genuine is at or above, every imposter below
        assert_eq!(far_frr(&s, 0.75).unwrap(), (0.0, 0.0));
        // at 0.85 genuine 0.8 is rejected
        assert_eq!(far_frr(&s, 0.85).unwrap(), (0.0, 0.5));
        // at 0.5 imposter 0.7 is accepted
        assert_eq!(far_frr(&s, 0.5).unwrap(), (0.5, 0.0));
    }

    #[test]
    fn far_frr_empty_is_error() {
        let s = ScoreSet { genuine: vec![], imposter: vec![0.1] };
        assert!(matches!(far_frr(&s, 0.5), Err(MetricsError::EmptyScores)));
    }

    #[test]
    fn far_frr_monotone_in_threshold() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let s = random_scores(&mut rng, 60, 80);
        let mut prev_far = 1.1;
        let mut prev_frr = -0.1;
        for i in 0..=100 {
            let theta = i as f64 / 100.0;
            let (far, frr) = far_frr(&s, theta).unwrap();
            assert!(far <= prev_far + 1e-15);
            assert!(frr >= prev_frr - 1e-15);
            prev_far = far;
            prev_frr = frr;
        }
    }

    #[test]
    fn eer_perfect_separation_is_zero() {
        let s = ScoreSet { genuine: vec![0.8, 0.9, 0.95], imposter: vec![0.1, 0.2, 0.3] };
        let (eer_value, theta) = eer(&s).unwrap();
        assert_eq!(eer_value, 0.0);
        assert!(theta > 0.3 && theta <= 0.8);
    }

    #[test]
    fn eer_identical_distributions_is_half() {
        let v = vec![0.2, 0.4, 0.6, 0.8];
        let s = ScoreSet { genuine: v.clone(), imposter: v };
        let (eer_value, _) = eer(&s).unwrap();
        assert!((eer_value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn eer_matches_brute_force_sweep() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for case in 0..40 {
            let s = random_scores(&mut rng, 50, 50);
            let (fast, _) = eer(&s).unwrap();
            let brute = eer_brute_force(&s);
            assert!(
                (fast - brute).abs() < 1e-9,
                "case {case}: {fast} vs brute {brute}"
            );
        }
    }

    #[test]
    fn eer_threshold_has_equal_rates_under_interpolation() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let s = random_scores(&mut rng, 120, 90);
        let (eer_value, _) = eer(&s).unwrap();
        assert!((0.0..=0.5 + 1e-12).contains(&eer_value));
    }

    #[test]
    fn auc_perfect_separation_is_one() {
        let s = ScoreSet { genuine: vec![0.8, 0.9], imposter: vec![0.1, 0.2] };
        let (auc, curve) = roc_auc(&s).unwrap();
        assert_eq!(auc, 1.0);
        assert_eq!(curve.first().map(|p| (p.far, p.tpr)), Some((0.0, 0.0)));
        assert_eq!(curve.last().map(|p| (p.far, p.tpr)), Some((1.0, 1.0)));
    }

    #[test]
    fn auc_identical_distributions_is_half() {
        let v = vec![0.3, 0.5, 0.7];
        let s = ScoreSet { genuine: v.clone(), imposter: v };
        let (auc, _) = roc_auc(&s).unwrap();
        assert!((auc - 0.5).abs() < 1e-12);
    }

    #[test]
    fn auc_equals_pairwise_mann_whitney() {
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        for _ in 0..40 {
            let s = random_scores(&mut rng, 20, 20);
            let (auc, _) = roc_auc(&s).unwrap();
            let mw = auc_pairwise(&s);
            assert!((auc - mw).abs() < 1e-9, "{auc} vs {mw}");
        }
    }

    // -- score building ----------------------------------------------------

    fn pred(label: usize, probs: Vec<f64>) -> Prediction {
        let predicted = crate::train::argmax(&probs);
        Prediction { label, predicted, probs }
    }

    #[test]
    fn build_scores_counts() {
        let preds = vec![pred(0, vec![0.7, 0.3])];
        let sc = build_scores(&preds, 2);
        assert_eq!(sc.pooled.genuine.len(), 1);
        assert_eq!(sc.pooled.imposter.len(), 1);

        let preds: Vec<Prediction> =
            (0..6).map(|i| pred(i % 3, vec![0.5, 0.25, 0.25])).collect();
        let sc = build_scores(&preds, 3);
        assert_eq!(sc.pooled.genuine.len(), 6);
        assert_eq!(sc.pooled.imposter.len(), 12);
    }

    #[test]
    fn build_scores_matches_manual_enumeration() {
        let preds = vec![
            pred(0, vec![0.6, 0.3, 0.1]),
            pred(1, vec![0.2, 0.5, 0.3]),
            pred(2, vec![0.1, 0.1, 0.8]),
        ];
        let sc = build_scores(&preds, 3);
        assert_eq!(sc.pooled.genuine, vec![0.6, 0.5, 0.8]);
        assert_eq!(sc.pooled.imposter, vec![0.3, 0.1, 0.2, 0.3, 0.1, 0.1]);
        assert_eq!(sc.per_class[0].genuine, vec![0.6]);
        assert_eq!(sc.per_class[0].imposter, vec![0.2, 0.1]);
        assert_eq!(sc.per_class[2].genuine, vec![0.8]);
        assert_eq!(sc.per_class[2].imposter, vec![0.1, 0.3]);
    }

    #[test]
    fn full_report_assembles() {
        let preds = vec![
            pred(0, vec![0.9, 0.05, 0.05]),
            pred(1, vec![0.1, 0.8, 0.1]),
            pred(2, vec![0.2, 0.2, 0.6]),
            pred(0, vec![0.4, 0.5, 0.1]),
        ];
        let report = compute_report(&preds, 3, 0.8).unwrap();
        assert!((report.accuracy - 0.75).abs() < 1e-12);
        assert_eq!(report.per_class_auc.len(), 3);
        assert!(report.eer >= 0.0 && report.eer <= 0.5);
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("macro_f1"));
    }
}
