//! Thresholded classification metrics and rank-based ROC-AUC.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            (self.tp + self.tn) as f64 / self.total() as f64
        }
    }
}

fn check_inputs(scores: &[f64], labels: &[u8]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::shape(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(bad) = labels.iter().find(|&&y| y > 1) {
        return Err(Error::argument(format!("label {bad} is not 0 or 1")));
    }
    if let Some(bad) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::argument(format!("score {bad} is not a number")));
    }
    Ok(())
}

/// Predicts positive iff `score ≥ threshold`.
pub fn confusion_at_threshold(scores: &[f64], labels: &[u8], threshold: f64) -> Result<ConfusionMatrix> {
    check_inputs(scores, labels)?;
    let mut cm = ConfusionMatrix::default();
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y == 1) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fp += 1,
            (false, false) => cm.tn += 1,
            (false, true) => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// No positive predictions: precision reported as 0.
    pub precision_undefined: bool,
    /// No positive labels: recall reported as 0.
    pub recall_undefined: bool,
}

pub fn precision_recall_f1(cm: &ConfusionMatrix) -> PrecisionRecall {
    let ratio = |num: u64, den: u64| if den == 0 { (0.0, true) } else { (num as f64 / den as f64, false) };
    let (precision, precision_undefined) = ratio(cm.tp, cm.tp + cm.fp);
    let (recall, recall_undefined) = ratio(cm.tp, cm.tp + cm.fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    PrecisionRecall {
        precision,
        recall,
        f1,
        precision_undefined,
        recall_undefined,
    }
}

fn class_counts(labels: &[u8]) -> Result<(usize, usize)> {
    let pos = labels.iter().filter(|&&y| y == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::argument(format!(
            "ROC needs both classes, got {pos} positives and {neg} negatives"
        )));
    }
    Ok((pos, neg))
}

/// Mann–Whitney AUC from midranks, `O(n log n)`.
///
/// Equals `P(score_pos > score_neg) + ½·P(tie)` over all positive/negative pairs.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_inputs(scores, labels)?;
    let (n_pos, n_neg) = class_counts(labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of positive ranks, with tied groups sharing their mean rank. Ranks
    // are doubled to stay in integers: group [i, j) has doubled midrank i+j+1.
    let mut pos_rank_sum2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let pos_in_group = order[i..j].iter().filter(|&&k| labels[k] == 1).count() as u128;
        pos_rank_sum2 += pos_in_group * (i + j + 1) as u128;
        i = j;
    }
    let (p, n) = (n_pos as u128, n_neg as u128);
    // U = R_pos − p(p+1)/2, doubled
    let u2 = pos_rank_sum2 - p * (p + 1);
    Ok(u2 as f64 / (2 * p * n) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Scores ≥ threshold are predicted positive; +∞ for the origin.
    pub threshold: f64,
}

/// ROC points at every distinct score, from (0,0) to (1,1).
pub fn roc_curve(scores: &[f64], labels: &[u8]) -> Result<Vec<RocPoint>> {
    check_inputs(scores, labels)?;
    let (n_pos, n_neg) = class_counts(labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
            threshold: s,
        });
    }
    Ok(points)
}

pub fn trapezoid_area(curve: &[RocPoint]) -> f64 {
    curve
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * 0.5 * (w[0].tpr + w[1].tpr))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricStd {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: f64,
    pub n_rows: u64,
    pub threshold: f64,
    #[serde(default)]
    pub precision_undefined: bool,
    #[serde(default)]
    pub recall_undefined: bool,
    /// Scores came from an external model's prediction file.
    #[serde(default)]
    pub external: bool,
    /// Number of reports averaged; 1 for a single evaluation.
    #[serde(default = "one")]
    pub n_folds: u64,
    /// Sample standard deviation across folds; present on aggregates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std: Option<MetricStd>,
}

fn one() -> u64 {
    1
}

impl MetricsReport {
    pub fn values(&self) -> [f64; 5] {
        [self.accuracy, self.precision, self.recall, self.f1, self.auc]
    }
}

pub const METRIC_NAMES: [&str; 5] = ["accuracy", "precision", "recall", "f1", "auc"];

/// All metrics for one scored set at `threshold`.
pub fn evaluate(scores: &[f64], labels: &[u8], threshold: f64) -> Result<MetricsReport> {
    let cm = confusion_at_threshold(scores, labels, threshold)?;
    let pr = precision_recall_f1(&cm);
    Ok(MetricsReport {
        accuracy: cm.accuracy(),
        precision: pr.precision,
        recall: pr.recall,
        f1: pr.f1,
        auc: roc_auc(scores, labels)?,
        n_rows: cm.total(),
        threshold,
        precision_undefined: pr.precision_undefined,
        recall_undefined: pr.recall_undefined,
        external: false,
        n_folds: 1,
        std: None,
    })
}

/// Mean and sample standard deviation (n−1; 0 for one report) per metric.
pub fn aggregate_folds(reports: &[MetricsReport]) -> Result<MetricsReport> {
    let first = reports
        .first()
        .ok_or_else(|| Error::argument("aggregate_folds: no reports"))?;
    let n = reports.len() as f64;
    let column = |k: usize| reports.iter().map(move |r| r.values()[k]);
    // sort before summing so the aggregate does not depend on report order
    let sorted_sum = |k: usize| {
        let mut v: Vec<f64> = column(k).collect();
        v.sort_by(f64::total_cmp);
        v.iter().sum::<f64>()
    };
    let mean: Vec<f64> = (0..5).map(|k| sorted_sum(k) / n).collect();
    let std: Vec<f64> = (0..5)
        .map(|k| {
            if reports.len() < 2 {
                return 0.0;
            }
            let mut sq: Vec<f64> = column(k).map(|v| (v - mean[k]).powi(2)).collect();
            sq.sort_by(f64::total_cmp);
            (sq.iter().sum::<f64>() / (n - 1.0)).sqrt()
        })
        .collect();
    Ok(MetricsReport {
        accuracy: mean[0],
        precision: mean[1],
        recall: mean[2],
        f1: mean[3],
        auc: mean[4],
        n_rows: reports.iter().map(|r| r.n_rows).sum(),
        threshold: first.threshold,
        precision_undefined: reports.iter().any(|r| r.precision_undefined),
        recall_undefined: reports.iter().any(|r| r.recall_undefined),
        external: reports.iter().all(|r| r.external),
        n_folds: reports.len() as u64,
        std: Some(MetricStd {
            accuracy: std[0],
            precision: std[1],
            recall: std[2],
            f1: std[3],
            auc: std[4],
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use proptest::prelude::*;

    /// Exhaustive pairwise AUC; independent of the rank implementation.
    fn brute_auc(scores: &[f64], labels: &[u8]) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for (i, &yi) in labels.iter().enumerate() {
            for (j, &yj) in labels.iter().enumerate() {
                if yi == 1 && yj == 0 {
                    den += 1.0;
                    if scores[i] > scores[j] {
                        num += 1.0;
                    } else if scores[i] == scores[j] {
                        num += 0.5;
                    }
                }
            }
        }
        num / den
    }

    #[test]
    fn confusion_examples() {
        let labels = [1, 0, 1, 0];
        let scores: Vec<f64> = labels.iter().map(|&y| y as f64).collect();
        let cm = confusion_at_threshold(&scores, &labels, 0.5).unwrap();
        assert_eq!((cm.fp, cm.fn_), (0, 0));
        let cm = confusion_at_threshold(&[0.1, 0.7, 0.0], &[0, 1, 1], 0.0).unwrap();
        assert_eq!((cm.tn, cm.fn_), (0, 0));
        let cm = confusion_at_threshold(&[0.6, 0.4], &[1, 1], 0.5).unwrap();
        assert_eq!((cm.tp, cm.fn_), (1, 1));
        assert!(confusion_at_threshold(&[0.5], &[1, 0], 0.5).is_err());
    }

    #[test]
    fn precision_recall_examples() {
        let pr = precision_recall_f1(&ConfusionMatrix { tp: 4, fp: 0, tn: 3, fn_: 0 });
        assert_eq!((pr.precision, pr.recall, pr.f1), (1.0, 1.0, 1.0));
        let pr = precision_recall_f1(&ConfusionMatrix { tp: 0, fp: 0, tn: 3, fn_: 2 });
        assert_eq!(pr.precision, 0.0);
        assert!(pr.precision_undefined);
        assert!(!pr.recall_undefined);
        let pr = precision_recall_f1(&ConfusionMatrix { tp: 3, fp: 1, tn: 0, fn_: 2 });
        assert_eq!(pr.precision, 0.75);
        assert_eq!(pr.recall, 0.6);
        assert!((pr.f1 - 2.0 * 0.75 * 0.6 / 1.35).abs() < 1e-15);
        assert!((pr.f1 - 0.666667).abs() < 1e-6);
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap(), 0.75);
        assert_eq!(roc_auc(&[0.3; 6], &[0, 1, 0, 1, 1, 0]).unwrap(), 0.5);
        assert!(matches!(roc_auc(&[0.2, 0.3], &[1, 1]), Err(Error::Argument(_))));
    }

    #[test]
    fn curve_examples() {
        let curve = roc_curve(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap();
        assert_eq!((curve[0].fpr, curve[0].tpr), (0.0, 0.0));
        let last = curve.last().unwrap();
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        assert!(curve.iter().any(|p| p.fpr == 0.0 && p.tpr == 1.0));
    }

    #[test]
    fn curve_area_matches_rank_statistic() {
        let mut rng = RngStream::new(17);
        let scores: Vec<f64> = (0..50).map(|_| (rng.next_f64() * 10.0).floor() / 10.0).collect();
        let labels: Vec<u8> = (0..50).map(|i| (i % 3 == 0) as u8).collect();
        let auc = roc_auc(&scores, &labels).unwrap();
        let area = trapezoid_area(&roc_curve(&scores, &labels).unwrap());
        assert!((auc - area).abs() < 1e-12);
        let reversed: Vec<f64> = scores.iter().map(|s| -s).collect();
        let rev = trapezoid_area(&roc_curve(&reversed, &labels).unwrap());
        assert!((rev - (1.0 - auc)).abs() < 1e-12);
    }

    #[test]
    fn aggregate_examples() {
        let single = evaluate(&[0.9, 0.2, 0.6, 0.4], &[1, 0, 0, 1], 0.5).unwrap();
        let agg = aggregate_folds(std::slice::from_ref(&single)).unwrap();
        assert_eq!(agg.values(), single.values());
        assert_eq!(agg.std.unwrap().auc, 0.0);

        let mut a = single.clone();
        a.accuracy = 0.8;
        let mut b = single.clone();
        b.accuracy = 0.9;
        let agg = aggregate_folds(&[a.clone(), b.clone()]).unwrap();
        assert!((agg.accuracy - 0.85).abs() < 1e-15);
        assert!((agg.std.unwrap().accuracy - 0.070711).abs() < 1e-6);
        assert_eq!(aggregate_folds(&[b, a]).unwrap(), agg);
        assert!(aggregate_folds(&[]).is_err());
    }

    #[test]
    fn balanced_random_accuracy_near_half() {
        let mut rng = RngStream::new(5);
        let scores: Vec<f64> = (0..1000).map(|_| rng.next_f64()).collect();
        let labels: Vec<u8> = (0..1000).map(|_| rng.bernoulli(0.5) as u8).collect();
        let acc = evaluate(&scores, &labels, 0.5).unwrap().accuracy;
        assert!((0.4..=0.6).contains(&acc));
    }

    proptest! {
        #[test]
        fn rank_auc_equals_brute_force(
            raw in proptest::collection::vec((0u8..20, any::<bool>()), 2..120)
        ) {
            let scores: Vec<f64> = raw.iter().map(|(s, _)| *s as f64 / 4.0).collect();
            let mut labels: Vec<u8> = raw.iter().map(|(_, y)| *y as u8).collect();
            labels[0] = 1;
            labels[1] = 0;
            let fast = roc_auc(&scores, &labels).unwrap();
            prop_assert!((fast - brute_auc(&scores, &labels)).abs() < 1e-12);
        }

        #[test]
        fn auc_invariant_under_monotone_transform(
            raw in proptest::collection::vec((-5.0f64..5.0, any::<bool>()), 2..80)
        ) {
            let scores: Vec<f64> = raw.iter().map(|(s, _)| *s).collect();
            let mut labels: Vec<u8> = raw.iter().map(|(_, y)| *y as u8).collect();
            labels[0] = 1;
            labels[1] = 0;
            let t: Vec<f64> = scores.iter().map(|s| (0.5 * s).exp() * 3.0 + 1.0).collect();
            prop_assert_eq!(roc_auc(&scores, &labels).unwrap(), roc_auc(&t, &labels).unwrap());
        }
    }
}
