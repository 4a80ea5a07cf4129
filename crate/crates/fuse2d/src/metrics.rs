//! Confusion-based evaluation and machine-readable reports.
//!
//! The positive class defaults to no-stress: a true positive is a correctly
//! predicted no-stress sample. This matches the evaluation convention used
//! throughout the pipeline and can be flipped per call.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::ingest::ClassLabel;

// ---------------------------------------------------------------------------
// Confusion counts
// ---------------------------------------------------------------------------

/// Binary confusion counts with an explicit positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
    pub positive: ClassLabel,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }
}

/// Counts TP/TN/FP/FN over parallel prediction and truth slices.
pub fn confusion_counts(
    pred: &[ClassLabel],
    truth: &[ClassLabel],
    positive: ClassLabel,
) -> Result<ConfusionMatrix> {
    if pred.len() != truth.len() {
        return Err(Error::InvalidMetrics(format!(
            "{} predictions vs {} truths",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::InvalidMetrics("empty evaluation set".into()));
    }
    let mut cm = ConfusionMatrix {
        tp: 0,
        tn: 0,
        fp: 0,
        fn_: 0,
        positive,
    };
    for (&p, &t) in pred.iter().zip(truth) {
        match (p == positive, t == positive) {
            (true, true) => cm.tp += 1,
            (false, false) => cm.tn += 1,
            (true, false) => cm.fp += 1,
            (false, true) => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

/// Precision, recall, F1 and accuracy derived from a confusion matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassificationMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

/// Computes the four scalar metrics. Zero-denominator cases return 0 rather
/// than NaN so that reports stay serializable.
pub fn classification_metrics(cm: &ConfusionMatrix) -> Result<ClassificationMetrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::InvalidMetrics("confusion matrix has zero total".into()));
    }
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            log::warn!("zero denominator in a classification metric, reporting 0");
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let precision = ratio(cm.tp, cm.tp + cm.fp);
    let recall = ratio(cm.tp, cm.tp + cm.fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    let accuracy = (cm.tp + cm.tn) as f64 / total as f64;
    Ok(ClassificationMetrics {
        precision,
        recall,
        f1,
        accuracy,
    })
}

// ---------------------------------------------------------------------------
// ROC / AUC
// ---------------------------------------------------------------------------

/// Area under the ROC curve via the Mann-Whitney rank statistic, with ties
/// credited 0.5. `scores` are positive-class probabilities.
pub fn roc_auc(scores: &[f64], truth: &[ClassLabel], positive: ClassLabel) -> Result<f64> {
    if scores.len() != truth.len() {
        return Err(Error::InvalidMetrics(format!(
            "{} scores vs {} truths",
            scores.len(),
            truth.len()
        )));
    }
    let n_pos = truth.iter().filter(|&&t| t == positive).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidMetrics(
            "ROC-AUC needs both classes present".into(),
        ));
    }
    for &s in scores {
        if !s.is_finite() {
            return Err(Error::NonFinite("ROC scores".into()));
        }
    }

    // Midranks over ascending scores; tied groups share the average rank.
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j averaged.
        let midrank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if truth[idx] == positive {
                rank_sum_pos += midrank;
            }
        }
        i = j;
    }
    let auc = (rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0) / (n_pos as f64 * n_neg as f64);
    Ok(auc)
}

/// ROC operating points, one per distinct score threshold, descending.
/// A sample is predicted positive when its score is `>=` the threshold.
pub fn roc_points(
    scores: &[f64],
    truth: &[ClassLabel],
    positive: ClassLabel,
) -> Result<Vec<(f64, f64, f64)>> {
    // Reuse the validation in roc_auc.
    roc_auc(scores, truth, positive)?;
    let n_pos = truth.iter().filter(|&&t| t == positive).count();
    let n_neg = truth.len() - n_pos;

    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();

    let mut out = Vec::with_capacity(thresholds.len());
    for thr in thresholds {
        let mut tp = 0usize;
        let mut fp = 0usize;
        for (&s, &t) in scores.iter().zip(truth) {
            if s >= thr {
                if t == positive {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
        }
        out.push((thr, tp as f64 / n_pos as f64, fp as f64 / n_neg as f64));
    }
    Ok(out)
}

/// Writes ROC points as `threshold,tpr,fpr` CSV with a header row.
pub fn write_roc_csv(points: &[(f64, f64, f64)], path: &Path) -> Result<()> {
    use std::io::Write;
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    writeln!(out, "threshold,tpr,fpr").map_err(|e| Error::io(path, e))?;
    for (thr, tpr, fpr) in points {
        writeln!(out, "{thr},{tpr},{fpr}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// Run metadata carried inside a report.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunMeta {
    pub model_id: String,
    pub dataset_id: String,
    pub arrangements: Vec<String>,
    pub seed: u64,
    pub positive_class: String,
    /// Precision/recall of the other class, for symmetry with the headline
    /// positive-class numbers.
    pub negative_precision: f64,
    pub negative_recall: f64,
}

/// Full evaluation report: headline metrics, confusion counts and metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: f64,
    pub confusion: ConfusionMatrix,
    pub meta: RunMeta,
}

/// Formats a metric with full round-trip precision and at least six decimal
/// digits. Padding zeros never changes the parsed value.
fn fmt_metric(x: f64) -> String {
    debug_assert!(x.is_finite());
    let mut s = format!("{x}");
    if let Some(dot) = s.find('.') {
        let decimals = s.len() - dot - 1;
        for _ in decimals..6 {
            s.push('0');
        }
    } else {
        s.push_str(".000000");
    }
    s
}

/// Serializes a report as JSON with fixed key order.
pub fn write_report(report: &EvalReport, path: &Path) -> Result<()> {
    let escape = |s: &str| serde_json::to_string(s).expect("string serializes");
    let arrangements: Vec<String> = report
        .meta
        .arrangements
        .iter()
        .map(|a| escape(a))
        .collect();
    let body = format!(
        "{{\n  \"accuracy\": {},\n  \"precision\": {},\n  \"recall\": {},\n  \"f1\": {},\n  \"auc\": {},\n  \
         \"confusion\": {{\"tp\": {}, \"tn\": {}, \"fp\": {}, \"fn\": {}}},\n  \
         \"meta\": {{\n    \"model_id\": {},\n    \"dataset_id\": {},\n    \"arrangements\": [{}],\n    \
         \"seed\": {},\n    \"positive_class\": {},\n    \"negative_precision\": {},\n    \"negative_recall\": {}\n  }}\n}}\n",
        fmt_metric(report.accuracy),
        fmt_metric(report.precision),
        fmt_metric(report.recall),
        fmt_metric(report.f1),
        fmt_metric(report.auc),
        report.confusion.tp,
        report.confusion.tn,
        report.confusion.fp,
        report.confusion.fn_,
        escape(&report.meta.model_id),
        escape(&report.meta.dataset_id),
        arrangements.join(", "),
        report.meta.seed,
        escape(&report.meta.positive_class),
        fmt_metric(report.meta.negative_precision),
        fmt_metric(report.meta.negative_recall),
    );
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

#[derive(Deserialize)]
struct ReportDoc {
    accuracy: f64,
    precision: f64,
    recall: f64,
    f1: f64,
    auc: f64,
    confusion: ConfusionDoc,
    meta: MetaDoc,
}

#[derive(Deserialize)]
struct ConfusionDoc {
    tp: usize,
    tn: usize,
    fp: usize,
    #[serde(rename = "fn")]
    fn_: usize,
}

#[derive(Deserialize)]
struct MetaDoc {
    model_id: String,
    dataset_id: String,
    arrangements: Vec<String>,
    seed: u64,
    positive_class: String,
    negative_precision: f64,
    negative_recall: f64,
}

/// Parses a report written by [`write_report`].
pub fn read_report(path: &Path) -> Result<EvalReport> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: ReportDoc = serde_json::from_str(&raw)
        .map_err(|e| Error::row(path, e.line(), e.to_string()))?;
    let positive = match doc.meta.positive_class.as_str() {
        "stress" => ClassLabel::Stress,
        _ => ClassLabel::NoStress,
    };
    Ok(EvalReport {
        accuracy: doc.accuracy,
        precision: doc.precision,
        recall: doc.recall,
        f1: doc.f1,
        auc: doc.auc,
        confusion: ConfusionMatrix {
            tp: doc.confusion.tp,
            tn: doc.confusion.tn,
            fp: doc.confusion.fp,
            fn_: doc.confusion.fn_,
            positive,
        },
        meta: RunMeta {
            model_id: doc.meta.model_id,
            dataset_id: doc.meta.dataset_id,
            arrangements: doc.meta.arrangements,
            seed: doc.meta.seed,
            positive_class: doc.meta.positive_class,
            negative_precision: doc.meta.negative_precision,
            negative_recall: doc.meta.negative_recall,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ClassLabel::{NoStress as P, Stress as N};

    #[test]
    fn confusion_worked_example() {
        // pred [+,+,-,-,+], truth [+,-,-,+,+]; hand count: TP 2, FP 1, FN 1, TN 1.
        let pred = [P, P, N, N, P];
        let truth = [P, N, N, P, P];
        let cm = confusion_counts(&pred, &truth, P).unwrap();
        assert_eq!((cm.tp, cm.fp, cm.fn_, cm.tn), (2, 1, 1, 1));
    }

    #[test]
    fn confusion_degenerate_cases() {
        let all = [P, P, P];
        let cm = confusion_counts(&all, &all, P).unwrap();
        assert_eq!((cm.tp, cm.tn, cm.fp, cm.fn_), (3, 0, 0, 0));

        let flipped = [N, N, N];
        let cm = confusion_counts(&flipped, &all, P).unwrap();
        assert_eq!((cm.tp, cm.tn), (0, 0));
        assert_eq!(cm.fn_, 3);

        assert!(confusion_counts(&[], &[], P).is_err());
        assert!(confusion_counts(&[P], &[P, N], P).is_err());
    }

    #[test]
    fn metrics_worked_example() {
        let cm = ConfusionMatrix {
            tp: 3,
            fp: 1,
            fn_: 2,
            tn: 4,
            positive: P,
        };
        let m = classification_metrics(&cm).unwrap();
        assert_eq!(m.precision, 0.75);
        assert_eq!(m.recall, 0.6);
        assert!((m.f1 - 2.0 * 0.75 * 0.6 / 1.35).abs() < 1e-15);
        assert!((m.f1 - 0.6667).abs() < 1e-4);
        assert_eq!(m.accuracy, 0.7);
    }

    #[test]
    fn zero_denominators_return_zero() {
        let cm = ConfusionMatrix {
            tp: 0,
            fp: 0,
            fn_: 2,
            tn: 4,
            positive: P,
        };
        let m = classification_metrics(&cm).unwrap();
        assert_eq!(m.precision, 0.0);
        assert_eq!(m.f1, 0.0);
    }

    #[test]
    fn metrics_match_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..1000 {
            let n = rng.gen_range(1..40);
            let pred: Vec<ClassLabel> = (0..n).map(|_| if rng.gen() { P } else { N }).collect();
            let truth: Vec<ClassLabel> = (0..n).map(|_| if rng.gen() { P } else { N }).collect();
            let cm = confusion_counts(&pred, &truth, P).unwrap();
            let m = classification_metrics(&cm).unwrap();

            // Brute-force recount straight from the pairs.
            let tp = pred.iter().zip(&truth).filter(|(p, t)| **p == P && **t == P).count();
            let fp = pred.iter().zip(&truth).filter(|(p, t)| **p == P && **t == N).count();
            let fn_ = pred.iter().zip(&truth).filter(|(p, t)| **p == N && **t == P).count();
            let tn = n - tp - fp - fn_;
            assert_eq!((cm.tp, cm.fp, cm.fn_, cm.tn), (tp, fp, fn_, tn));
            let expect_p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
            let expect_r = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
            assert_eq!(m.precision, expect_p);
            assert_eq!(m.recall, expect_r);
            assert_eq!(m.accuracy, (tp + tn) as f64 / n as f64);
        }
    }

    #[test]
    fn f1_between_harmonic_bounds() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let cm = ConfusionMatrix {
                tp: rng.gen_range(0..20),
                fp: rng.gen_range(0..20),
                fn_: rng.gen_range(0..20),
                tn: rng.gen_range(1..20),
                positive: P,
            };
            let m = classification_metrics(&cm).unwrap();
            assert!(m.f1 <= (m.precision + m.recall) / 2.0 + 1e-12);
            assert!(m.f1 >= 0.0 && m.f1 <= 1.0);
        }
    }

    #[test]
    fn accuracy_symmetric_under_positive_swap() {
        // Positive = P: TP 1, FP 2 -> precision 1/3. Positive = N: TP 1,
        // FP 0 -> precision 1. Accuracy is 1/2 either way.
        let pred = [P, P, P, N];
        let truth = [P, N, N, N];
        let a = classification_metrics(&confusion_counts(&pred, &truth, P).unwrap()).unwrap();
        let b = classification_metrics(&confusion_counts(&pred, &truth, N).unwrap()).unwrap();
        assert_eq!(a.accuracy, b.accuracy);
        // Precision/recall are not symmetric in general.
        assert_ne!(a.precision, b.precision);
    }

    #[test]
    fn auc_examples() {
        // Perfect separation.
        let auc = roc_auc(&[0.9, 0.8, 0.2, 0.1], &[P, P, N, N], P).unwrap();
        assert_eq!(auc, 1.0);

        // All ties.
        let auc = roc_auc(&[0.5; 6], &[P, N, P, N, P, N], P).unwrap();
        assert_eq!(auc, 0.5);

        // Four-point example: 3 of 4 positive-negative pairs correctly ordered.
        let auc = roc_auc(&[0.9, 0.8, 0.4, 0.3], &[P, N, P, N], P).unwrap();
        assert_eq!(auc, 0.75);

        assert!(roc_auc(&[0.5, 0.6], &[P, P], P).is_err());
    }

    #[test]
    fn auc_matches_pair_enumeration() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let n = rng.gen_range(2..60);
            let scores: Vec<f64> = (0..n).map(|_| (rng.gen_range(0..10) as f64) / 10.0).collect();
            let truth: Vec<ClassLabel> = (0..n).map(|_| if rng.gen() { P } else { N }).collect();
            if !truth.contains(&P) || !truth.contains(&N) {
                continue;
            }
            let auc = roc_auc(&scores, &truth, P).unwrap();
            // Oracle: enumerate every positive-negative pair.
            let mut num = 0.0;
            let mut den = 0.0;
            for (i, &ti) in truth.iter().enumerate() {
                for (j, &tj) in truth.iter().enumerate() {
                    if ti == P && tj == N {
                        den += 1.0;
                        if scores[i] > scores[j] {
                            num += 1.0;
                        } else if scores[i] == scores[j] {
                            num += 0.5;
                        }
                    }
                }
            }
            assert!((auc - num / den).abs() < 1e-12);
        }
    }

    #[test]
    fn auc_invariant_under_monotone_transform() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let scores: Vec<f64> = (0..50).map(|_| rng.gen_range(0.01..1.0)).collect();
        let truth: Vec<ClassLabel> = (0..50).map(|_| if rng.gen() { P } else { N }).collect();
        let base = roc_auc(&scores, &truth, P).unwrap();
        let affine: Vec<f64> = scores.iter().map(|s| 2.0 * s + 1.0).collect();
        let cubed: Vec<f64> = scores.iter().map(|s| s * s * s).collect();
        assert_eq!(base, roc_auc(&affine, &truth, P).unwrap());
        assert_eq!(base, roc_auc(&cubed, &truth, P).unwrap());
    }

    #[test]
    fn roc_points_reach_corners() {
        let pts = roc_points(&[0.9, 0.8, 0.4, 0.3], &[P, N, P, N], P).unwrap();
        assert_eq!(pts.len(), 4);
        let last = pts.last().unwrap();
        assert_eq!((last.1, last.2), (1.0, 1.0));
    }

    fn sample_report() -> EvalReport {
        EvalReport {
            accuracy: 0.9586,
            precision: 0.93,
            recall: 0.96,
            f1: 0.94,
            auc: 0.912345678912345,
            confusion: ConfusionMatrix {
                tp: 3,
                tn: 4,
                fp: 1,
                fn_: 2,
                positive: P,
            },
            meta: RunMeta {
                model_id: "model-1".into(),
                dataset_id: "synthetic".into(),
                arrangements: vec!["PEA".into(), "EAP".into()],
                seed: 17,
                positive_class: "nostress".into(),
                negative_precision: 0.5,
                negative_recall: 0.25,
            },
        }
    }

    #[test]
    fn report_round_trips_exactly() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("report.json");
        let report = sample_report();
        write_report(&report, &path).unwrap();
        let loaded = read_report(&path).unwrap();
        assert_eq!(loaded, report);
    }

    #[test]
    fn report_carries_six_decimals() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("report.json");
        write_report(&sample_report(), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"precision\": 0.930000"), "{text}");
        assert!(text.contains("\"recall\": 0.960000"));
        assert!(text.contains("\"f1\": 0.940000"));
        assert!(text.contains("\"accuracy\": 0.958600"));
    }

    #[test]
    fn report_write_errors_carry_path() {
        let err = write_report(&sample_report(), Path::new("/no/such/dir/report.json"))
            .unwrap_err();
        assert!(err.to_string().contains("/no/such/dir"), "{err}");
    }

    #[test]
    fn fmt_metric_pads_and_round_trips() {
        assert_eq!(fmt_metric(0.75), "0.750000");
        assert_eq!(fmt_metric(1.0), "1.000000");
        assert_eq!(fmt_metric(0.0), "0.000000");
        let third = 1.0f64 / 3.0;
        let s = fmt_metric(third);
        assert_eq!(s.parse::<f64>().unwrap(), third);
        assert!(s.split('.').nth(1).unwrap().len() >= 6);
    }
}
