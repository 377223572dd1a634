use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::features::FeatureKind;
use crate::models::ModelFamily;
use crate::preprocess::Label;

/// Version of the per-cell report JSON.
pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// Precision, recall and F1 of one class. Any ratio with a zero denominator
/// is reported as 0 and named in `zero_division`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub zero_division: Vec<String>,
}

impl ClassMetrics {
    fn from_counts(hit: usize, false_alarm: usize, miss: usize) -> Self {
        let mut zero_division = Vec::new();
        let mut ratio = |num: f64, den: f64, name: &str| {
            if den > 0.0 {
                num / den
            } else {
                zero_division.push(name.to_string());
                0.0
            }
        };
        let precision = ratio(hit as f64, (hit + false_alarm) as f64, "precision");
        let recall = ratio(hit as f64, (hit + miss) as f64, "recall");
        let f1 = ratio(2.0 * precision * recall, precision + recall, "f1");
        Self {
            precision,
            recall,
            f1,
            zero_division,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionReport {
    pub counts: ConfusionCounts,
    pub positive: ClassMetrics,
    pub negative: ClassMetrics,
    /// Percent.
    pub accuracy: f64,
}

/// Confusion counts with "positive" as the positive class, per-class
/// precision/recall/F1 and accuracy in percent.
pub fn confusion_metrics(y_true: &[Label], y_pred: &[Label]) -> Result<ConfusionReport, EvalError> {
    if y_true.len() != y_pred.len() {
        return Err(EvalError::LengthMismatch(y_true.len(), y_pred.len()));
    }
    if y_true.is_empty() {
        return Err(EvalError::InsufficientData("no predictions".into()));
    }
    let mut c = ConfusionCounts::default();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t, p) {
            (Label::Positive, Label::Positive) => c.tp += 1,
            (Label::Negative, Label::Positive) => c.fp += 1,
            (Label::Positive, Label::Negative) => c.fn_ += 1,
            (Label::Negative, Label::Negative) => c.tn += 1,
        }
    }
    Ok(ConfusionReport {
        positive: ClassMetrics::from_counts(c.tp, c.fp, c.fn_),
        negative: ClassMetrics::from_counts(c.tn, c.fn_, c.fp),
        accuracy: 100.0 * (c.tp + c.tn) as f64 / c.total() as f64,
        counts: c,
    })
}

/// Area under the ROC curve as the Mann-Whitney statistic
/// P(score_pos > score_neg) + 0.5 P(score_pos == score_neg).
///
/// Scores are sorted once and tie groups swept in order; wins and ties are
/// counted in integers, so the result is exact up to the final division.
pub fn roc_auc(y_true: &[Label], scores: &[f64]) -> Result<f64, EvalError> {
    if y_true.len() != scores.len() {
        return Err(EvalError::LengthMismatch(y_true.len(), scores.len()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(EvalError::NonFiniteScore);
    }
    let n_pos = y_true.iter().filter(|&&l| l == Label::Positive).count() as u128;
    let n_neg = y_true.len() as u128 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::SingleClassData);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the Mann-Whitney U: 2 per win, 1 per tie.
    let mut doubled: u128 = 0;
    let mut neg_below: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u128, 0u128);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            match y_true[order[j]] {
                Label::Positive => pos += 1,
                Label::Negative => neg += 1,
            }
            j += 1;
        }
        doubled += 2 * pos * neg_below + pos * neg;
        neg_below += neg;
        i = j;
    }
    Ok(doubled as f64 / (2 * n_pos * n_neg) as f64)
}

/// Evaluation result of one scenario x feature set x model cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub format_version: u32,
    pub scenario_id: u8,
    pub scenario: String,
    pub feature_kind: FeatureKind,
    pub model_family: ModelFamily,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub counts: ConfusionCounts,
    pub positive: ClassMetrics,
    pub negative: ClassMetrics,
    /// Percent.
    pub accuracy: f64,
    pub auc: f64,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Markdown table in the layout of the per-dataset result tables:
/// one block per feature set, two rows (positive, negative) per model.
pub fn markdown_table(reports: &[&MetricsReport]) -> String {
    let mut out = String::from(
        "| Model | Class | Precision | Recall | F1-Score | AUC | Acc |\n|---|---|---|---|---|---|---|\n",
    );
    let mut kinds: Vec<FeatureKind> = reports.iter().map(|r| r.feature_kind).collect();
    kinds.sort();
    kinds.dedup();
    for kind in kinds {
        out.push_str(&format!("| **{} Features** | | | | | | |\n", kind.display_name()));
        for r in reports.iter().filter(|r| r.feature_kind == kind) {
            out.push_str(&format!(
                "| {} | COVID-19 positive | {:.2} | {:.2} | {:.2} | {:.3} | {:.2} |\n",
                r.model_family,
                100.0 * r.positive.precision,
                100.0 * r.positive.recall,
                100.0 * r.positive.f1,
                r.auc,
                r.accuracy
            ));
            out.push_str(&format!(
                "| | COVID-19 negative | {:.2} | {:.2} | {:.2} | | |\n",
                100.0 * r.negative.precision,
                100.0 * r.negative.recall,
                100.0 * r.negative.f1
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Negative as N, Positive as P};

    #[test]
    fn hand_counted_confusion() {
        let r = confusion_metrics(&[P, P, N, N], &[P, N, P, N]).unwrap();
        assert_eq!(r.counts, ConfusionCounts { tp: 1, fp: 1, fn_: 1, tn: 1 });
        assert_eq!((r.positive.precision, r.positive.recall, r.positive.f1), (0.5, 0.5, 0.5));
        assert_eq!(r.accuracy, 50.0);
    }

    #[test]
    fn perfect_predictions() {
        let y = [P, N, N, P, N];
        let r = confusion_metrics(&y, &y).unwrap();
        for m in [&r.positive, &r.negative] {
            assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
            assert!(m.zero_division.is_empty());
        }
        assert_eq!(r.accuracy, 100.0);
    }

    #[test]
    fn all_negative_predictions_flag_precision() {
        let r = confusion_metrics(&[P, N, P], &[N, N, N]).unwrap();
        assert_eq!(r.positive.precision, 0.0);
        assert_eq!(r.positive.recall, 0.0);
        assert!(r.positive.zero_division.contains(&"precision".to_string()));
        assert!(r.positive.zero_division.contains(&"f1".to_string()));
    }

    #[test]
    fn confusion_errors() {
        assert_eq!(confusion_metrics(&[P], &[P, N]), Err(EvalError::LengthMismatch(1, 2)));
        assert!(confusion_metrics(&[], &[]).is_err());
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[P, P, N, N], &[0.9, 0.8, 0.2, 0.1]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[P, N, P, N], &[0.3; 4]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[P, P, N, N], &[0.8, 0.3, 0.5, 0.1]).unwrap(), 0.75);
        assert_eq!(roc_auc(&[P, P], &[0.1, 0.2]), Err(EvalError::SingleClassData));
        assert_eq!(roc_auc(&[P, N], &[f64::NAN, 0.2]), Err(EvalError::NonFiniteScore));
    }
}
