//! Binary classification metrics with `Buggy` as the positive class.

use serde::{Deserialize, Serialize};

use crate::label::Label;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("predictions ({predictions}) and truths ({truths}) differ in length")]
    LengthMismatch { predictions: usize, truths: usize },
    #[error("no items to score")]
    EmptyInput,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn record(&mut self, predicted: Label, truth: Label, positive: Label) {
        match (predicted == positive, truth == positive) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn merge(&self, other: &Self) -> Self {
        Self { tp: self.tp + other.tp, fp: self.fp + other.fp, fn_: self.fn_ + other.fn_, tn: self.tn + other.tn }
    }
}

pub fn confusion(predictions: &[Label], truths: &[Label], positive: Label) -> Result<ConfusionMatrix, MetricsError> {
    if predictions.len() != truths.len() {
        return Err(MetricsError::LengthMismatch { predictions: predictions.len(), truths: truths.len() });
    }
    if predictions.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut cm = ConfusionMatrix::default();
    for (p, t) in predictions.iter().zip(truths) {
        cm.record(*p, *t, positive);
    }
    Ok(cm)
}

/// Serialized with exactly the six public metric keys; `degenerate` marks
/// that some ratio was 0/0 and was reported as 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub mcc: f64,
    pub unparseable_count: u64,
    #[serde(skip)]
    pub degenerate: bool,
}

fn ratio(num: f64, den: f64, degenerate: &mut bool) -> f64 {
    if den == 0.0 {
        *degenerate = true;
        0.0
    } else {
        num / den
    }
}

pub fn classification_metrics(cm: &ConfusionMatrix, unparseable_count: u64) -> MetricsReport {
    let (tp, fp, fn_, tn) = (cm.tp as f64, cm.fp as f64, cm.fn_ as f64, cm.tn as f64);
    let mut degenerate = false;
    let accuracy = ratio(tp + tn, cm.total() as f64, &mut degenerate);
    let precision = ratio(tp, tp + fp, &mut degenerate);
    let recall = ratio(tp, tp + fn_, &mut degenerate);
    let f1 = ratio(2.0 * precision * recall, precision + recall, &mut degenerate);
    let den = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
    let mcc = ratio(tp * tn - fp * fn_, den, &mut degenerate).clamp(-1.0, 1.0);
    MetricsReport { accuracy, precision, recall, f1, mcc, unparseable_count, degenerate }
}

/// Convenience: score predictions against truths in one step.
pub fn score(
    predictions: &[Label],
    truths: &[Label],
    unparseable_count: u64,
) -> Result<(ConfusionMatrix, MetricsReport), MetricsError> {
    let cm = confusion(predictions, truths, Label::Buggy)?;
    Ok((cm, classification_metrics(&cm, unparseable_count)))
}
