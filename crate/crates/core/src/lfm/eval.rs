use serde::{Deserialize, Serialize};

use super::{desirable, FeedbackExample, FeedbackModel, LfmError};
use crate::annotate::Label;

/// Binary classification scores with "yes" as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Score {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl F1Score {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        F1Score {
            tp,
            fp,
            fn_,
            tn,
            precision,
            recall,
            f1,
        }
    }

    /// Score (predicted, gold) pairs.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (bool, bool)>) -> Self {
        let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
        for (p, g) in pairs {
            match (p, g) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => tn += 1,
            }
        }
        Self::from_counts(tp, fp, fn_, tn)
    }
}

/// Precision, recall and F1 of the model's desirable() decisions.
pub fn eval_f1(model: &FeedbackModel, examples: &[FeedbackExample]) -> Result<F1Score, LfmError> {
    if examples.is_empty() {
        return Err(LfmError::Empty);
    }
    Ok(F1Score::from_pairs(examples.iter().map(|e| {
        (
            desirable(model, &e.context, &e.action, &e.result),
            e.label == Label::Yes,
        )
    })))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_give_the_textbook_scores() {
        let s = F1Score::from_counts(8, 2, 2, 0);
        assert!((s.precision - 0.8).abs() < 1e-12);
        assert!((s.recall - 0.8).abs() < 1e-12);
        assert!((s.f1 - 0.8).abs() < 1e-12);
        let perfect = F1Score::from_pairs([(true, true), (false, false)]);
        assert_eq!(perfect.f1, 1.0);
        let none = F1Score::from_pairs([(false, true)]);
        assert_eq!((none.precision, none.recall, none.f1), (0.0, 0.0, 0.0));
    }
}
