//! The feedback model: dataset construction from annotated windows, a
//! logistic classifier over context/action/result features, the desirable
//! predicate and F1 evaluation.

mod dataset;
mod eval;
mod model;

pub use dataset::{
    balance_and_split, build_feedback_dataset, sample_windows, unroll_window, FeedbackDataset,
    FeedbackExample, FeedbackRecord,
};
pub use eval::{eval_f1, F1Score};
pub use model::{
    desirable, detailed_infer, encode, learn_templates, train_feedback_model, Encoded,
    FeedbackGradient, FeedbackHyper, FeedbackModel, FEEDBACK_FORMAT_VERSION,
};

use crate::annotate::AnnotateError;

#[derive(Debug, thiserror::Error)]
pub enum LfmError {
    #[error("cannot balance feedback: {yes} yes and {no} no labels")]
    Unbalanced { yes: usize, no: usize },
    #[error("no feedback examples")]
    Empty,
    #[error("feedback model: {0}")]
    Model(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Annotate(#[from] AnnotateError),
}
