//! Policy improvement from language feedback: grounded text environments,
//! annotators, a small feedback model and the imitation pipelines around it.

pub mod annotate;
pub mod env;
pub mod evalkit;
pub mod lfm;
pub mod pipeline;
pub mod policy;
pub mod seeding;
mod sparse;
pub mod tokenize;
pub mod verbalize;
