//! Debiasing zero-shot multiple-choice QA with ambiguity-aware prefixes and
//! retrieved neutral guidance.

pub mod corpus;
pub mod detector;
pub mod evaluator;
pub mod guidance;
pub mod llmclient;
pub mod pipeline;
pub mod promptkit;
pub mod retrieval;
pub mod textmetrics;
