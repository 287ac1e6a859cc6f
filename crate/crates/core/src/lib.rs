//! Method-level commit untangling toolkit.
//!
//! Mines method-level changes from git history, labels them (rules, human
//! raters, LLM prompts or embedding classifiers), and measures how much
//! untangling multi-method bug-fix commits sharpens the separation between
//! buggy and clean methods on code metrics.

pub mod classifier;
pub mod code_metrics;
pub mod denoise;
pub mod digest;
pub mod embedding;
pub mod exec;
pub mod goldset;
pub mod label;
pub mod lexer;
pub mod llm;
pub mod metrics;
pub mod mining;
pub mod prompt;
pub mod stats;

pub use exec::Exec;
pub use label::{Label, VerdictLabel};
