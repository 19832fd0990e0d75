//! Snippet-aligned corpus construction for code translation.

pub mod cli;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod filters;
pub mod lexer;
pub mod llm;
pub mod pipeline;
pub mod schedule;

pub use corpus::{Language, ProblemGroup, Program, SnippetPair};
pub use eval::{pass_at_k, Scalar};
pub use pipeline::{run_pipeline, AugmentationReport, PairMode, PipelineConfig};

pub type EvalTable32 = eval::EvalTable<f32>;
pub type EvalTable64 = eval::EvalTable<f64>;
