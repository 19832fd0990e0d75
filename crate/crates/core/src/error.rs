use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("read failed: {0}")]
    Read(String),
    #[error("write failed: {0}")]
    Write(String),
    #[error("unknown language tag {0:?}")]
    UnknownLanguage(String),
    #[error("invalid problem group: {0}")]
    InvalidGroup(String),
}

impl CorpusError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Failure to tokenize a program well enough to locate its comments.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LexError {
    #[error("unterminated block comment starting at byte {0}")]
    UnterminatedBlockComment(usize),
    #[error("unterminated string literal starting at byte {0}")]
    UnterminatedString(usize),
    #[error("unterminated character literal starting at byte {0}")]
    UnterminatedChar(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("HTTP {status} after {attempts} attempt(s): {body}")]
    Status { status: u16, attempts: u32, body: String },
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("cache error: {0}")]
    Cache(String),
    #[error("mock backend: {0}")]
    Mock(#[from] MockError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MockError {
    #[error("unrecognized prompt shape: {0}")]
    UnrecognizedPrompt(String),
    #[error("could not lex embedded program: {0}")]
    Lex(#[from] LexError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("annotated source for problem {0} has no comments")]
    NoComments(String),
    #[error("prompt template error: {0}")]
    Template(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtractionError {
    #[error("model output is empty")]
    Empty,
    #[error("model output has no code block and looks like prose: {0:?}")]
    Prose(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("invalid arguments n={n}, c={c}, k={k}: {reason}")]
    Argument {
        n: u64,
        c: u64,
        k: u64,
        reason: &'static str,
    },
    #[error("line {line}: {message}")]
    Record { line: usize, message: String },
    #[error("duplicate verdict for {0}")]
    Duplicate(String),
    #[error("fewer than k={k} samples for: {problems:?}")]
    TooFewSamples { k: u64, problems: Vec<String> },
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScheduleError {
    #[error("order string must be non-empty")]
    EmptyOrder,
    #[error("invalid granularity {0:?} in order string (expected P or S)")]
    InvalidGranularity(char),
    #[error("order {order} uses {granularity} data but no dataset path was given")]
    MissingDataset { order: String, granularity: &'static str },
    #[error("max_total_epochs must be at least 1")]
    ZeroEpochs,
}
