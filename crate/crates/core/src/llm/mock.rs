//! Deterministic offline stand-in for the model.
//!
//! Stage 1: a `step N` comment goes in front of every blank-line separated
//! block of the source.
//! Stage 2: the comments of the annotated source go in front of the target's
//! blocks, in order. Surplus target blocks stay attached to the last comment;
//! surplus comments are dropped, which yields a signature mismatch.

use std::sync::atomic::{AtomicUsize, Ordering};

use super::{Backend, GenerationRequest};
use crate::corpus::{Language, Program};
use crate::error::{BackendError, MockError};
use crate::filters::{fence_for, fenced_blocks};
use crate::lexer::segment_by_comments;

#[derive(Debug, Default)]
pub struct MockBackend {
    stage1_calls: AtomicUsize,
    stage2_calls: AtomicUsize,
}

impl MockBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn stage1_calls(&self) -> usize {
        self.stage1_calls.load(Ordering::SeqCst)
    }

    pub fn stage2_calls(&self) -> usize {
        self.stage2_calls.load(Ordering::SeqCst)
    }

    /// Produces the mock completion for a stage prompt.
    pub fn respond(&self, request: &GenerationRequest) -> Result<String, MockError> {
        let blocks = fenced_blocks(&request.user_prompt);
        match blocks.as_slice() {
            [source] => {
                self.stage1_calls.fetch_add(1, Ordering::SeqCst);
                let lang = parse_tag(source.tag)?;
                let comments: Vec<String> = (1..)
                    .map(|n| format!("step {n}"))
                    .take(count_blocks(source.body))
                    .collect();
                Ok(fenced(lang, &insert_comments(source.body, lang, &comments)))
            }
            [source, target] => {
                self.stage2_calls.fetch_add(1, Ordering::SeqCst);
                let source_lang = parse_tag(source.tag)?;
                let target_lang = parse_tag(target.tag)?;
                let annotated = segment_by_comments(&Program::new("", source_lang, source.body))?;
                let comments = annotated.signature();
                Ok(fenced(
                    target_lang,
                    &insert_comments(target.body, target_lang, &comments),
                ))
            }
            _ => Err(MockError::UnrecognizedPrompt(format!(
                "expected 1 or 2 fenced blocks, found {}",
                blocks.len()
            ))),
        }
    }
}

impl Backend for MockBackend {
    fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        Ok(self.respond(request)?)
    }
}

fn parse_tag(tag: &str) -> Result<Language, MockError> {
    tag.parse()
        .map_err(|_| MockError::UnrecognizedPrompt(format!("unknown fence language {tag:?}")))
}

fn fenced(lang: Language, body: &str) -> String {
    let fence = fence_for(body);
    format!("{fence}{lang}\n{body}{fence}\n")
}

fn is_blank(line: &str) -> bool {
    line.trim().is_empty()
}

fn count_blocks(text: &str) -> usize {
    let mut n = 0;
    let mut in_block = false;
    for line in text.split_inclusive('\n') {
        let blank = is_blank(line);
        if !blank && !in_block {
            n += 1;
        }
        in_block = !blank;
    }
    n
}

/// Puts `comments[i]` on its own line before the i-th block, matching that
/// block's indentation and line ending.
fn insert_comments(text: &str, lang: Language, comments: &[String]) -> String {
    let marker = lang.line_comment_marker();
    let mut out = String::with_capacity(text.len() + comments.iter().map(|c| c.len() + 8).sum::<usize>());
    let mut in_block = false;
    let mut next = comments.iter();
    for line in text.split_inclusive('\n') {
        let blank = is_blank(line);
        if !blank && !in_block {
            if let Some(comment) = next.next() {
                let indent = &line[..line.len() - line.trim_start().len()];
                let eol = if line.ends_with("\r\n") { "\r\n" } else { "\n" };
                out.push_str(indent);
                out.push_str(marker);
                if !comment.is_empty() {
                    out.push(' ');
                    out.push_str(comment);
                }
                out.push_str(eol);
            }
        }
        in_block = !blank;
        out.push_str(line);
    }
    out
}
