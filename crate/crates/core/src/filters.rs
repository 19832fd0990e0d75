//! Post-processing of model output and of candidate snippet pairs.

use std::collections::BTreeMap;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::Language;
use crate::error::ExtractionError;
use crate::lexer::AnnotatedProgram;

/// A fenced block found in markdown-ish text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FencedBlock<'a> {
    pub tag: &'a str,
    pub body: &'a str,
}

/// Finds fenced code blocks. A fence is a line of three or more backticks;
/// the block ends at the next line consisting of exactly the same fence.
/// An unclosed fence runs to the end of the text.
pub fn fenced_blocks(text: &str) -> Vec<FencedBlock<'_>> {
    let mut blocks = Vec::new();
    let mut offset = 0;
    let mut open: Option<(&str, &str, usize)> = None;
    for line in text.split_inclusive('\n') {
        let start = offset;
        offset += line.len();
        let trimmed = line.trim();
        match open {
            None => {
                let ticks = trimmed.bytes().take_while(|&b| b == b'`').count();
                if ticks >= 3 {
                    let tag = trimmed[ticks..].trim();
                    if !tag.contains('`') {
                        open = Some((&trimmed[..ticks], tag, offset));
                    }
                }
            }
            Some((fence, tag, body_start)) => {
                if trimmed == fence {
                    blocks.push(FencedBlock {
                        tag,
                        body: &text[body_start..start],
                    });
                    open = None;
                }
            }
        }
    }
    if let Some((_, tag, body_start)) = open {
        blocks.push(FencedBlock {
            tag,
            body: &text[body_start..],
        });
    }
    blocks
}

/// Shortest backtick fence that cannot collide with a backtick run in `body`.
pub fn fence_for(body: &str) -> String {
    let mut longest = 0;
    let mut run = 0;
    for b in body.bytes() {
        if b == b'`' {
            run += 1;
            longest = longest.max(run);
        } else {
            run = 0;
        }
    }
    "`".repeat((longest + 1).max(3))
}

/// Pulls the program out of a model response: the first fenced block, or the
/// whole response when it has no fence and does not open with prose.
pub fn extract_code_block(llm_output: &str) -> Result<String, ExtractionError> {
    if let Some(block) = fenced_blocks(llm_output).into_iter().next() {
        return Ok(block.body.to_string());
    }
    let Some(first) = llm_output.lines().map(str::trim).find(|l| !l.is_empty()) else {
        return Err(ExtractionError::Empty);
    };
    if looks_like_prose(first) {
        return Err(ExtractionError::Prose(first.chars().take(80).collect()));
    }
    Ok(llm_output.to_string())
}

fn looks_like_prose(line: &str) -> bool {
    const CODE_CHARS: &[char] = &['=', '(', ')', '{', '}', '[', ']', ';', '<', '>', '#'];
    let words = line.split_whitespace().count();
    let starts_alpha = line.chars().next().is_some_and(char::is_alphabetic);
    let ends_sentence = line.ends_with(['.', '!', '?', ':']);
    let has_code = line.contains(CODE_CHARS);
    starts_alpha && words >= 3 && !has_code && (ends_sentence || line.contains("! ") || line.contains(". "))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Alignment {
    Ok,
    Mismatch {
        index: usize,
        left: Option<String>,
        right: Option<String>,
    },
}

impl Alignment {
    pub fn is_ok(&self) -> bool {
        matches!(self, Alignment::Ok)
    }
}

/// Compares the comment signatures of two annotated programs.
///
/// A length mismatch with a common prefix is reported at `min(k_a, k_b)`,
/// with `None` on the shorter side.
pub fn validate_comment_alignment(a: &AnnotatedProgram, b: &AnnotatedProgram) -> Alignment {
    let left = &a.comments;
    let right = &b.comments;
    for (index, (l, r)) in left.iter().zip(right).enumerate() {
        if l.normalized_text != r.normalized_text {
            return Alignment::Mismatch {
                index,
                left: Some(l.normalized_text.clone()),
                right: Some(r.normalized_text.clone()),
            };
        }
    }
    if left.len() != right.len() {
        let index = left.len().min(right.len());
        return Alignment::Mismatch {
            index,
            left: left.get(index).map(|c| c.normalized_text.clone()),
            right: right.get(index).map(|c| c.normalized_text.clone()),
        };
    }
    Alignment::Ok
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UselessReason {
    ImportOnly,
    WhitespaceOnly,
    BoilerplateOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FilterVerdict {
    pub accepted: bool,
    pub reason: Option<UselessReason>,
}

impl FilterVerdict {
    pub const ACCEPT: FilterVerdict = FilterVerdict {
        accepted: true,
        reason: None,
    };

    fn reject(reason: UselessReason) -> Self {
        FilterVerdict {
            accepted: false,
            reason: Some(reason),
        }
    }
}

/// Line patterns for one language, as regular expressions matched against
/// each trimmed non-blank line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguagePatterns {
    #[serde(default)]
    pub import: Vec<String>,
    #[serde(default)]
    pub boilerplate: Vec<String>,
}

/// Per-language boilerplate line patterns, loadable from a config file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FilterPatterns(pub BTreeMap<Language, LanguagePatterns>);

impl Default for FilterPatterns {
    fn default() -> Self {
        let lone = vec![r"^[{};()]+$".to_string()];
        let mut map = BTreeMap::new();
        map.insert(
            Language::Python,
            LanguagePatterns {
                import: vec![
                    r"^import\s+[\w., ]+(\s+as\s+\w+)?$".into(),
                    r"^from\s+[\w.]+\s+import\s+.+$".into(),
                ],
                boilerplate: lone.clone(),
            },
        );
        map.insert(
            Language::Java,
            LanguagePatterns {
                import: vec![
                    r"^import\s+(static\s+)?[\w.]+(\.\*)?\s*;$".into(),
                    r"^package\s+[\w.]+\s*;$".into(),
                ],
                boilerplate: lone.clone(),
            },
        );
        map.insert(
            Language::Cpp,
            LanguagePatterns {
                import: vec![
                    r"^#\s*include\b.*$".into(),
                    r"^using\s+namespace\s+[\w:]+\s*;$".into(),
                    r"^using\s+[\w:]+\s*;$".into(),
                    r"^#\s*define\b.*$".into(),
                ],
                boilerplate: lone,
            },
        );
        FilterPatterns(map)
    }
}

/// Compiled form of [`FilterPatterns`].
#[derive(Debug, Clone)]
pub struct SnippetFilter {
    compiled: BTreeMap<Language, (Vec<Regex>, Vec<Regex>)>,
}

impl Default for SnippetFilter {
    fn default() -> Self {
        SnippetFilter::new(&FilterPatterns::default()).expect("default patterns compile")
    }
}

impl SnippetFilter {
    pub fn new(patterns: &FilterPatterns) -> Result<Self, regex::Error> {
        let compile = |v: &[String]| v.iter().map(|p| Regex::new(p)).collect::<Result<Vec<_>, _>>();
        let mut compiled = BTreeMap::new();
        for (lang, p) in &patterns.0 {
            compiled.insert(*lang, (compile(&p.import)?, compile(&p.boilerplate)?));
        }
        Ok(Self { compiled })
    }

    /// Rejects snippets that carry no translatable content: whitespace only,
    /// or every non-blank line an import or a lone brace/semicolon.
    pub fn is_useless_snippet(&self, snippet: &str, language: Language) -> FilterVerdict {
        let lines: Vec<&str> = snippet.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        if lines.is_empty() {
            return FilterVerdict::reject(UselessReason::WhitespaceOnly);
        }
        let Some((imports, boilerplate)) = self.compiled.get(&language) else {
            return FilterVerdict::ACCEPT;
        };
        let mut saw_import = false;
        for line in lines {
            if imports.iter().any(|r| r.is_match(line)) {
                saw_import = true;
            } else if !boilerplate.iter().any(|r| r.is_match(line)) {
                return FilterVerdict::ACCEPT;
            }
        }
        if saw_import {
            FilterVerdict::reject(UselessReason::ImportOnly)
        } else {
            FilterVerdict::reject(UselessReason::BoilerplateOnly)
        }
    }
}

/// [`SnippetFilter::is_useless_snippet`] with the default patterns.
pub fn is_useless_snippet(snippet: &str, language: Language) -> FilterVerdict {
    thread_local! {
        static DEFAULT: SnippetFilter = SnippetFilter::default();
    }
    DEFAULT.with(|f| f.is_useless_snippet(snippet, language))
}
