//! String-aware comment extraction and comment-delimited segmentation.
//!
//! A program is cut into the alternating sequence
//! `s0, c1, s1, ..., ck, sk` where every `ci` is a comment span and every
//! `si` is the code between two comments. Concatenating the pieces in order
//! gives back the input byte for byte.
//!
//! The scanner is a hand-written state machine over bytes. All delimiters it
//! looks for are ASCII, so every offset it produces is a valid `str` boundary.

use std::ops::Range;

use serde::Serialize;

use crate::corpus::{Language, Program};
use crate::error::LexError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CommentKind {
    Line,
    Block,
    MergedGroup,
}

/// One comment separator.
///
/// A span that starts a line absorbs the indentation in front of it, and a
/// span that ends a line absorbs the trailing whitespace and line terminator,
/// so the snippets around it begin and end on clean line boundaries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CommentSpan {
    pub byte_range: Range<usize>,
    pub raw_text: String,
    pub normalized_text: String,
    pub kind: CommentKind,
}

/// A program cut into `k` comments and `k + 1` snippets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedProgram {
    pub program: Program,
    pub comments: Vec<CommentSpan>,
    pub snippets: Vec<Range<usize>>,
    /// Set when `k >= 1` and the final snippet holds only whitespace.
    pub trailing_empty: bool,
}

impl AnnotatedProgram {
    pub fn k(&self) -> usize {
        self.comments.len()
    }

    pub fn language(&self) -> Language {
        self.program.language
    }

    pub fn snippet(&self, index: usize) -> &str {
        &self.program.source_text[self.snippets[index].clone()]
    }

    pub fn snippet_texts(&self) -> impl Iterator<Item = &str> {
        self.snippets.iter().map(|r| &self.program.source_text[r.clone()])
    }

    pub fn signature(&self) -> Vec<String> {
        comment_signature(self)
    }
}

/// Raw scanner output: unadjusted comment ranges and string literal ranges.
#[derive(Debug, Default, Clone)]
pub struct Scan {
    pub comments: Vec<(Range<usize>, CommentKind)>,
    pub strings: Vec<Range<usize>>,
}

/// Tokenizes just enough of `text` to find comments and string literals.
pub fn scan(text: &str, language: Language) -> Result<Scan, LexError> {
    Scanner {
        bytes: text.as_bytes(),
        pos: 0,
        language,
        out: Scan::default(),
    }
    .run()
}

/// Byte ranges of every string and character literal.
pub fn string_literal_spans(program: &Program) -> Result<Vec<Range<usize>>, LexError> {
    Ok(scan(&program.source_text, program.language)?.strings)
}

struct Scanner<'a> {
    bytes: &'a [u8],
    pos: usize,
    language: Language,
    out: Scan,
}

fn is_ident_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

impl Scanner<'_> {
    fn run(mut self) -> Result<Scan, LexError> {
        while self.pos < self.bytes.len() {
            match self.language {
                Language::Python => self.step_python()?,
                Language::Java => self.step_java()?,
                Language::Cpp => self.step_cpp()?,
            }
        }
        Ok(self.out)
    }

    fn at(&self, s: &[u8]) -> bool {
        self.bytes[self.pos..].starts_with(s)
    }

    fn line_comment(&mut self) {
        let start = self.pos;
        let end = match self.bytes[start..].iter().position(|&b| b == b'\n') {
            Some(off) => start + off + 1,
            None => self.bytes.len(),
        };
        self.out.comments.push((start..end, CommentKind::Line));
        self.pos = end;
    }

    fn block_comment(&mut self) -> Result<(), LexError> {
        let start = self.pos;
        let body = start + 2;
        match find(&self.bytes[body..], b"*/") {
            Some(off) => {
                let end = body + off + 2;
                self.out.comments.push((start..end, CommentKind::Block));
                self.pos = end;
                Ok(())
            }
            None => Err(LexError::UnterminatedBlockComment(start)),
        }
    }

    /// Scans a literal opened by `open` at `self.pos` and closed by `close`.
    /// Backslash escapes the next byte. A bare newline ends a single-line
    /// literal with an error.
    fn quoted(
        &mut self,
        literal_start: usize,
        open_len: usize,
        close: &[u8],
        multiline: bool,
        is_char: bool,
    ) -> Result<(), LexError> {
        let mut i = self.pos + open_len;
        let unterminated = || {
            if is_char {
                LexError::UnterminatedChar(literal_start)
            } else {
                LexError::UnterminatedString(literal_start)
            }
        };
        while i < self.bytes.len() {
            let b = self.bytes[i];
            if b == b'\\' {
                // Escape, including a line continuation written as "\\\r\n".
                if self.bytes.get(i + 1) == Some(&b'\r') && self.bytes.get(i + 2) == Some(&b'\n') {
                    i += 3;
                } else {
                    i += 2;
                }
                continue;
            }
            if self.bytes[i..].starts_with(close) {
                let end = i + close.len();
                self.out.strings.push(literal_start..end);
                self.pos = end;
                return Ok(());
            }
            if b == b'\n' && !multiline {
                return Err(unterminated());
            }
            i += 1;
        }
        Err(unterminated())
    }

    fn step_python(&mut self) -> Result<(), LexError> {
        let b = self.bytes[self.pos];
        match b {
            b'#' => self.line_comment(),
            b'"' | b'\'' => {
                let triple: &[u8] = if b == b'"' { b"\"\"\"" } else { b"'''" };
                if self.at(triple) {
                    self.quoted(self.pos, 3, triple, true, false)?;
                } else {
                    self.quoted(self.pos, 1, &[b], false, false)?;
                }
            }
            _ => self.pos += 1,
        }
        Ok(())
    }

    fn step_java(&mut self) -> Result<(), LexError> {
        let b = self.bytes[self.pos];
        match b {
            b'/' if self.at(b"//") => self.line_comment(),
            b'/' if self.at(b"/*") => self.block_comment()?,
            b'"' if self.at(b"\"\"\"") => self.quoted(self.pos, 3, b"\"\"\"", true, false)?,
            b'"' => self.quoted(self.pos, 1, b"\"", false, false)?,
            b'\'' => self.quoted(self.pos, 1, b"'", false, true)?,
            _ => self.pos += 1,
        }
        Ok(())
    }

    fn step_cpp(&mut self) -> Result<(), LexError> {
        let b = self.bytes[self.pos];
        match b {
            b'/' if self.at(b"//") => self.line_comment(),
            b'/' if self.at(b"/*") => self.block_comment()?,
            b'"' => {
                let prefix_start = self.ident_start(self.pos);
                let prefix = &self.bytes[prefix_start..self.pos];
                if matches!(prefix, b"R" | b"u8R" | b"uR" | b"UR" | b"LR") {
                    self.raw_string(prefix_start)?;
                } else {
                    self.quoted(self.pos, 1, b"\"", false, false)?;
                }
            }
            b'\'' => {
                // 1'000'000: a quote inside a numeric literal is a digit separator.
                let word_start = self.ident_start(self.pos);
                if word_start < self.pos && self.bytes[word_start].is_ascii_digit() {
                    self.pos += 1;
                } else {
                    self.quoted(self.pos, 1, b"'", false, true)?;
                }
            }
            _ => self.pos += 1,
        }
        Ok(())
    }

    /// Start of the identifier-like run that ends right before `end`.
    fn ident_start(&self, end: usize) -> usize {
        let mut s = end;
        while s > 0 && (is_ident_byte(self.bytes[s - 1]) || self.bytes[s - 1] == b'\'') {
            s -= 1;
        }
        // Separators only count inside numbers; re-trim from the last quote
        // when the run does not start with a digit.
        if s < end && !self.bytes[s].is_ascii_digit() {
            if let Some(q) = self.bytes[s..end].iter().rposition(|&b| b == b'\'') {
                s += q + 1;
            }
        }
        s
    }

    /// `R"delim( ... )delim"`
    fn raw_string(&mut self, literal_start: usize) -> Result<(), LexError> {
        let open = self.pos + 1;
        let Some(paren) = self.bytes[open..].iter().take(17).position(|&b| b == b'(') else {
            return Err(LexError::UnterminatedString(literal_start));
        };
        let delim = &self.bytes[open..open + paren];
        let mut close = Vec::with_capacity(delim.len() + 2);
        close.push(b')');
        close.extend_from_slice(delim);
        close.push(b'"');
        let body = open + paren + 1;
        match find(&self.bytes[body..], &close) {
            Some(off) => {
                let end = body + off + close.len();
                self.out.strings.push(literal_start..end);
                self.pos = end;
                Ok(())
            }
            None => Err(LexError::UnterminatedString(literal_start)),
        }
    }
}

fn find(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack.windows(needle.len()).position(|w| w == needle)
}

fn is_blank(b: u8) -> bool {
    matches!(b, b' ' | b'\t')
}

/// Grows a raw comment range over leading indentation (when the comment
/// starts its line) and over trailing blanks plus the line terminator (when
/// nothing else follows it on the line).
fn widen(bytes: &[u8], range: Range<usize>) -> Range<usize> {
    let mut start = range.start;
    while start > 0 && is_blank(bytes[start - 1]) {
        start -= 1;
    }
    if start > 0 && bytes[start - 1] != b'\n' {
        start = range.start;
    }

    let mut end = range.end;
    if end > 0 && bytes[end - 1] == b'\n' {
        return start..end;
    }
    let mut e = end;
    while e < bytes.len() && (is_blank(bytes[e]) || bytes[e] == b'\r') {
        e += 1;
    }
    if e == bytes.len() {
        end = e;
    } else if bytes[e] == b'\n' {
        end = e + 1;
    }
    start..end
}

/// All comments outside string literals, in source order. Comments separated
/// only by whitespace are merged into one `MergedGroup` span.
pub fn extract_comments(program: &Program) -> Result<Vec<CommentSpan>, LexError> {
    let text = program.source_text.as_str();
    let bytes = text.as_bytes();
    let scan = scan(text, program.language)?;

    let mut merged: Vec<(Range<usize>, CommentKind)> = Vec::new();
    for (range, kind) in scan.comments {
        let range = widen(bytes, range);
        if let Some((last, last_kind)) = merged.last_mut() {
            // widen() may pull a start back over blanks the previous span
            // already absorbed as trailing whitespace.
            let start = range.start.max(last.end);
            if text[last.end..start].trim().is_empty() {
                last.end = range.end;
                *last_kind = CommentKind::MergedGroup;
                continue;
            }
        }
        merged.push((range, kind));
    }

    Ok(merged
        .into_iter()
        .map(|(byte_range, kind)| {
            let raw_text = text[byte_range.clone()].to_string();
            CommentSpan {
                normalized_text: normalize_comment(&raw_text),
                raw_text,
                byte_range,
                kind,
            }
        })
        .collect())
}

/// Cuts a program at its comments.
pub fn segment_by_comments(program: &Program) -> Result<AnnotatedProgram, LexError> {
    let mut comments = extract_comments(program)?;
    let text = program.source_text.as_str();

    // Whitespace-only gaps are already merged by extract_comments; this pass
    // keeps the interior-snippet invariant local to segmentation.
    let mut i = 1;
    while i < comments.len() {
        if text[comments[i - 1].byte_range.end..comments[i].byte_range.start]
            .trim()
            .is_empty()
        {
            let next = comments.remove(i);
            let prev = &mut comments[i - 1];
            prev.byte_range.end = next.byte_range.end;
            prev.raw_text = text[prev.byte_range.clone()].to_string();
            prev.normalized_text = normalize_comment(&prev.raw_text);
            prev.kind = CommentKind::MergedGroup;
        } else {
            i += 1;
        }
    }

    let mut snippets = Vec::with_capacity(comments.len() + 1);
    let mut cursor = 0;
    for c in &comments {
        snippets.push(cursor..c.byte_range.start);
        cursor = c.byte_range.end;
    }
    snippets.push(cursor..text.len());

    let trailing_empty = !comments.is_empty() && text[cursor..].trim().is_empty();
    Ok(AnnotatedProgram {
        program: program.clone(),
        comments,
        snippets,
        trailing_empty,
    })
}

/// Interleaves snippets and comments back into the original text.
pub fn reconstruct(annotated: &AnnotatedProgram) -> String {
    let mut out = String::with_capacity(annotated.program.source_text.len());
    for (i, snippet) in annotated.snippet_texts().enumerate() {
        if i > 0 {
            out.push_str(&annotated.comments[i - 1].raw_text);
        }
        out.push_str(snippet);
    }
    out
}

pub fn comment_signature(annotated: &AnnotatedProgram) -> Vec<String> {
    annotated.comments.iter().map(|c| c.normalized_text.clone()).collect()
}

/// The program text with every comment replaced by a newline.
pub fn strip_comments(program: &Program) -> Result<String, LexError> {
    let annotated = segment_by_comments(program)?;
    Ok(annotated.snippet_texts().collect::<Vec<_>>().join("\n"))
}

/// Canonical comment content: markers removed, whitespace collapsed,
/// lowercased, trailing `.,;:` dropped. Idempotent.
pub fn normalize_comment(raw: &str) -> String {
    let mut cur = normalize_pass(raw);
    for _ in 0..8 {
        let next = normalize_pass(&cur);
        if next == cur {
            break;
        }
        cur = next;
    }
    cur
}

fn normalize_pass(raw: &str) -> String {
    let joined = raw.lines().map(strip_markers).collect::<Vec<_>>().join(" ");
    let collapsed = joined.split_whitespace().collect::<Vec<_>>().join(" ");
    let lowered = collapsed.to_lowercase();
    lowered
        .trim_end_matches(|c: char| matches!(c, '.' | ',' | ';' | ':') || c.is_whitespace())
        .to_string()
}

fn strip_markers(line: &str) -> &str {
    let mut t = line.trim();
    loop {
        let before = t;
        if let Some(rest) = t.strip_suffix("*/") {
            t = rest.trim_end();
        }
        if let Some(rest) = t.strip_prefix("/*") {
            t = rest;
        } else if t.starts_with("//") {
            t = t.trim_start_matches('/');
        } else if t.starts_with('#') {
            t = t.trim_start_matches('#');
        } else if t.starts_with('*') {
            t = t.trim_start_matches('*');
        }
        t = t.trim();
        if t == before {
            return t;
        }
    }
}
