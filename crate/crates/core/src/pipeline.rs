//! The three augmentation stages and the accounting around them.
//!
//! Stage 1 asks the model to insert comments into the pivot program. Stage 2
//! asks it to rewrite every target program around those comments. Stage 3
//! pairs up the i-th snippets of every two programs whose comment signatures
//! agree.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Language, ProblemGroup, Program, SnippetPair};
use crate::error::{BackendError, ExtractionError, LexError, PromptError};
use crate::filters::{extract_code_block, validate_comment_alignment, Alignment, SnippetFilter};
use crate::lexer::{segment_by_comments, strip_comments, AnnotatedProgram};
use crate::llm::{Backend, PromptBuilder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectionKind {
    ParsingError,
    CommentsNotMatch,
    Filtered,
}

impl fmt::Display for RejectionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RejectionKind::ParsingError => "parsing",
            RejectionKind::CommentsNotMatch => "comments_not_match",
            RejectionKind::Filtered => "filtered",
        })
    }
}

/// Whether a language pair (a, b) is counted once or as both (a, b) and (b, a).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairMode {
    #[default]
    Unordered,
    Ordered,
}

impl std::str::FromStr for PairMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unordered" => Ok(PairMode::Unordered),
            "ordered" => Ok(PairMode::Ordered),
            other => Err(format!("unknown pair mode {other:?} (expected ordered or unordered)")),
        }
    }
}

/// Every language pair over `langs`. Unordered pairs are oriented by
/// `Language` order.
pub fn language_pairs(langs: &[Language], mode: PairMode) -> Vec<(Language, Language)> {
    let mut out = Vec::new();
    for (i, &a) in langs.iter().enumerate() {
        for &b in &langs[i + 1..] {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            out.push((lo, hi));
            if mode == PairMode::Ordered {
                out.push((hi, lo));
            }
        }
    }
    out
}

/// One discarded candidate. Parsing and comment mismatches reject a whole
/// language pair of a problem (`snippet_index` is `None`); filtering rejects
/// one snippet pair.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Rejection {
    pub problem_id: String,
    pub lang_a: Language,
    pub lang_b: Language,
    pub snippet_index: Option<usize>,
    pub kind: RejectionKind,
    pub detail: String,
}

#[derive(Debug, Error)]
pub enum StageError {
    #[error("backend: {0}")]
    Backend(#[from] BackendError),
    #[error("extraction: {0}")]
    Extraction(#[from] ExtractionError),
    #[error("lex: {0}")]
    Lex(#[from] LexError),
    #[error("prompt: {0}")]
    Prompt(#[from] PromptError),
    #[error("model changed the code, not just the comments")]
    CodeMutated,
}

/// Annotated members of one problem, targets first and the source last.
#[derive(Debug, Clone)]
pub struct RewrittenGroup {
    pub problem_id: String,
    pub members: Vec<AnnotatedProgram>,
}

fn code_tokens(program: &Program) -> Result<Vec<String>, LexError> {
    Ok(strip_comments(program)?
        .split_whitespace()
        .map(str::to_string)
        .collect())
}

/// Stage 1: comment insertion on the source program.
///
/// The output must equal the input once comments are removed and whitespace
/// is normalized.
pub fn stage1_insert_comments(
    group: &ProblemGroup,
    backend: &dyn Backend,
    prompts: &PromptBuilder,
) -> Result<AnnotatedProgram, StageError> {
    let source = &group.source;
    let request = prompts.stage1(source)?;
    let output = backend.generate(&request)?;
    let code = extract_code_block(&output)?;
    let annotated = segment_by_comments(&Program::new(&source.problem_id, source.language, code))?;
    if code_tokens(&annotated.program)? != code_tokens(source)? {
        return Err(StageError::CodeMutated);
    }
    Ok(annotated)
}

/// Stage 2: rewrite one target around the comments of the annotated source.
pub fn stage2_rewrite_target(
    annotated_source: &AnnotatedProgram,
    target: &Program,
    backend: &dyn Backend,
    prompts: &PromptBuilder,
) -> Result<AnnotatedProgram, StageError> {
    let request = prompts.stage2(annotated_source, target)?;
    let output = backend.generate(&request)?;
    let code = extract_code_block(&output)?;
    Ok(segment_by_comments(&Program::new(
        &target.problem_id,
        target.language,
        code,
    ))?)
}

fn whitespace_only(s: &str) -> bool {
    s.trim().is_empty()
}

/// Stage 3: split every aligned pair of members at their comments and match
/// snippets by index.
pub fn stage3_split_and_match(
    group: &RewrittenGroup,
    mode: PairMode,
    filter: &SnippetFilter,
) -> (Vec<SnippetPair>, Vec<Rejection>) {
    let by_lang: BTreeMap<Language, &AnnotatedProgram> = group.members.iter().map(|m| (m.language(), m)).collect();
    let langs: Vec<Language> = group.members.iter().map(AnnotatedProgram::language).collect();
    let mut pairs = Vec::new();
    let mut rejections = Vec::new();

    for (lang_a, lang_b) in language_pairs(&langs, mode) {
        let a = by_lang[&lang_a];
        let b = by_lang[&lang_b];
        let reject = |snippet_index, kind, detail: String| Rejection {
            problem_id: group.problem_id.clone(),
            lang_a,
            lang_b,
            snippet_index,
            kind,
            detail,
        };
        let signature = a.signature();
        if signature != b.signature() {
            let detail = match validate_comment_alignment(a, b) {
                Alignment::Mismatch { index, left, right } => {
                    format!("comment {index}: {left:?} vs {right:?}")
                }
                Alignment::Ok => String::new(),
            };
            rejections.push(reject(None, RejectionKind::CommentsNotMatch, detail));
            continue;
        }
        for p in 0..=a.k() {
            let (sa, sb) = (a.snippet(p), b.snippet(p));
            if whitespace_only(sa) && whitespace_only(sb) {
                continue;
            }
            let va = filter.is_useless_snippet(sa, lang_a);
            let vb = filter.is_useless_snippet(sb, lang_b);
            if !(va.accepted && vb.accepted) {
                let reason = va.reason.or(vb.reason);
                rejections.push(reject(Some(p), RejectionKind::Filtered, format!("{reason:?}")));
                continue;
            }
            pairs.push(SnippetPair {
                problem_id: group.problem_id.clone(),
                snippet_index: p,
                lang_a,
                lang_b,
                comment: if p == 0 {
                    String::new()
                } else {
                    signature[p - 1].clone()
                },
                snippet_a: sa.to_string(),
                snippet_b: sb.to_string(),
            });
        }
    }
    (pairs, rejections)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedCounts {
    pub parsing: u64,
    pub comments_not_match: u64,
    pub filtered: u64,
}

impl RejectedCounts {
    pub fn total(&self) -> u64 {
        self.parsing + self.comments_not_match + self.filtered
    }

    fn slot(&mut self, kind: RejectionKind) -> &mut u64 {
        match kind {
            RejectionKind::ParsingError => &mut self.parsing,
            RejectionKind::CommentsNotMatch => &mut self.comments_not_match,
            RejectionKind::Filtered => &mut self.filtered,
        }
    }

    pub fn get(&self, kind: RejectionKind) -> u64 {
        match kind {
            RejectionKind::ParsingError => self.parsing,
            RejectionKind::CommentsNotMatch => self.comments_not_match,
            RejectionKind::Filtered => self.filtered,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairStats {
    pub initial: u64,
    pub rejected: RejectedCounts,
    #[serde(rename = "final")]
    pub final_pairs: u64,
}

/// What each rejection counter counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountingUnits {
    pub parsing: String,
    pub comments_not_match: String,
    pub filtered: String,
}

impl Default for CountingUnits {
    fn default() -> Self {
        Self {
            parsing: "language_pair".into(),
            comments_not_match: "language_pair".into(),
            filtered: "snippet_pair".into(),
        }
    }
}

/// Candidate accounting for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationReport {
    #[serde(rename = "initial")]
    pub initial_pairs: u64,
    pub rejected: RejectedCounts,
    #[serde(rename = "final")]
    pub final_pairs: u64,
    pub usability_rate: f64,
    pub ordered_pairs: u64,
    pub unordered_pairs: u64,
    pub per_language_pair: BTreeMap<String, PairStats>,
    pub no_separator_problems: u64,
    pub problems: u64,
    /// Input groups dropped by the loader (missing pivot or no targets).
    #[serde(default)]
    pub skipped_groups: u64,
    /// Input lines that could not be read as records.
    #[serde(default)]
    pub input_errors: u64,
    pub pair_mode: PairMode,
    pub units: CountingUnits,
}

impl AugmentationReport {
    /// Usability as a percentage rounded to two decimals.
    pub fn usability_percent(&self) -> f64 {
        (self.usability_rate * 10_000.0).round() / 100.0
    }

    /// Share of candidates that were rejected.
    pub fn rejection_rate(&self) -> f64 {
        if self.initial_pairs == 0 {
            0.0
        } else {
            self.rejected.total() as f64 / self.initial_pairs as f64
        }
    }
}

/// Folds accepted pairs and rejections into an [`AugmentationReport`].
/// Counts can be attributed to a language pair or left unattributed.
#[derive(Debug, Clone, Default)]
pub struct ReportBuilder {
    mode: PairMode,
    totals: PairStats,
    per_pair: BTreeMap<(Language, Language), PairStats>,
    no_separator_problems: u64,
    problems: u64,
}

impl ReportBuilder {
    pub fn new(mode: PairMode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    fn stats(&mut self, pair: Option<(Language, Language)>) -> [Option<&mut PairStats>; 2] {
        let per = pair.map(|p| self.per_pair.entry(p).or_default());
        [Some(&mut self.totals), per]
    }

    pub fn accept(&mut self, pair: Option<(Language, Language)>, count: u64) -> &mut Self {
        for s in self.stats(pair).into_iter().flatten() {
            s.initial += count;
            s.final_pairs += count;
        }
        self
    }

    pub fn reject(&mut self, pair: Option<(Language, Language)>, kind: RejectionKind, count: u64) -> &mut Self {
        for s in self.stats(pair).into_iter().flatten() {
            s.initial += count;
            *s.rejected.slot(kind) += count;
        }
        self
    }

    pub fn add_pairs(&mut self, pairs: &[SnippetPair]) -> &mut Self {
        for p in pairs {
            self.accept(Some((p.lang_a, p.lang_b)), 1);
        }
        self
    }

    pub fn add_rejections(&mut self, rejections: &[Rejection]) -> &mut Self {
        for r in rejections {
            self.reject(Some((r.lang_a, r.lang_b)), r.kind, 1);
        }
        self
    }

    pub fn problem(&mut self, no_separators: bool) -> &mut Self {
        self.problems += 1;
        if no_separators {
            self.no_separator_problems += 1;
        }
        self
    }

    pub fn build(&self) -> AugmentationReport {
        let t = self.totals;
        let usability_rate = if t.initial == 0 {
            0.0
        } else {
            t.final_pairs as f64 / t.initial as f64
        };
        let (ordered_pairs, unordered_pairs) = match self.mode {
            PairMode::Unordered => (2 * t.final_pairs, t.final_pairs),
            PairMode::Ordered => (t.final_pairs, t.final_pairs / 2),
        };
        AugmentationReport {
            initial_pairs: t.initial,
            rejected: t.rejected,
            final_pairs: t.final_pairs,
            usability_rate,
            ordered_pairs,
            unordered_pairs,
            per_language_pair: self
                .per_pair
                .iter()
                .map(|((a, b), s)| (format!("{a}-{b}"), *s))
                .collect(),
            no_separator_problems: self.no_separator_problems,
            problems: self.problems,
            skipped_groups: 0,
            input_errors: 0,
            pair_mode: self.mode,
            units: CountingUnits::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub workers: usize,
    pub mode: PairMode,
    pub prompts: PromptBuilder,
    pub filter: SnippetFilter,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            workers: 4,
            mode: PairMode::Unordered,
            prompts: PromptBuilder::default(),
            filter: SnippetFilter::default(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ProblemOutcome {
    pub pairs: Vec<SnippetPair>,
    pub rejections: Vec<Rejection>,
    pub no_separators: bool,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub pairs: Vec<SnippetPair>,
    pub rejections: Vec<Rejection>,
    pub report: AugmentationReport,
}

/// Runs all three stages for one problem. Failures never escape: they turn
/// into parsing rejections for the language pairs they touch.
pub fn process_problem(group: &ProblemGroup, backend: &dyn Backend, config: &PipelineConfig) -> ProblemOutcome {
    let all_langs: Vec<Language> = group.members().map(|p| p.language).collect();
    let parsing = |pairs: &[(Language, Language)], detail: &str| -> Vec<Rejection> {
        pairs
            .iter()
            .map(|&(lang_a, lang_b)| Rejection {
                problem_id: group.problem_id.clone(),
                lang_a,
                lang_b,
                snippet_index: None,
                kind: RejectionKind::ParsingError,
                detail: detail.to_string(),
            })
            .collect()
    };

    let source = match stage1_insert_comments(group, backend, &config.prompts) {
        Ok(a) => a,
        Err(e) => {
            log::warn!("problem {}: stage 1 failed: {e}", group.problem_id);
            return ProblemOutcome {
                rejections: parsing(&language_pairs(&all_langs, config.mode), &format!("stage 1: {e}")),
                ..ProblemOutcome::default()
            };
        }
    };
    if source.k() == 0 {
        log::info!("problem {}: no separators after stage 1", group.problem_id);
        return ProblemOutcome {
            no_separators: true,
            ..ProblemOutcome::default()
        };
    }

    let mut members = Vec::with_capacity(group.targets.len() + 1);
    let mut failed: BTreeMap<Language, String> = BTreeMap::new();
    for target in &group.targets {
        match stage2_rewrite_target(&source, target, backend, &config.prompts) {
            Ok(a) => members.push(a),
            Err(e) => {
                log::warn!(
                    "problem {} ({}): stage 2 failed: {e}",
                    group.problem_id,
                    target.language
                );
                failed.insert(target.language, e.to_string());
            }
        }
    }
    members.push(source);

    let mut rejections = Vec::new();
    for (a, b) in language_pairs(&all_langs, config.mode) {
        if let Some(err) = failed.get(&a).or_else(|| failed.get(&b)) {
            rejections.extend(parsing(&[(a, b)], &format!("stage 2: {err}")));
        }
    }

    let rewritten = RewrittenGroup {
        problem_id: group.problem_id.clone(),
        members,
    };
    let (pairs, matched_rejections) = stage3_split_and_match(&rewritten, config.mode, &config.filter);
    rejections.extend(matched_rejections);
    ProblemOutcome {
        pairs,
        rejections,
        no_separators: false,
    }
}

/// Runs the pipeline over a corpus with a bounded worker pool. Output order
/// does not depend on scheduling: pairs are sorted by
/// (problem, lang_a, lang_b, index) after all workers finish.
pub fn run_pipeline(corpus: &[ProblemGroup], backend: &dyn Backend, config: &PipelineConfig) -> PipelineOutput {
    let workers = config.workers.clamp(1, corpus.len().max(1));
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, ProblemOutcome)>();

    std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let next = &next;
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(group) = corpus.get(i) else { break };
                let outcome = process_problem(group, backend, config);
                if tx.send((i, outcome)).is_err() {
                    break;
                }
            });
        }
    });
    drop(tx);

    let mut outcomes: Vec<(usize, ProblemOutcome)> = rx.into_iter().collect();
    outcomes.sort_by_key(|(i, _)| *i);

    let mut builder = ReportBuilder::new(config.mode);
    let mut pairs = Vec::new();
    let mut rejections = Vec::new();
    for (_, outcome) in outcomes {
        builder
            .problem(outcome.no_separators)
            .add_pairs(&outcome.pairs)
            .add_rejections(&outcome.rejections);
        pairs.extend(outcome.pairs);
        rejections.extend(outcome.rejections);
    }
    pairs.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    rejections.sort();
    log::info!(
        "{} problems, {} pairs kept, {} rejected",
        corpus.len(),
        pairs.len(),
        rejections.len()
    );

    PipelineOutput {
        pairs,
        rejections,
        report: builder.build(),
    }
}
