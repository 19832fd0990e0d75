//! Data model for program-aligned (PA) and snippet-aligned (SA) corpora,
//! plus line-delimited JSON readers and writers for both.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::CorpusError;

/// A programming language the lexer and pipeline understand.
///
/// Ordering follows declaration order and is used as the canonical
/// orientation of unordered language pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    Python,
    Java,
    Cpp,
}

impl Language {
    pub const ALL: [Language; 3] = [Language::Python, Language::Java, Language::Cpp];

    pub fn id(self) -> &'static str {
        match self {
            Language::Python => "python",
            Language::Java => "java",
            Language::Cpp => "cpp",
        }
    }

    pub fn line_comment_marker(self) -> &'static str {
        match self {
            Language::Python => "#",
            Language::Java | Language::Cpp => "//",
        }
    }

    /// Python docstrings are string literals, not block comments.
    pub fn block_comment_delims(self) -> Option<(&'static str, &'static str)> {
        match self {
            Language::Python => None,
            Language::Java | Language::Cpp => Some(("/*", "*/")),
        }
    }

    /// Opening tokens of string-like literals, longest first.
    pub fn string_delimiters(self) -> &'static [&'static str] {
        match self {
            Language::Python => &["\"\"\"", "'''", "\"", "'"],
            Language::Java => &["\"\"\"", "\"", "'"],
            Language::Cpp => &["R\"", "\"", "'"],
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Language {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "python" | "py" => Ok(Language::Python),
            "java" => Ok(Language::Java),
            "cpp" | "c++" => Ok(Language::Cpp),
            other => Err(CorpusError::UnknownLanguage(other.to_string())),
        }
    }
}

/// One program of a PA corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Program {
    pub problem_id: String,
    pub language: Language,
    pub source_text: String,
}

impl Program {
    pub fn new(problem_id: impl Into<String>, language: Language, source_text: impl Into<String>) -> Self {
        Self {
            problem_id: problem_id.into(),
            language,
            source_text: source_text.into(),
        }
    }
}

/// A source program together with its translations into the target languages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProblemGroup {
    pub problem_id: String,
    pub source: Program,
    pub targets: Vec<Program>,
}

impl ProblemGroup {
    /// Builds a group, checking that ids agree and no language repeats.
    pub fn new(source: Program, targets: Vec<Program>) -> Result<Self, CorpusError> {
        if targets.is_empty() {
            return Err(CorpusError::InvalidGroup(format!(
                "problem {} has no target programs",
                source.problem_id
            )));
        }
        let mut seen = HashSet::new();
        for p in std::iter::once(&source).chain(&targets) {
            if p.problem_id != source.problem_id {
                return Err(CorpusError::InvalidGroup(format!(
                    "problem id mismatch: {} vs {}",
                    p.problem_id, source.problem_id
                )));
            }
            if !seen.insert(p.language) {
                return Err(CorpusError::InvalidGroup(format!(
                    "problem {} has two {} programs",
                    source.problem_id, p.language
                )));
            }
        }
        Ok(Self {
            problem_id: source.problem_id.clone(),
            source,
            targets,
        })
    }

    /// All members, targets first and the source last.
    pub fn members(&self) -> impl Iterator<Item = &Program> {
        self.targets.iter().chain(std::iter::once(&self.source))
    }
}

/// One aligned snippet pair of the SA corpus. Field order is the on-disk order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnippetPair {
    pub problem_id: String,
    pub snippet_index: usize,
    pub lang_a: Language,
    pub lang_b: Language,
    pub comment: String,
    pub snippet_a: String,
    pub snippet_b: String,
}

impl SnippetPair {
    pub fn sort_key(&self) -> (&str, Language, Language, usize) {
        (&self.problem_id, self.lang_a, self.lang_b, self.snippet_index)
    }
}

/// A non-fatal problem with one input line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for RecordError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub pivot: Language,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            pivot: Language::Python,
        }
    }
}

/// Result of loading a PA corpus.
///
/// `parsed_records` counts lines that decoded into a valid record. Every such
/// record either ends up in a group or is counted in `skipped_records`.
#[derive(Debug, Default)]
pub struct LoadedCorpus {
    pub groups: Vec<ProblemGroup>,
    pub parsed_records: usize,
    pub skipped_records: usize,
    pub skipped_groups: usize,
    pub errors: Vec<RecordError>,
}

#[derive(Deserialize)]
struct PaRecord {
    problem_id: String,
    language: String,
    source_text: String,
}

/// Loads a PA corpus and groups it by problem id around the pivot language.
pub fn load_pa_corpus(path: &Path, options: &LoadOptions) -> Result<LoadedCorpus, CorpusError> {
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    read_pa_corpus(BufReader::new(file), options)
}

pub fn read_pa_corpus<R: BufRead>(reader: R, options: &LoadOptions) -> Result<LoadedCorpus, CorpusError> {
    let mut out = LoadedCorpus::default();
    let mut by_problem: BTreeMap<String, BTreeMap<Language, Program>> = BTreeMap::new();

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| CorpusError::Read(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PaRecord = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                out.errors.push(RecordError {
                    line: line_no,
                    message: format!("malformed record: {e}"),
                });
                continue;
            }
        };
        let language = match record.language.parse::<Language>() {
            Ok(l) => l,
            Err(e) => {
                out.errors.push(RecordError {
                    line: line_no,
                    message: e.to_string(),
                });
                continue;
            }
        };
        if record.source_text.is_empty() {
            out.errors.push(RecordError {
                line: line_no,
                message: "empty source_text".into(),
            });
            continue;
        }
        out.parsed_records += 1;
        let members = by_problem.entry(record.problem_id.clone()).or_default();
        if members.contains_key(&language) {
            out.skipped_records += 1;
            out.errors.push(RecordError {
                line: line_no,
                message: format!("duplicate {} program for problem {}", language, record.problem_id),
            });
            continue;
        }
        members.insert(
            language,
            Program {
                problem_id: record.problem_id,
                language,
                source_text: record.source_text,
            },
        );
    }

    for (problem_id, mut members) in by_problem {
        let Some(source) = members.remove(&options.pivot) else {
            log::warn!("problem {problem_id}: no {} program, skipping", options.pivot);
            out.skipped_groups += 1;
            out.skipped_records += members.len();
            continue;
        };
        if members.is_empty() {
            log::warn!("problem {problem_id}: no target programs, skipping");
            out.skipped_groups += 1;
            out.skipped_records += 1;
            continue;
        }
        let targets: Vec<Program> = members.into_values().collect();
        out.groups.push(ProblemGroup::new(source, targets)?);
    }
    Ok(out)
}

/// Writes PA records, one per line, in the order given.
pub fn write_pa_corpus<'a, I>(programs: I, path: &Path) -> Result<usize, CorpusError>
where
    I: IntoIterator<Item = &'a Program>,
{
    write_jsonl_atomic(path, programs)
}

/// Writes SA pairs as JSONL. Output is byte-deterministic for identical input.
pub fn write_sa_corpus(pairs: &[SnippetPair], path: &Path) -> Result<usize, CorpusError> {
    write_jsonl_atomic(path, pairs)
}

pub fn write_sa_records<W: Write>(pairs: &[SnippetPair], mut writer: W) -> Result<usize, CorpusError> {
    for pair in pairs {
        serde_json::to_writer(&mut writer, pair).map_err(|e| CorpusError::Write(e.to_string()))?;
        writer.write_all(b"\n").map_err(|e| CorpusError::Write(e.to_string()))?;
    }
    Ok(pairs.len())
}

/// Reads an SA corpus. Malformed lines are reported and skipped.
pub fn load_sa_corpus(path: &Path) -> Result<(Vec<SnippetPair>, Vec<RecordError>), CorpusError> {
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    read_sa_corpus(BufReader::new(file))
}

pub fn read_sa_corpus<R: BufRead>(reader: R) -> Result<(Vec<SnippetPair>, Vec<RecordError>), CorpusError> {
    let mut pairs = Vec::new();
    let mut errors = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CorpusError::Read(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<SnippetPair>(&line) {
            Ok(p) => pairs.push(p),
            Err(e) => errors.push(RecordError {
                line: idx + 1,
                message: format!("malformed record: {e}"),
            }),
        }
    }
    Ok((pairs, errors))
}

/// Serializes `items` as JSONL into a temp file next to `path`, then renames it
/// into place so a failed write never leaves a partial file behind.
pub(crate) fn write_jsonl_atomic<T, I>(path: &Path, items: I) -> Result<usize, CorpusError>
where
    T: Serialize,
    I: IntoIterator<Item = T>,
{
    let mut count = 0;
    write_atomic(path, |w| {
        for item in items {
            serde_json::to_writer(&mut *w, &item)?;
            w.write_all(b"\n")?;
            count += 1;
        }
        Ok(())
    })?;
    Ok(count)
}

pub(crate) fn write_atomic<F>(path: &Path, body: F) -> Result<(), CorpusError>
where
    F: FnOnce(&mut BufWriter<&mut File>) -> Result<(), Box<dyn std::error::Error>>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CorpusError::io(path, e))?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        body(&mut w).map_err(|e| CorpusError::Write(format!("{}: {e}", path.display())))?;
        w.flush().map_err(|e| CorpusError::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| CorpusError::io(path, e.error))?;
    Ok(())
}
