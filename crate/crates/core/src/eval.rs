//! Unbiased pass@k over externally produced execution verdicts.
//!
//! The estimator and the aggregation are generic over the float type so the
//! same code runs in `f32` and `f64`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Debug, Display, Write as _};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::corpus::Language;
use crate::error::EvalError;

/// Float types the estimator can run in.
pub trait Scalar: Float + FromPrimitive + Debug + Display + Serialize + Send + Sync + 'static {}

impl<T> Scalar for T where T: Float + FromPrimitive + Debug + Display + Serialize + Send + Sync + 'static {}

fn lit<F: Scalar>(v: u64) -> F {
    F::from_u64(v).expect("u64 converts to float")
}

fn check_args(n: u64, c: u64, k: u64) -> Result<(), EvalError> {
    let err = |reason| Err(EvalError::Argument { n, c, k, reason });
    if n == 0 {
        return err("n must be at least 1");
    }
    if k == 0 || k > n {
        return err("k must satisfy 1 <= k <= n");
    }
    if c > n {
        return err("c must not exceed n");
    }
    Ok(())
}

/// `1 - C(n-c, k) / C(n, k)`, evaluated as `1 - prod_{i=n-c+1}^{n} (1 - k/i)`.
///
/// `k = 1` short-circuits to `c / n` so that case is exact.
pub fn pass_at_k<F: Scalar>(n: u64, c: u64, k: u64) -> Result<F, EvalError> {
    check_args(n, c, k)?;
    if k == 1 {
        return Ok(lit::<F>(c) / lit::<F>(n));
    }
    if n - c < k {
        return Ok(F::one());
    }
    let kf = lit::<F>(k);
    let prod = (n - c + 1..=n).fold(F::one(), |acc, i| acc * (F::one() - kf / lit::<F>(i)));
    Ok(F::one() - prod)
}

pub const BRUTEFORCE_MAX_N: u64 = 20;

/// Fraction of all size-`k` subsets of `n` samples (the first `c` passing)
/// that contain at least one passing sample.
pub fn pass_at_k_bruteforce<F: Scalar>(n: u64, c: u64, k: u64) -> Result<F, EvalError> {
    if n > BRUTEFORCE_MAX_N {
        return Err(EvalError::Argument {
            n,
            c,
            k,
            reason: "brute force is limited to n <= 20",
        });
    }
    check_args(n, c, k)?;
    let passing: u32 = (1u32 << c) - 1;
    let (mut hits, mut total) = (0u64, 0u64);
    for subset in 0u32..(1u32 << n) {
        if u64::from(subset.count_ones()) != k {
            continue;
        }
        total += 1;
        if subset & passing != 0 {
            hits += 1;
        }
    }
    Ok(lit::<F>(hits) / lit::<F>(total))
}

/// A translation direction, e.g. `python-java`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LanguagePair {
    pub source: Language,
    pub target: Language,
}

impl LanguagePair {
    pub fn new(source: Language, target: Language) -> Self {
        Self { source, target }
    }
}

impl Display for LanguagePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.source, self.target)
    }
}

impl FromStr for LanguagePair {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s
            .split_once("->")
            .or_else(|| s.split_once('-'))
            .ok_or_else(|| format!("language pair {s:?} is not of the form source-target"))?;
        let source = a.parse::<Language>().map_err(|e| e.to_string())?;
        let target = b.parse::<Language>().map_err(|e| e.to_string())?;
        if source == target {
            return Err(format!("language pair {s:?} has the same language twice"));
        }
        Ok(Self { source, target })
    }
}

impl Serialize for LanguagePair {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LanguagePair {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Text(String),
            Tuple(Language, Language),
        }
        match Repr::deserialize(d)? {
            Repr::Text(s) => s.parse().map_err(serde::de::Error::custom),
            Repr::Tuple(a, b) => Ok(LanguagePair::new(a, b)),
        }
    }
}

/// Sample counts for one problem in one direction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub problem_id: String,
    pub language_pair: LanguagePair,
    pub n: u64,
    pub c: u64,
}

#[derive(Deserialize)]
struct Verdict {
    problem_id: String,
    language_pair: LanguagePair,
    sample_index: u64,
    passed: bool,
}

pub fn ingest_verdicts(path: &Path) -> Result<Vec<SampleRecord>, EvalError> {
    let file = File::open(path).map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))?;
    read_verdicts(BufReader::new(file))
}

/// Groups verdict lines into one [`SampleRecord`] per (problem, direction).
pub fn read_verdicts<R: BufRead>(reader: R) -> Result<Vec<SampleRecord>, EvalError> {
    let mut groups: BTreeMap<(String, LanguagePair), (BTreeSet<u64>, u64)> = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| EvalError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let v: Verdict = serde_json::from_str(&line).map_err(|e| EvalError::Record {
            line: idx + 1,
            message: e.to_string(),
        })?;
        let (seen, passed) = groups.entry((v.problem_id.clone(), v.language_pair)).or_default();
        if !seen.insert(v.sample_index) {
            return Err(EvalError::Duplicate(format!(
                "problem {} {} sample {}",
                v.problem_id, v.language_pair, v.sample_index
            )));
        }
        *passed += u64::from(v.passed);
    }
    Ok(groups
        .into_iter()
        .map(|((problem_id, language_pair), (seen, c))| SampleRecord {
            problem_id,
            language_pair,
            n: seen.len() as u64,
            c,
        })
        .collect())
}

/// Rounds to `decimals` places, ties to even.
pub fn round_half_even<F: Scalar>(value: F, decimals: i32) -> F {
    let scale = F::from_f64(10f64.powi(decimals)).expect("scale converts");
    let scaled = value * scale;
    let floor = scaled.floor();
    let diff = scaled - floor;
    let half = F::from_f64(0.5).expect("0.5 converts");
    let two = lit::<F>(2);
    let round_up = diff > half || (diff == half && (floor / two).fract() != F::zero());
    let rounded = if round_up { floor + F::one() } else { floor };
    rounded / scale
}

/// Mean pass@k per direction as a percentage, plus the unweighted average.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalTable<F: Scalar> {
    pub k: u64,
    pub scores: BTreeMap<LanguagePair, F>,
    pub problems: BTreeMap<LanguagePair, usize>,
    pub avg: F,
}

pub fn aggregate<F: Scalar>(records: &[SampleRecord], k: u64) -> Result<EvalTable<F>, EvalError> {
    let short: Vec<String> = records
        .iter()
        .filter(|r| r.n < k)
        .map(|r| format!("{} ({})", r.problem_id, r.language_pair))
        .collect();
    if !short.is_empty() {
        return Err(EvalError::TooFewSamples { k, problems: short });
    }

    let mut sums: BTreeMap<LanguagePair, (F, usize)> = BTreeMap::new();
    for r in records {
        let p = pass_at_k::<F>(r.n, r.c, k)?;
        let entry = sums.entry(r.language_pair).or_insert((F::zero(), 0));
        entry.0 = entry.0 + p;
        entry.1 += 1;
    }

    let hundred = lit::<F>(100);
    let scores: BTreeMap<LanguagePair, F> = sums
        .iter()
        .map(|(pair, (sum, count))| (*pair, round_half_even(*sum / lit::<F>(*count as u64) * hundred, 2)))
        .collect();
    let avg = if scores.is_empty() {
        F::zero()
    } else {
        let total = scores.values().fold(F::zero(), |acc, &s| acc + s);
        round_half_even(total / lit::<F>(scores.len() as u64), 2)
    };
    Ok(EvalTable {
        k,
        problems: sums.iter().map(|(pair, (_, n))| (*pair, *n)).collect(),
        scores,
        avg,
    })
}

impl<F: Scalar> EvalTable<F> {
    /// Plain-text table, one direction per row, AVG last.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<14} {:>8} {:>9}",
            "pair",
            "problems",
            format!("pass@{}", self.k)
        );
        for (pair, score) in &self.scores {
            let _ = writeln!(
                out,
                "{:<14} {:>8} {:>9.2}",
                pair.to_string(),
                self.problems[pair],
                score
            );
        }
        let _ = writeln!(out, "{:<14} {:>8} {:>9.2}", "AVG", "", self.avg);
        out
    }
}
