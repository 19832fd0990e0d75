//! Acceptance suite. Each criterion prints one PASS/FAIL line with its
//! runtime to stderr; the test fails if any criterion fails or runs over budget.

mod common;

use std::collections::BTreeMap;
use std::io::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use snippet_forge::corpus::{Language, ProblemGroup, Program};
use snippet_forge::eval::{pass_at_k, round_half_even};
use snippet_forge::filters::{is_useless_snippet, SnippetFilter, UselessReason};
use snippet_forge::lexer::{extract_comments, reconstruct, segment_by_comments, string_literal_spans};
use snippet_forge::llm::MockBackend;
use snippet_forge::pipeline::{
    run_pipeline, stage3_split_and_match, AugmentationReport, PairMode, PipelineConfig, Rejection, RejectionKind,
    ReportBuilder, RewrittenGroup,
};
use snippet_forge::schedule::{enumerate_orders, plan, Granularity, ScheduleOverrides};

const ABS_TOL: f64 = 1e-12;
const USABILITY_TOL: f64 = 0.005;

/// Probability that a uniformly random k-subset of n samples, c of them
/// correct, holds at least one correct sample. Counts subsets directly.
fn subset_oracle(n: u32, c: u32, k: u32) -> f64 {
    let correct_mask: u32 = (1u32 << c) - 1;
    let (mut total, mut hit) = (0u64, 0u64);
    for subset in 0u32..(1u32 << n) {
        if subset.count_ones() != k {
            continue;
        }
        total += 1;
        if subset & correct_mask != 0 {
            hit += 1;
        }
    }
    hit as f64 / total as f64
}

fn criterion_1_pass_at_k() {
    let mut checked = 0;
    for n in 1..=12u32 {
        for c in 0..=n {
            for k in 1..=n {
                let got: f64 = pass_at_k(n.into(), c.into(), k.into()).unwrap();
                let want = subset_oracle(n, c, k);
                assert!((got - want).abs() <= ABS_TOL, "n={n} c={c} k={k}: {got} vs {want}");
                checked += 1;
            }
            let k1: f64 = pass_at_k(n.into(), c.into(), 1).unwrap();
            assert_eq!(k1, c as f64 / n as f64, "k=1 must be exactly c/n (n={n} c={c})");
            let kn: f64 = pass_at_k(n.into(), c.into(), n.into()).unwrap();
            assert_eq!(kn, if c >= 1 { 1.0 } else { 0.0 }, "k=n (n={n} c={c})");
        }
    }
    assert_eq!(checked, (1..=12).map(|n| (n + 1) * n).sum::<u32>());
}

fn overlaps(a: &std::ops::Range<usize>, b: &std::ops::Range<usize>) -> bool {
    a.start < b.end && b.start < a.end
}

fn criterion_2_lexer_round_trip() {
    const PER_LANGUAGE: u64 = 250;
    for lang in Language::ALL {
        let mut crlf = 0;
        for seed in 0..PER_LANGUAGE {
            let g = common::random_program(lang, seed * 31 + lang as u64);
            crlf += usize::from(g.text.contains("\r\n"));
            let program = Program::new("gen", lang, g.text.as_str());
            let annotated =
                segment_by_comments(&program).unwrap_or_else(|e| panic!("{lang} seed {seed}: {e}\n{}", g.text));
            assert_eq!(reconstruct(&annotated), g.text, "{lang} seed {seed}");

            let spans: Vec<_> = extract_comments(&program)
                .unwrap()
                .into_iter()
                .map(|c| c.byte_range)
                .collect();
            let lexed_strings = string_literal_spans(&program).unwrap();
            for s in g.strings.iter().chain(&lexed_strings) {
                if let Some(c) = spans.iter().find(|c| overlaps(c, s)) {
                    panic!("{lang} seed {seed}: comment {c:?} overlaps string {s:?}\n{:?}", g.text);
                }
            }
            for planted in &g.comments {
                assert!(
                    spans.iter().any(|c| c.start <= planted.start && planted.end <= c.end),
                    "{lang} seed {seed}: comment at {planted:?} not found\n{:?}",
                    g.text
                );
            }
        }
        assert!(
            crlf > 0 && crlf < PER_LANGUAGE as usize,
            "{lang}: expected a mix of line endings"
        );
    }
}

fn criterion_3_usability_accounting() {
    let rejections = |kind, n: usize| -> Vec<Rejection> {
        (0..n)
            .map(|i| Rejection {
                problem_id: format!("q{i}"),
                lang_a: Language::Python,
                lang_b: Language::Java,
                snippet_index: None,
                kind,
                detail: String::new(),
            })
            .collect()
    };
    let mut b = ReportBuilder::new(PairMode::Unordered);
    b.accept(None, 135_654)
        .add_rejections(&rejections(RejectionKind::ParsingError, 24))
        .add_rejections(&rejections(RejectionKind::CommentsNotMatch, 425))
        .add_rejections(&rejections(RejectionKind::Filtered, 3453));
    let r = b.build();
    assert_eq!(r.initial_pairs, 139_556);
    assert_eq!(r.final_pairs, 135_654);
    assert_eq!(r.initial_pairs, r.final_pairs + r.rejected.total());
    let pct = round_half_even(r.usability_rate * 100.0, 2);
    assert!((pct - 97.20).abs() <= USABILITY_TOL, "usability {pct}");
    assert!((r.usability_percent() - 97.20).abs() <= USABILITY_TOL);
}

fn augment(input: &str, out: &std::path::Path) -> (i32, Vec<u8>, Vec<u8>) {
    let sa = out.join("sa.jsonl");
    let report = out.join("report.json");
    let status = Command::new(common::bin())
        .args(["--log-level", "off", "augment", "--mock", "--max-rejection-rate", "1"])
        .arg("--input")
        .arg(common::fixture_dir().join(input))
        .arg("--output")
        .arg(&sa)
        .arg("--report")
        .arg(&report)
        .status()
        .unwrap();
    (
        status.code().unwrap(),
        std::fs::read(sa).unwrap(),
        std::fs::read(report).unwrap(),
    )
}

fn criterion_4_mock_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    std::fs::create_dir_all(&a).unwrap();
    std::fs::create_dir_all(&b).unwrap();

    let (code, sa, report) = augment("pa_clean.jsonl", &a);
    assert_eq!(code, 0);
    let r: AugmentationReport = serde_json::from_slice(&report).unwrap();
    let expected: u64 = (0..common::FIXTURE_PROBLEMS).map(common::clean_pairs).sum();
    assert_eq!(r.problems, common::FIXTURE_PROBLEMS as u64);
    assert_eq!(r.initial_pairs, r.final_pairs + r.rejected.total());
    assert_eq!(r.final_pairs, expected);
    assert_eq!(r.usability_rate, 1.0);
    assert_eq!(sa.iter().filter(|&&b| b == b'\n').count() as u64, expected);

    let (code, sa_again, report_again) = augment("pa_clean.jsonl", &b);
    assert_eq!(code, 0);
    assert!(sa == sa_again, "SA output differs between runs");
    assert!(report == report_again, "report differs between runs");

    let (code, sa, report) = augment("pa_corrupted.jsonl", &a);
    assert_eq!(code, 0);
    let r: AugmentationReport = serde_json::from_slice(&report).unwrap();
    let per = common::CORRUPTED_PER_KIND as u64;
    assert_eq!(r.rejected.parsing, 3 * per, "parsing: 3 language pairs per problem");
    assert_eq!(
        r.rejected.comments_not_match,
        2 * per,
        "mismatch: the 2 pairs touching Java"
    );
    assert_eq!(r.rejected.filtered, 3 * per, "filtered: the import snippet in 3 pairs");
    assert_eq!(r.initial_pairs, r.final_pairs + r.rejected.total());
    let expected: u64 = (0..common::FIXTURE_PROBLEMS)
        .map(|i| match common::plant_for(i) {
            common::Plant::Clean | common::Plant::Filtered => common::clean_pairs(i),
            common::Plant::Mismatch => common::blocks_for(i) as u64,
            common::Plant::Parsing => 0,
        })
        .sum();
    assert_eq!(r.final_pairs, expected);
    let (_, sa_again, report_again) = augment("pa_corrupted.jsonl", &b);
    assert!(sa == sa_again && report == report_again, "corrupted runs differ");
}

fn load_clean_groups() -> Vec<ProblemGroup> {
    let path = common::fixture_dir().join("pa_clean.jsonl");
    snippet_forge::corpus::load_pa_corpus(&path, &Default::default())
        .unwrap()
        .groups
}

fn criterion_5_stage1_economy() {
    let groups = load_clean_groups();
    assert!(groups.iter().all(|g| g.targets.len() == 2));
    let mock = MockBackend::new();
    let out = run_pipeline(&groups, &mock, &PipelineConfig::default());
    assert!(out.report.final_pairs > 0);
    assert_eq!(mock.stage1_calls(), groups.len(), "one stage-1 call per problem");
    assert_eq!(mock.stage2_calls(), 2 * groups.len(), "one stage-2 call per target");
}

fn criterion_6_filter_table() {
    use Language::*;
    use UselessReason::*;
    let table: [(Language, &str, Option<UselessReason>); 30] = [
        (Python, "import sys\n", Some(ImportOnly)),
        (Python, "import os, sys\nfrom math import gcd\n", Some(ImportOnly)),
        (Python, "import numpy as np\n\n", Some(ImportOnly)),
        (
            Python,
            "from collections import defaultdict, Counter\n",
            Some(ImportOnly),
        ),
        (Python, "   \n\t\n", Some(WhitespaceOnly)),
        (Python, "n = int(input())\n", None),
        (Python, "import sys\nn = int(sys.stdin.readline())\n", None),
        (Python, "def solve():\n    pass\n", None),
        (Python, "print(ans)\n", None),
        (Python, "important = 1\n", None),
        (Java, "import java.util.*;\n", Some(ImportOnly)),
        (
            Java,
            "import java.io.BufferedReader;\nimport java.io.IOException;\n",
            Some(ImportOnly),
        ),
        (
            Java,
            "package com.example;\n\nimport static java.lang.Math.max;\n",
            Some(ImportOnly),
        ),
        (Java, "    }\n}\n", Some(BoilerplateOnly)),
        (Java, "};\n", Some(BoilerplateOnly)),
        (Java, "", Some(WhitespaceOnly)),
        (Java, "int n = sc.nextInt();\n", None),
        (
            Java,
            "public class Main {\n    public static void main(String[] args) {\n",
            None,
        ),
        (
            Java,
            "import java.util.*;\nScanner sc = new Scanner(System.in);\n",
            None,
        ),
        (Java, "System.out.println(ans);\n}\n", None),
        (Cpp, "#include <bits/stdc++.h>\n", Some(ImportOnly)),
        (
            Cpp,
            "#include <iostream>\n#include <vector>\nusing namespace std;\n",
            Some(ImportOnly),
        ),
        (Cpp, "#define ll long long\nusing std::cin;\n", Some(ImportOnly)),
        (Cpp, "  }\n", Some(BoilerplateOnly)),
        (Cpp, "\n\n", Some(WhitespaceOnly)),
        (Cpp, "int main() {\n", None),
        (Cpp, "cin >> n;\n", None),
        (Cpp, "#include <cstdio>\nint x = 0;\n", None),
        (Cpp, "return 0;\n}\n", None),
        (Cpp, "long long includeCount = 3;\n", None),
    ];
    let mut errors = Vec::new();
    for (i, (lang, snippet, expected)) in table.iter().enumerate() {
        let v = is_useless_snippet(snippet, *lang);
        if v.accepted != expected.is_none() || v.reason != *expected {
            errors.push(format!("case {i} ({lang}) {snippet:?}: got {v:?}, want {expected:?}"));
        }
    }
    assert!(errors.is_empty(), "{}", errors.join("\n"));
}

fn criterion_7_schedule() {
    let mut orders = enumerate_orders(2).unwrap();
    orders.sort();
    assert_eq!(orders, ["P", "PP", "PS", "S", "SP", "SS"]);
    let m = plan(
        "PS",
        Some("pa.jsonl".into()),
        Some("sa.jsonl".into()),
        &ScheduleOverrides::default(),
    )
    .unwrap();
    let shape: Vec<_> = m
        .stages
        .iter()
        .map(|s| (s.granularity, s.batch_size, s.max_seq_len, s.epochs))
        .collect();
    assert_eq!(shape, [(Granularity::P, 128, 2048, 1), (Granularity::S, 512, 1024, 1)]);
    assert_eq!(m.learning_rate, 2e-5);
    assert_eq!(m.warmup_ratio, 0.1);
    assert_eq!(m.lr_schedule, "cosine");
}

/// Builds one member program: a code line, then for each comment a comment
/// line and a code block. `filtered` replaces that snippet with an import.
fn planted_program(lang: Language, comments: &[String], filtered: Option<usize>) -> Program {
    let marker = lang.line_comment_marker();
    let import = match lang {
        Language::Python => "import sys",
        Language::Java => "import java.util.*;",
        Language::Cpp => "#include <vector>",
    };
    let statement = |i: usize| match lang {
        Language::Python => format!("y{i} = {i}"),
        _ => format!("int y{i} = {i};"),
    };
    let mut text = format!("{}\n", statement(0));
    for (i, c) in comments.iter().enumerate() {
        text.push_str(&format!("{marker} {c}\n"));
        let body = if filtered == Some(i + 1) {
            import.to_string()
        } else {
            statement(i + 1)
        };
        text.push_str(&body);
        text.push('\n');
    }
    Program::new("g", lang, text)
}

fn criterion_8_alignment_locality() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let filter = SnippetFilter::default();
    for round in 0..300 {
        let k = rng.gen_range(1..8usize);
        let base: Vec<String> = (0..k).map(|i| format!("step {i} of {round}")).collect();
        let filtered = rng.gen_bool(0.3).then(|| rng.gen_range(1..=k));
        let mut signatures: BTreeMap<Language, Vec<String>> = BTreeMap::new();
        for lang in Language::ALL {
            let mut sig = base.clone();
            if rng.gen_bool(0.3) {
                let at = rng.gen_range(0..k);
                sig[at] = format!("{lang} drift {at}");
            }
            signatures.insert(lang, sig);
        }
        let members = Language::ALL
            .iter()
            .map(|&l| segment_by_comments(&planted_program(l, &signatures[&l], filtered)).unwrap())
            .collect();
        let group = RewrittenGroup {
            problem_id: "g".into(),
            members,
        };

        // Independent enumeration over the planted signatures.
        let mut want_pairs = 0;
        let mut want_mismatch = Vec::new();
        let mut want_filtered = 0;
        for (i, &a) in Language::ALL.iter().enumerate() {
            for &b in &Language::ALL[i + 1..] {
                if signatures[&a] == signatures[&b] {
                    want_pairs += k + 1 - usize::from(filtered.is_some());
                    want_filtered += usize::from(filtered.is_some());
                } else {
                    want_mismatch.push((a, b));
                }
            }
        }

        let (pairs, rejections) = stage3_split_and_match(&group, PairMode::Unordered, &filter);
        let got_mismatch: Vec<_> = rejections
            .iter()
            .filter(|r| r.kind == RejectionKind::CommentsNotMatch)
            .map(|r| (r.lang_a, r.lang_b))
            .collect();
        assert_eq!(got_mismatch, want_mismatch, "round {round}");
        assert_eq!(pairs.len(), want_pairs, "round {round}");
        let got_filtered = rejections.iter().filter(|r| r.kind == RejectionKind::Filtered).count();
        assert_eq!(got_filtered, want_filtered, "round {round}");
        assert_eq!(rejections.len(), got_filtered + got_mismatch.len());
        let matched = 3 - want_mismatch.len();
        assert_eq!(
            pairs.len() + got_filtered,
            matched * (k + 1),
            "C(3,2)(k+1) minus exclusions"
        );

        let (ordered, ordered_rej) = stage3_split_and_match(&group, PairMode::Ordered, &filter);
        assert_eq!(ordered.len(), 2 * pairs.len());
        assert_eq!(ordered_rej.len(), 2 * rejections.len());
        for p in &pairs {
            let mirror = ordered
                .iter()
                .find(|q| q.lang_a == p.lang_b && q.lang_b == p.lang_a && q.snippet_index == p.snippet_index)
                .expect("mirrored pair");
            assert_eq!((&mirror.snippet_a, &mirror.snippet_b), (&p.snippet_b, &p.snippet_a));
        }
    }
}

#[test]
fn acceptance_suite() {
    let criteria: [(&str, fn(), Duration); 8] = [
        (
            "1 pass@k oracle equivalence",
            criterion_1_pass_at_k,
            Duration::from_secs(5),
        ),
        (
            "2 lexer round trip",
            criterion_2_lexer_round_trip,
            Duration::from_secs(5),
        ),
        (
            "3 usability accounting",
            criterion_3_usability_accounting,
            Duration::from_secs(1),
        ),
        (
            "4 mock end-to-end",
            criterion_4_mock_end_to_end,
            Duration::from_secs(10),
        ),
        ("5 stage-1 economy", criterion_5_stage1_economy, Duration::from_secs(5)),
        ("6 filter correctness", criterion_6_filter_table, Duration::from_secs(1)),
        ("7 schedule enumeration", criterion_7_schedule, Duration::from_secs(1)),
        (
            "8 alignment symmetry and locality",
            criterion_8_alignment_locality,
            Duration::from_secs(5),
        ),
    ];
    let mut failed = Vec::new();
    for (name, check, budget) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check));
        let elapsed = start.elapsed();
        let verdict = match &outcome {
            Ok(()) if elapsed <= budget => "PASS",
            _ => "FAIL",
        };
        // Straight to stderr so the lines show even when output is captured.
        let _ = writeln!(
            std::io::stderr(),
            "[{verdict}] criterion {name} ({:.3}s, budget {}s)",
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
        if verdict == "FAIL" {
            failed.push(name);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
