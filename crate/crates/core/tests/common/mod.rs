//! Shared generators for the integration tests.
#![allow(dead_code)]

use std::ops::Range;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use snippet_forge::corpus::{Language, Program};

pub const FIXTURE_PROBLEMS: usize = 50;
pub const CORRUPTED_PER_KIND: usize = 5;

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_snippet-forge"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Plant {
    Clean,
    /// Unterminated triple-quoted string in the Python source.
    Parsing,
    /// The Java target has one block fewer than the others.
    Mismatch,
    /// Every program opens with an import-only block.
    Filtered,
}

/// Which problems of the corrupted fixture carry which defect.
pub fn plant_for(index: usize) -> Plant {
    match index / CORRUPTED_PER_KIND {
        0 => Plant::Parsing,
        1 => Plant::Mismatch,
        2 => Plant::Filtered,
        _ => Plant::Clean,
    }
}

/// Number of code blocks per program of problem `index`.
pub fn blocks_for(index: usize) -> usize {
    3 + index % 3
}

struct Step {
    py: String,
    java: String,
    cpp: String,
}

fn steps(index: usize, count: usize) -> Vec<Step> {
    let pool = [
        |i: usize| Step {
            py: format!("n = {}\n", i + 2),
            java: format!("int n = {};\n", i + 2),
            cpp: format!("int n = {};\n", i + 2),
        },
        |i: usize| Step {
            py: format!("total = 0\nfor j in range(n):\n    total += j * {}\n", i % 7 + 1),
            java: format!(
                "int total = 0;\nfor (int j = 0; j < n; j++) {{\n    total += j * {};\n}}\n",
                i % 7 + 1
            ),
            cpp: format!(
                "int total = 0;\nfor (int j = 0; j < n; ++j) {{\n    total += j * {};\n}}\n",
                i % 7 + 1
            ),
        },
        |i: usize| Step {
            py: format!("if total % 2 == {}:\n    total //= 2\n", i % 2),
            java: format!("if (total % 2 == {}) {{\n    total /= 2;\n}}\n", i % 2),
            cpp: format!("if (total % 2 == {}) {{\n    total /= 2;\n}}\n", i % 2),
        },
        |_: usize| Step {
            py: "label = \"sum # of steps\"\n".into(),
            java: "String label = \"sum // of steps\";\n".into(),
            cpp: "std::string label = \"sum /* of */ steps\";\n".into(),
        },
        |_: usize| Step {
            py: "print(label, total)\n".into(),
            java: "System.out.println(label + \" \" + total);\n".into(),
            cpp: "std::cout << label << ' ' << total << '\\n';\n".into(),
        },
    ];
    (0..count).map(|s| pool[s % pool.len()](index + s)).collect()
}

fn indent(text: &str, by: &str) -> String {
    text.split_inclusive('\n').map(|l| format!("{by}{l}")).collect()
}

/// The three programs of fixture problem `index`: Python source first.
pub fn fixture_problem(index: usize, plant: Plant) -> Vec<Program> {
    let id = format!("p{index:03}");
    let b = blocks_for(index);
    let body = steps(index, b);

    let mut py: Vec<String> = body.iter().map(|s| s.py.clone()).collect();
    let mut java: Vec<String> = body.iter().map(|s| indent(&s.java, "        ")).collect();
    let mut cpp: Vec<String> = body.iter().map(|s| indent(&s.cpp, "    ")).collect();

    if plant == Plant::Parsing {
        py.last_mut().unwrap().push_str("doc = \"\"\"left open\n");
    }
    if plant == Plant::Mismatch {
        let last = java.pop().unwrap();
        java.last_mut().unwrap().push_str(&last);
    }

    let mut py_src = String::new();
    let mut java_src = String::new();
    let mut cpp_src = String::from("#include <iostream>\n#include <string>\n");
    if plant == Plant::Filtered {
        py_src.push_str("import sys\n\n");
        java_src.push_str("import java.util.*;\n\n");
        cpp_src.push('\n');
    }
    py_src.push_str(&py.join("\n"));

    java[0] = format!(
        "public class Main {{\n    public static void main(String[] args) {{\n{}",
        java[0]
    );
    java.last_mut().unwrap().push_str("    }\n}\n");
    java_src.push_str(&java.join("\n"));

    cpp[0] = format!("int main() {{\n{}", cpp[0]);
    cpp.last_mut().unwrap().push_str("    return 0;\n}\n");
    cpp_src.push_str(&cpp.join("\n"));

    vec![
        Program::new(&id, Language::Python, py_src),
        Program::new(&id, Language::Java, java_src),
        Program::new(&id, Language::Cpp, cpp_src),
    ]
}

pub fn fixture_corpus(corrupted: bool) -> Vec<Program> {
    (0..FIXTURE_PROBLEMS)
        .flat_map(|i| fixture_problem(i, if corrupted { plant_for(i) } else { Plant::Clean }))
        .collect()
}

/// Snippet pairs a clean problem yields in unordered mode.
pub fn clean_pairs(index: usize) -> u64 {
    3 * blocks_for(index) as u64
}

/// A generated program plus the byte ranges the generator itself placed
/// comments and string literals at.
pub struct Generated {
    pub text: String,
    pub comments: Vec<Range<usize>>,
    pub strings: Vec<Range<usize>>,
}

#[derive(Clone, Copy)]
enum Piece {
    Code,
    LineComment,
    BlockComment,
    Str,
}

fn push(out: &mut String, ranges: &mut Vec<Range<usize>>, s: &str) {
    let start = out.len();
    out.push_str(s);
    ranges.push(start..out.len());
}

fn line_comment(lang: Language, rng: &mut ChaCha8Rng) -> String {
    let marker = lang.line_comment_marker();
    let bodies = [
        "read input",
        "don't \"quote\" me",
        "a /* b */ c",
        "x = 'y' # z",
        "",
        "TODO: fix // later",
    ];
    format!("{marker} {}", bodies.choose(rng).unwrap())
}

fn block_comment(rng: &mut ChaCha8Rng, eol: &str) -> String {
    let bodies = [
        "/* plain */".to_string(),
        format!("/* spans{eol}   two lines \"with quotes\" */"),
        "/** doc // with slashes */".to_string(),
        "/* ' apostrophe */".to_string(),
        format!("/*{eol} * star block{eol} */"),
    ];
    bodies.choose(rng).unwrap().clone()
}

fn string_literal(lang: Language, rng: &mut ChaCha8Rng, eol: &str) -> String {
    match lang {
        Language::Python => {
            let options = [
                "\"# not a comment\"".to_string(),
                "'it''s'".to_string(),
                "'\\'#'".to_string(),
                format!("\"\"\"doc # inside{eol}second ' line\"\"\""),
                "r'\\d+ # regex'".to_string(),
                "f\"{x} # {y}\"".to_string(),
                "b'\\x00#'".to_string(),
            ];
            options.choose(rng).unwrap().clone()
        }
        Language::Java => {
            let options = [
                "\"// not a comment\"".to_string(),
                "\"/* nor this */\"".to_string(),
                "\"escaped \\\" // quote\"".to_string(),
                "'\"'".to_string(),
                "'\\''".to_string(),
                format!("\"\"\"{eol}    text // block{eol}    \"\"\""),
            ];
            options.choose(rng).unwrap().clone()
        }
        Language::Cpp => {
            let options = [
                "\"// not a comment\"".to_string(),
                "R\"x(raw // )\" /* )x\"".to_string(),
                "u8R\"(/* raw */)\"".to_string(),
                "'\\''".to_string(),
                "L\"wide // str\"".to_string(),
                "\"a\\\\\"".to_string(),
            ];
            options.choose(rng).unwrap().clone()
        }
    }
}

fn code_fragment(lang: Language, rng: &mut ChaCha8Rng) -> &'static str {
    let options: &[&str] = match lang {
        Language::Python => &["x = 1", "y = x * 2", "def f(a):", "    return a", "print(y)"],
        Language::Java => &["int x = 1;", "x /= 2;", "if (x > 0) {", "}", "long big = 1_000_000L;"],
        Language::Cpp => &[
            "int x = 1;",
            "x /= 2;",
            "auto n = 1'000'000;",
            "if (x) {",
            "}",
            "#include <vector>",
        ],
    };
    options.choose(rng).unwrap()
}

/// Random program mixing code, comments and tricky string literals.
pub fn random_program(lang: Language, seed: u64) -> Generated {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eol = if rng.gen_bool(0.5) { "\r\n" } else { "\n" };
    let mut g = Generated {
        text: String::new(),
        comments: Vec::new(),
        strings: Vec::new(),
    };
    let lines = rng.gen_range(1..25);
    for _ in 0..lines {
        if rng.gen_bool(0.2) {
            g.text.push_str(["    ", "\t", "  "].choose(&mut rng).unwrap());
        }
        let pieces = rng.gen_range(1..4);
        let mut open_line_comment = false;
        for _ in 0..pieces {
            let choice = match rng.gen_range(0..4) {
                0 => Piece::Code,
                1 => Piece::LineComment,
                2 if lang != Language::Python => Piece::BlockComment,
                2 => Piece::Code,
                _ => Piece::Str,
            };
            match choice {
                Piece::Code => g.text.push_str(code_fragment(lang, &mut rng)),
                Piece::Str => {
                    g.text.push_str("s = ");
                    let lit = string_literal(lang, &mut rng, eol);
                    push(&mut g.text, &mut g.strings, &lit);
                }
                Piece::BlockComment => {
                    let c = block_comment(&mut rng, eol);
                    push(&mut g.text, &mut g.comments, &c);
                }
                Piece::LineComment => {
                    let c = line_comment(lang, &mut rng);
                    push(&mut g.text, &mut g.comments, &c);
                    open_line_comment = true;
                }
            }
            if open_line_comment {
                break;
            }
            g.text.push(' ');
        }
        if rng.gen_bool(0.1) {
            g.text.push_str(eol);
        }
        g.text.push_str(eol);
    }
    if rng.gen_bool(0.3) {
        let trimmed = g.text.trim_end_matches(['\r', '\n']).len();
        g.text.truncate(trimmed);
    }
    g
}
