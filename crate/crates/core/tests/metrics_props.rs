use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use std::process::{Command, Stdio};

use maintainkit::metrics_dynamic::{self, PassAtKInput};
use maintainkit::metrics_static;
use maintainkit::parser::{self, TokenCensus};
use proptest::prelude::*;
use serde_json::Value;

const NAMES: [&str; 5] = ["alpha", "beta", "gamma", "delta", "eps"];

#[derive(Debug, Clone)]
enum Stmt {
    Assign(usize, usize, i64),
    If(usize, usize, i64, bool),
    For(usize, usize, i64),
    While(usize, usize, i64),
    Comprehension(usize, usize, i64),
    Ternary(usize, usize, i64),
    Assert(usize, usize),
    Try(usize, bool),
    Match(usize, u8, bool),
    Membership(usize, usize),
    Comment(u8),
    Text(usize),
}

fn stmt() -> impl Strategy<Value = Stmt> {
    let n = 0usize..NAMES.len();
    let lit = -5i64..50;
    prop_oneof![
        (n.clone(), n.clone(), lit.clone()).prop_map(|(a, b, c)| Stmt::Assign(a, b, c)),
        (n.clone(), n.clone(), lit.clone(), any::<bool>()).prop_map(|(a, b, c, d)| Stmt::If(a, b, c, d)),
        (n.clone(), n.clone(), lit.clone()).prop_map(|(a, b, c)| Stmt::For(a, b, c)),
        (n.clone(), n.clone(), lit.clone()).prop_map(|(a, b, c)| Stmt::While(a, b, c)),
        (n.clone(), n.clone(), lit.clone()).prop_map(|(a, b, c)| Stmt::Comprehension(a, b, c)),
        (n.clone(), n.clone(), lit.clone()).prop_map(|(a, b, c)| Stmt::Ternary(a, b, c)),
        (n.clone(), n.clone()).prop_map(|(a, b)| Stmt::Assert(a, b)),
        (n.clone(), any::<bool>()).prop_map(|(a, b)| Stmt::Try(a, b)),
        (n.clone(), 1u8..4, any::<bool>()).prop_map(|(a, b, c)| Stmt::Match(a, b, c)),
        (n.clone(), n.clone()).prop_map(|(a, b)| Stmt::Membership(a, b)),
        (0u8..3).prop_map(Stmt::Comment),
        n.prop_map(Stmt::Text),
    ]
}

fn render(stmt: &Stmt, indent: &str, out: &mut String) {
    let line = |out: &mut String, depth: usize, text: &str| {
        out.push_str(indent);
        out.push_str(&"    ".repeat(depth));
        out.push_str(text);
        out.push('\n');
    };
    match *stmt {
        Stmt::Assign(a, b, n) => line(out, 0, &format!("{} = {} * {n} - 1", NAMES[a], NAMES[b])),
        Stmt::If(a, b, n, with_else) => {
            line(out, 0, &format!("if {} > {n} or not {}:", NAMES[a], NAMES[b]));
            line(out, 1, &format!("{} = {}", NAMES[b], NAMES[a]));
            if with_else {
                line(out, 0, &format!("elif {} is not None:", NAMES[b]));
                line(out, 1, "pass");
                line(out, 0, "else:");
                line(out, 1, &format!("{} = {n}", NAMES[a]));
            }
        }
        Stmt::For(a, b, n) => {
            line(out, 0, &format!("for {} in range({n}):", NAMES[a]));
            line(out, 1, &format!("{} += {}", NAMES[b], NAMES[a]));
        }
        Stmt::While(a, b, n) => {
            line(out, 0, &format!("while {} < {n} and {} and not {}:", NAMES[a], NAMES[b], NAMES[a]));
            line(out, 1, &format!("{} += 1", NAMES[a]));
        }
        Stmt::Comprehension(a, b, n) => line(
            out,
            0,
            &format!("{} = [{b} for {b} in range({n}) if {b} % 2 and {b}]", NAMES[a], b = NAMES[b]),
        ),
        Stmt::Ternary(a, b, n) => line(out, 0, &format!("{} = {} if {} else {n}", NAMES[a], NAMES[b], NAMES[a])),
        Stmt::Assert(a, b) => line(out, 0, &format!("assert {} or {}, 'message'", NAMES[a], NAMES[b])),
        Stmt::Try(a, two) => {
            line(out, 0, "try:");
            line(out, 1, &format!("{} = int({})", NAMES[a], NAMES[a]));
            line(out, 0, "except ValueError:");
            line(out, 1, &format!("{} = None", NAMES[a]));
            if two {
                line(out, 0, "except (TypeError, KeyError) as exc:");
                line(out, 1, "raise RuntimeError(exc)");
            }
        }
        Stmt::Match(a, arms, guard) => {
            line(out, 0, &format!("match {}:", NAMES[a]));
            for arm in 0..arms {
                line(out, 1, &format!("case {arm}:"));
                line(out, 2, "pass");
            }
            if guard {
                line(out, 1, &format!("case [x, y] if x or y and {}:", NAMES[a]));
                line(out, 2, "pass");
            }
            line(out, 1, "case _:");
            line(out, 2, &format!("{} = ...", NAMES[a]));
        }
        Stmt::Membership(a, b) => line(out, 0, &format!("{} = {} not in ({}, True, 'x')", NAMES[a], NAMES[b], NAMES[a])),
        Stmt::Comment(k) => line(out, 0, &format!("# note {k}")),
        Stmt::Text(a) => line(out, 0, &format!("{} = f\"{{{}}} items\" + \"\"\"two\nlines\"\"\"", NAMES[a], NAMES[a])),
    }
}

#[derive(Debug, Clone)]
struct Function {
    params: (usize, usize),
    docstring: bool,
    body: Vec<Stmt>,
}

#[derive(Debug, Clone)]
struct Program {
    header: Vec<Stmt>,
    functions: Vec<Function>,
}

fn program() -> impl Strategy<Value = Program> {
    let function = (0usize..5, 0usize..5, any::<bool>(), prop::collection::vec(stmt(), 1..5))
        .prop_map(|(p, q, docstring, body)| Function { params: (p, q), docstring, body });
    (prop::collection::vec(stmt(), 0..4), prop::collection::vec(function, 0..3))
        .prop_map(|(header, functions)| Program { header, functions })
}

impl Program {
    fn source(&self) -> String {
        let mut out = String::new();
        for s in &self.header {
            render(s, "", &mut out);
        }
        for (i, f) in self.functions.iter().enumerate() {
            let (p, q) = f.params;
            let params = if p == q { NAMES[p].to_string() } else { format!("{}, {}", NAMES[p], NAMES[q]) };
            out.push_str(&format!("\ndef helper_{i}({params}):\n"));
            if f.docstring {
                out.push_str("    \"\"\"Summary line.\n\n    More detail.\n    \"\"\"\n");
            }
            for s in &f.body {
                render(s, "    ", &mut out);
            }
            out.push_str(&format!("    return {}\n", NAMES[p]));
        }
        out
    }
}

fn oracle(sources: &[String]) -> Vec<Value> {
    let script = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/oracle.py");
    let mut child = Command::new("python3")
        .arg(script)
        .arg("--batch")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .expect("python3 runs");
    let input = serde_json::to_vec(sources).unwrap();
    child.stdin.take().unwrap().write_all(&input).unwrap();
    let output = child.wait_with_output().unwrap();
    assert!(output.status.success(), "oracle failed");
    serde_json::from_slice(&output.stdout).unwrap()
}

fn rename(source: &str, mapping: &HashMap<&str, String>) -> String {
    let tree = parser::parse_source(source).unwrap();
    let mut spans: Vec<_> = tree.root.preorder().filter(|n| n.kind == "identifier").map(|n| n.span.clone()).collect();
    spans.sort_by_key(|s| s.start);
    spans.dedup();
    let mut out = String::new();
    let mut cursor = 0;
    for span in spans {
        let name = &source[span.clone()];
        out.push_str(&source[cursor..span.start]);
        out.push_str(mapping.get(name).map(String::as_str).unwrap_or(name));
        cursor = span.end;
    }
    out.push_str(&source[cursor..]);
    out
}

fn renaming() -> impl Strategy<Value = HashMap<&'static str, String>> {
    Just(NAMES.to_vec()).prop_shuffle().prop_map(|shuffled| {
        NAMES.iter().zip(shuffled).map(|(from, to)| (*from, format!("{to}_renamed"))).collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 4, ..ProptestConfig::default() })]

    #[test]
    fn census_blocks_and_lines_match_the_independent_oracle(programs in prop::collection::vec(program(), 80)) {
        let sources: Vec<String> = programs.iter().map(Program::source).collect();
        let expected = oracle(&sources);
        for (source, want) in sources.iter().zip(expected) {
            let c = parser::token_census(source).unwrap();
            let got = [c.distinct_operators, c.total_operators, c.distinct_operands, c.total_operands];
            let keys = ["distinct_operators", "total_operators", "distinct_operands", "total_operands"];
            let want_census: Vec<usize> = keys.iter().map(|k| want[k].as_u64().unwrap() as usize).collect();
            prop_assert_eq!(got.to_vec(), want_census, "census of\n{}", source);
            let blocks = metrics_static::block_complexities(&parser::parse_source(source).unwrap());
            let want_blocks: Vec<u32> = want["blocks"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap() as u32).collect();
            prop_assert_eq!(blocks, want_blocks, "blocks of\n{}", source);
            let lines = parser::line_census(source);
            prop_assert_eq!(lines.sloc as u64, want["sloc"].as_u64().unwrap(), "sloc of\n{}", source);
            prop_assert_eq!(lines.comment_lines as u64, want["comment_lines"].as_u64().unwrap(), "comments of\n{}", source);
            prop_assert_eq!(lines.total_lines as u64, want["total_lines"].as_u64().unwrap());
        }
    }
}

proptest! {
    #[test]
    fn kind_sequence_and_mi_survive_renaming(p in program(), mapping in renaming()) {
        let source = p.source();
        prop_assume!(!source.trim().is_empty());
        let renamed = rename(&source, &mapping);
        let a = parser::node_kind_sequence(&parser::parse_source(&source).unwrap());
        let b = parser::node_kind_sequence(&parser::parse_source(&renamed).unwrap());
        prop_assert_eq!(a, b);
        let before = metrics_static::static_report(&source);
        let after = metrics_static::static_report(&renamed);
        if let (Ok(before), Ok(after)) = (before, after) {
            prop_assert_eq!(before.maintainability_index, after.maintainability_index);
        }
        prop_assert_eq!(metrics_dynamic::ast_similarity(&source, &renamed).unwrap(), 1.0);
    }

    #[test]
    fn census_totals_equal_the_token_stream(p in program()) {
        let source = p.source();
        let tree = parser::parse_source(&source).unwrap();
        let tokens = parser::tokens(&tree, &source);
        let census = parser::token_census(&source).unwrap();
        prop_assert_eq!(census.total_operators + census.total_operands, tokens.len());
        let ops = tokens.iter().filter(|t| t.class == parser::TokenClass::Operator).count();
        prop_assert_eq!(census.total_operators, ops);
    }

    #[test]
    fn parsing_is_deterministic(p in program()) {
        let source = p.source();
        let first = parser::parse_source(&source).unwrap();
        let second = parser::parse_source(&source).unwrap();
        prop_assert_eq!(first.root, second.root);
    }

    #[test]
    fn mi_decreases_in_volume_complexity_and_length(
        v in 1.5f64..1e6, g in 1.0f64..50.0, l in 1usize..5000, c in 0.0f64..=1.0, dv in 0.5f64..100.0, dg in 0.25f64..10.0, dl in 1usize..50
    ) {
        let base = metrics_static::maintainability_index_unclamped(v, g, l, c);
        prop_assert!(metrics_static::maintainability_index_unclamped(v + dv, g, l, c) < base);
        prop_assert!(metrics_static::maintainability_index_unclamped(v, g + dg, l, c) < base);
        prop_assert!(metrics_static::maintainability_index_unclamped(v, g, l + dl, c) < base);
        let clamped = metrics_static::maintainability_index(v, g, l, c).unwrap();
        prop_assert!((0.0..=100.0).contains(&clamped));
    }

    #[test]
    fn volume_is_monotone_in_length(n1 in 1usize..20, n2 in 0usize..20, extra_ops in 0usize..40, extra_operands in 0usize..40, more in 1usize..30) {
        let census = TokenCensus { distinct_operators: n1, total_operators: n1 + extra_ops, distinct_operands: n2, total_operands: n2 + extra_operands };
        let longer = TokenCensus { total_operators: census.total_operators + more, ..census };
        prop_assert!(metrics_static::halstead_volume(&longer) >= metrics_static::halstead_volume(&census));
    }

    #[test]
    fn pass_at_k_is_monotone(n in 1u64..40, c in 0u64..40, k in 1u64..40) {
        prop_assume!(c <= n && k <= n);
        let here = metrics_dynamic::pass_at_k(PassAtKInput::new(n, c, k).unwrap());
        if c < n {
            prop_assert!(metrics_dynamic::pass_at_k(PassAtKInput::new(n, c + 1, k).unwrap()) >= here);
        }
        if k < n {
            prop_assert!(metrics_dynamic::pass_at_k(PassAtKInput::new(n, c, k + 1).unwrap()) >= here);
        }
        prop_assert!((0.0..=1.0).contains(&here));
    }

    #[test]
    fn diff_volume_is_exact_and_minimal(
        a in prop::collection::vec(0u8..6, 1..30), b in prop::collection::vec(0u8..6, 0..30)
    ) {
        let lines = |xs: &[u8]| xs.iter().map(|x| format!("v{x} = {x}\n")).collect::<String>();
        let (old, new) = (lines(&a), lines(&b));
        let d = metrics_dynamic::code_diff(&old, &new).unwrap();
        prop_assert_eq!(d.original_sloc, a.len());
        prop_assert_eq!(d.per, d.abs as f64 * 100.0 / d.original_sloc as f64);
        let mut table = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for i in (0..a.len()).rev() {
            for j in (0..b.len()).rev() {
                table[i][j] = if a[i] == b[j] { table[i + 1][j + 1] + 1 } else { table[i + 1][j].max(table[i][j + 1]) };
            }
        }
        prop_assert_eq!(d.abs, a.len() + b.len() - 2 * table[0][0]);
        prop_assert_eq!(metrics_dynamic::code_diff(&old, &old).unwrap().abs, 0);
    }
}
