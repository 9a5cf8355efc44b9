//! Benchmark problems, requirement-change variants, and their line-delimited
//! JSON record format.
//!
//! A dataset file holds one JSON object per line. Parent problems carry
//! `id`, `level`, `source_benchmark`, `raw_problem`, `raw_solution`,
//! `raw_test_input` (and optionally `interface_name`); variants carry
//! `parent_id`, `prompt_type`, `input_format`, `output_format`,
//! `new_problem`, `new_solution`, `test_input`. A record is a variant iff it
//! has a `prompt_type` field.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::parser::{self, Node, SyntaxError};

/// Minimum number of assertions a variant must carry.
pub const MIN_VARIANT_TESTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ChangePattern {
    #[serde(rename = "PROMPT_SELF_INVOKING")]
    Extension,
    #[serde(rename = "PROMPT_INTERFACE")]
    Interface,
    #[serde(rename = "PROMPT_DATA_STRUCTURE")]
    DataStructure,
    #[serde(rename = "PROMPT_ERROR_HANDLING")]
    ErrorHandling,
}

impl ChangePattern {
    pub const ALL: [ChangePattern; 4] =
        [ChangePattern::Extension, ChangePattern::Interface, ChangePattern::DataStructure, ChangePattern::ErrorHandling];

    pub fn tag(self) -> &'static str {
        match self {
            ChangePattern::Extension => "PROMPT_SELF_INVOKING",
            ChangePattern::Interface => "PROMPT_INTERFACE",
            ChangePattern::DataStructure => "PROMPT_DATA_STRUCTURE",
            ChangePattern::ErrorHandling => "PROMPT_ERROR_HANDLING",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.tag() == tag)
    }

    /// Short name used in paths and on the command line.
    pub fn short(self) -> &'static str {
        match self {
            ChangePattern::Extension => "ext",
            ChangePattern::Interface => "int",
            ChangePattern::DataStructure => "dst",
            ChangePattern::ErrorHandling => "err",
        }
    }
}

impl fmt::Display for ChangePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

impl FromStr for ChangePattern {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|p| p.short() == s || p.tag() == s)
            .ok_or_else(|| format!("unknown change pattern `{s}` (expected ext, int, dst or err)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Entry,
    Mixture,
    Competition,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Problem {
    pub id: String,
    pub level: Level,
    pub source_benchmark: String,
    #[serde(rename = "raw_problem")]
    pub statement: String,
    #[serde(rename = "raw_solution")]
    pub solution: String,
    #[serde(rename = "raw_test_input")]
    pub tests: Vec<String>,
    pub interface_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemVariant {
    pub parent_id: String,
    #[serde(rename = "prompt_type")]
    pub pattern: ChangePattern,
    pub input_format: String,
    pub output_format: String,
    #[serde(rename = "new_problem")]
    pub statement: String,
    #[serde(rename = "new_solution")]
    pub solution: String,
    #[serde(rename = "test_input")]
    pub tests: Vec<String>,
}

impl ProblemVariant {
    /// Entry point the variant's assertions call.
    pub fn interface_name(&self) -> Result<String, InterfaceError> {
        derive_interface_from_tests(&self.tests)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub problems: Vec<Problem>,
    pub variants: Vec<ProblemVariant>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Record {
    Problem(Problem),
    Variant(ProblemVariant),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum InterfaceError {
    #[error("tests call more than one top-level function: {0:?}")]
    Ambiguous(Vec<String>),
    #[error("test {0} does not call any non-builtin function")]
    NoCall(usize),
    #[error("no tests to derive an interface from")]
    NoTests,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RecordError {
    #[error("field `{field}`: {reason}")]
    Schema { field: String, reason: String },
    #[error("assertion {index} does not parse as a single assert statement: {reason}")]
    AssertionParse { index: usize, reason: String },
    #[error("interface: {0}")]
    Interface(#[from] InterfaceError),
}

impl RecordError {
    fn schema(field: &str, reason: impl Into<String>) -> Self {
        RecordError::Schema { field: field.to_string(), reason: reason.into() }
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: invalid JSON: {reason}")]
    Json { line: usize, reason: String },
    #[error("line {line}: {source}")]
    Record { line: usize, source: RecordError },
    #[error("line {line}: parent `{parent_id}` does not exist")]
    DanglingParent { line: usize, parent_id: String },
    #[error("line {line}: duplicate variant ({parent_id}, {pattern})")]
    DuplicateVariant { line: usize, parent_id: String, pattern: ChangePattern },
    #[error("line {line}: duplicate problem id `{id}`")]
    DuplicateProblem { line: usize, id: String },
}

impl CorpusError {
    /// 1-based line of the offending record, when the error is record-level.
    pub fn line(&self) -> Option<usize> {
        match self {
            CorpusError::Io { .. } => None,
            CorpusError::Json { line, .. }
            | CorpusError::Record { line, .. }
            | CorpusError::DanglingParent { line, .. }
            | CorpusError::DuplicateVariant { line, .. }
            | CorpusError::DuplicateProblem { line, .. } => Some(*line),
        }
    }
}

fn required_str(map: &Map<String, Value>, field: &str) -> Result<String, RecordError> {
    match map.get(field) {
        None => Err(RecordError::schema(field, "missing")),
        Some(Value::String(s)) => Ok(s.clone()),
        Some(other) => Err(RecordError::schema(field, format!("expected a string, found {}", json_kind(other)))),
    }
}

fn json_kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "a boolean",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Array(_) => "an array",
        Value::Object(_) => "an object",
    }
}

/// Decode a Python string literal (`'..'`, `".."`, triple-quoted, optional
/// `r`/`u` prefix). Returns `None` for byte and f-strings.
pub fn decode_python_string(literal: &str) -> Option<String> {
    let prefix_len = literal.find(['\'', '"'])?;
    let prefix = literal[..prefix_len].to_ascii_lowercase();
    if prefix.contains('b') || prefix.contains('f') || !prefix.chars().all(|c| c == 'r' || c == 'u') {
        return None;
    }
    let raw = prefix.contains('r');
    let body = &literal[prefix_len..];
    let quote = if body.starts_with("'''") || body.starts_with("\"\"\"") { &body[..3] } else { &body[..1] };
    let inner = body.strip_prefix(quote)?.strip_suffix(quote)?;
    if raw {
        return Some(inner.to_string());
    }
    let mut out = String::with_capacity(inner.len());
    let mut chars = inner.chars().peekable();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next()? {
            'n' => out.push('\n'),
            't' => out.push('\t'),
            'r' => out.push('\r'),
            '0' => out.push('\0'),
            '\\' => out.push('\\'),
            '\'' => out.push('\''),
            '"' => out.push('"'),
            '\n' => {}
            'x' => {
                let hex: String = chars.by_ref().take(2).collect();
                out.push(char::from_u32(u32::from_str_radix(&hex, 16).ok()?)?);
            }
            'u' => {
                let hex: String = chars.by_ref().take(4).collect();
                out.push(char::from_u32(u32::from_str_radix(&hex, 16).ok()?)?);
            }
            other => {
                out.push('\\');
                out.push(other);
            }
        }
    }
    Some(out)
}

/// Split the `test_input` payload into assertion strings. Accepts a JSON
/// array of strings, a string holding a Python list of string literals, or
/// a string of newline-separated assert statements.
pub fn parse_test_list(value: &Value, field: &str) -> Result<Vec<String>, RecordError> {
    match value {
        Value::Array(items) => items
            .iter()
            .enumerate()
            .map(|(i, item)| match item {
                Value::String(s) => Ok(s.trim().to_string()),
                other => Err(RecordError::schema(field, format!("element {i} is {}", json_kind(other)))),
            })
            .collect(),
        Value::String(text) => {
            let text = text.trim();
            if let Ok(Value::Array(items)) = serde_json::from_str::<Value>(text) {
                return parse_test_list(&Value::Array(items), field);
            }
            let (tree, error) = parser::parse_lenient(text, parser::Grammar::Python);
            if error.is_none() {
                let stmts: Vec<&Node> = tree.statements().collect();
                if let [stmt] = stmts.as_slice() {
                    if let Some(list) = stmt.named_children().next().filter(|n| n.kind == "list") {
                        return list
                            .named_children()
                            .enumerate()
                            .map(|(i, s)| {
                                (s.kind == "string")
                                    .then(|| decode_python_string(s.text(text)))
                                    .flatten()
                                    .map(|t| t.trim().to_string())
                                    .ok_or_else(|| RecordError::schema(field, format!("list element {i} is not a plain string literal")))
                            })
                            .collect();
                    }
                }
                if !stmts.is_empty() && stmts.iter().all(|s| s.kind == "assert_statement") {
                    return Ok(stmts.iter().map(|s| s.text(text).to_string()).collect());
                }
            }
            Err(RecordError::schema(field, "expected a list of assertion strings"))
        }
        Value::Null => Err(RecordError::schema(field, "missing")),
        other => Err(RecordError::schema(field, format!("expected a list, found {}", json_kind(other)))),
    }
}

/// Check that a test string is exactly one `assert` statement.
pub fn check_assertion(test: &str) -> Result<(), String> {
    let tree = parser::parse_source(test).map_err(|e: SyntaxError| e.to_string())?;
    let stmts: Vec<&Node> = tree.statements().collect();
    match stmts.as_slice() {
        [only] if only.kind == "assert_statement" => Ok(()),
        [only] => Err(format!("found {} instead of an assert statement", only.kind)),
        _ => Err(format!("expected one statement, found {}", stmts.len())),
    }
}

fn check_assertions(tests: &[String]) -> Result<(), RecordError> {
    for (index, test) in tests.iter().enumerate() {
        check_assertion(test).map_err(|reason| RecordError::AssertionParse { index, reason })?;
    }
    Ok(())
}

/// Builtins that wrap the interface call in typical assertions.
const BUILTIN_CALLABLES: &[&str] = &[
    "abs", "all", "any", "bool", "callable", "dict", "divmod", "enumerate", "filter", "float", "format",
    "frozenset", "getattr", "hasattr", "hash", "int", "isinstance", "issubclass", "iter", "len", "list",
    "map", "max", "min", "next", "ord", "chr", "pow", "print", "range", "repr", "reversed", "round", "set",
    "sorted", "str", "sum", "tuple", "type", "zip", "bin", "hex", "oct", "id", "vars", "object",
    "Exception", "ValueError", "TypeError", "KeyError", "IndexError", "ZeroDivisionError", "RuntimeError",
];

/// First call in preorder whose callee is a bare, non-builtin identifier.
fn outermost_call(test: &str) -> Option<String> {
    let tree = parser::parse_lenient(test, parser::Grammar::Python).0;
    tree.root.preorder().find_map(|n| {
        if n.kind != "call" {
            return None;
        }
        let callee = n.child_by_field("function")?;
        let name = callee.text(test);
        (callee.kind == "identifier" && !BUILTIN_CALLABLES.contains(&name)).then(|| name.to_string())
    })
}

pub fn derive_interface_from_tests(tests: &[String]) -> Result<String, InterfaceError> {
    if tests.is_empty() {
        return Err(InterfaceError::NoTests);
    }
    let mut names = BTreeSet::new();
    for (i, test) in tests.iter().enumerate() {
        names.insert(outermost_call(test).ok_or(InterfaceError::NoCall(i))?);
    }
    if names.len() == 1 {
        Ok(names.into_iter().next().expect("one name"))
    } else {
        Err(InterfaceError::Ambiguous(names.into_iter().collect()))
    }
}

/// The single function every test assertion calls.
pub fn derive_interface_name(problem: &Problem) -> Result<String, InterfaceError> {
    derive_interface_from_tests(&problem.tests)
}

/// Whether `test` references `name` as an identifier.
pub fn references_identifier(test: &str, name: &str) -> bool {
    let tree = parser::parse_lenient(test, parser::Grammar::Python).0;
    let found = tree.root.preorder().any(|n| n.kind == "identifier" && n.text(test) == name);
    found
}

pub fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_alphabetic() || c == '_') && chars.all(|c| c.is_alphanumeric() || c == '_')
}

fn validate_problem(map: &Map<String, Value>) -> Result<Problem, RecordError> {
    let id = required_str(map, "id")?;
    if id.trim().is_empty() {
        return Err(RecordError::schema("id", "empty"));
    }
    let level_value = map.get("level").ok_or_else(|| RecordError::schema("level", "missing"))?;
    let level: Level = serde_json::from_value(level_value.clone())
        .map_err(|_| RecordError::schema("level", "expected entry, mixture or competition"))?;
    let source_benchmark = required_str(map, "source_benchmark")?;
    let statement = required_str(map, "raw_problem")?;
    let solution = required_str(map, "raw_solution")?;
    let tests = parse_test_list(map.get("raw_test_input").unwrap_or(&Value::Null), "raw_test_input")?;
    if tests.is_empty() {
        return Err(RecordError::schema("raw_test_input", "no tests"));
    }
    check_assertions(&tests)?;
    let interface_name = match map.get("interface_name") {
        None | Some(Value::Null) => derive_interface_from_tests(&tests)?,
        Some(Value::String(name)) => name.clone(),
        Some(other) => return Err(RecordError::schema("interface_name", format!("expected a string, found {}", json_kind(other)))),
    };
    if !is_identifier(&interface_name) {
        return Err(RecordError::schema("interface_name", format!("`{interface_name}` is not an identifier")));
    }
    if let Some(i) = tests.iter().position(|t| !references_identifier(t, &interface_name)) {
        return Err(RecordError::schema("raw_test_input", format!("test {i} does not reference `{interface_name}`")));
    }
    Ok(Problem { id, level, source_benchmark, statement, solution, tests, interface_name })
}

fn validate_variant(map: &Map<String, Value>) -> Result<ProblemVariant, RecordError> {
    let parent_id = required_str(map, "parent_id")?;
    let tag = required_str(map, "prompt_type")?;
    let pattern =
        ChangePattern::from_tag(&tag).ok_or_else(|| RecordError::schema("prompt_type", format!("unknown tag `{tag}`")))?;
    let input_format = required_str(map, "input_format")?;
    let output_format = required_str(map, "output_format")?;
    let statement = required_str(map, "new_problem")?;
    let solution = required_str(map, "new_solution")?;
    let tests = parse_test_list(map.get("test_input").unwrap_or(&Value::Null), "test_input")?;
    if tests.len() < MIN_VARIANT_TESTS {
        return Err(RecordError::schema(
            "test_input",
            format!("{} assertions, at least {MIN_VARIANT_TESTS} required", tests.len()),
        ));
    }
    check_assertions(&tests)?;
    Ok(ProblemVariant { parent_id, pattern, input_format, output_format, statement, solution, tests })
}

/// Validate one raw record into a problem or a variant.
pub fn validate_record(record: &Map<String, Value>) -> Result<Record, RecordError> {
    if record.contains_key("prompt_type") {
        validate_variant(record).map(Record::Variant)
    } else {
        validate_problem(record).map(Record::Problem)
    }
}

impl Dataset {
    /// Parse a dataset from JSONL text. Blank lines are skipped.
    pub fn from_jsonl(name: &str, text: &str) -> Result<Dataset, CorpusError> {
        let mut dataset = Dataset { name: name.to_string(), ..Dataset::default() };
        let mut variant_lines = Vec::new();
        let mut ids = HashSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let value: Value = serde_json::from_str(raw).map_err(|e| CorpusError::Json { line, reason: e.to_string() })?;
            let Value::Object(map) = value else {
                return Err(CorpusError::Json { line, reason: "record is not an object".into() });
            };
            match validate_record(&map).map_err(|source| CorpusError::Record { line, source })? {
                Record::Problem(p) => {
                    if !ids.insert(p.id.clone()) {
                        return Err(CorpusError::DuplicateProblem { line, id: p.id });
                    }
                    dataset.problems.push(p);
                }
                Record::Variant(v) => {
                    variant_lines.push(line);
                    dataset.variants.push(v);
                }
            }
        }
        let mut seen = HashSet::new();
        for (v, &line) in dataset.variants.iter().zip(&variant_lines) {
            if !ids.contains(&v.parent_id) {
                return Err(CorpusError::DanglingParent { line, parent_id: v.parent_id.clone() });
            }
            if !seen.insert((v.parent_id.clone(), v.pattern)) {
                return Err(CorpusError::DuplicateVariant { line, parent_id: v.parent_id.clone(), pattern: v.pattern });
            }
        }
        Ok(dataset)
    }

    /// Problems first, then variants, each in stored order.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for p in &self.problems {
            out.push_str(&serde_json::to_string(p).expect("problem serializes"));
            out.push('\n');
        }
        for v in &self.variants {
            out.push_str(&serde_json::to_string(v).expect("variant serializes"));
            out.push('\n');
        }
        out
    }

    pub fn problem(&self, id: &str) -> Option<&Problem> {
        self.problems.iter().find(|p| p.id == id)
    }

    /// Patterns present per problem; parents with fewer than four variants are allowed.
    pub fn coverage(&self) -> BTreeMap<&str, BTreeSet<ChangePattern>> {
        let mut cov: BTreeMap<&str, BTreeSet<ChangePattern>> =
            self.problems.iter().map(|p| (p.id.as_str(), BTreeSet::new())).collect();
        for v in &self.variants {
            cov.entry(v.parent_id.as_str()).or_default().insert(v.pattern);
        }
        cov
    }
}

pub fn load_dataset(path: &Path) -> Result<Dataset, CorpusError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Dataset::from_jsonl(&name, &text)
}

pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<(), CorpusError> {
    fs::write(path, dataset.to_jsonl()).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })
}

/// Variants whose pattern is in `patterns`, paired with their parent, in stored order.
pub fn iter_variants<'d>(
    dataset: &'d Dataset,
    patterns: &'d BTreeSet<ChangePattern>,
) -> impl Iterator<Item = (&'d Problem, &'d ProblemVariant)> + 'd {
    dataset
        .variants
        .iter()
        .filter(move |v| patterns.contains(&v.pattern))
        .filter_map(move |v| dataset.problem(&v.parent_id).map(|p| (p, v)))
}
