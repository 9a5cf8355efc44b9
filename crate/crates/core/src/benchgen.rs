//! Build requirement-change variants of seed problems: prompt for a variant,
//! repair solution and tests until they agree, then run automated quality
//! checks. Anything that cannot be finalized goes to a review queue.

use std::collections::BTreeSet;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::corpus::{self, ChangePattern, Dataset, Problem, ProblemVariant, Record, RecordError};
use crate::llm_gateway::{self, ChatRequest, Gateway, GatewayError};
use crate::parser::{self, Node};
use crate::sandbox::{Sandbox, SandboxError, SandboxJob, SandboxVerdict, DEFAULT_MEMORY_CAP, DEFAULT_TIMEOUT};
use crate::template::{self, Template, TemplateError};

pub const DEFAULT_CO_EVOLUTION_CAP: u32 = 3;

pub fn pattern_template(pattern: ChangePattern) -> Template {
    match pattern {
        ChangePattern::Extension => template::BENCHGEN_EXT,
        ChangePattern::Interface => template::BENCHGEN_INT,
        ChangePattern::DataStructure => template::BENCHGEN_DST,
        ChangePattern::ErrorHandling => template::BENCHGEN_ERR,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateVariant {
    pub pattern: ChangePattern,
    pub raw_response: String,
    pub parsed: ProblemVariant,
    pub repair_rounds_used: u32,
}

/// One failed execution and what the repair request returned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub round: u32,
    pub verdict: SandboxVerdict,
    pub failing_test: Option<String>,
    pub solution: String,
    pub tests: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repair_response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repair_error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewReason {
    CapExhausted,
    QualityGate,
    GenerationFailed,
}

/// A line of the review queue file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewRecord {
    pub parent_id: String,
    pub pattern: ChangePattern,
    pub reason: ReviewReason,
    pub detail: String,
    pub candidate: Option<ProblemVariant>,
    pub history: Vec<FailureRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_verdict: Option<SandboxVerdict>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CoEvolution {
    Finalized(CandidateVariant),
    Review(ReviewRecord),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateReport {
    pub checks: Vec<GateCheck>,
}

impl GateReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&GateCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn push(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(GateCheck { name: name.to_string(), passed, detail: detail.into() });
    }
}

#[derive(Debug, Error)]
pub enum BenchgenError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("could not extract a JSON object: {reason}")]
    Extract { reason: String, raw: String },
    #[error("variant record rejected: {source}")]
    Schema {
        source: RecordError,
        raw: String,
    },
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
}

/// Names of functions called as bare identifiers anywhere under `node`.
fn called_names<'s>(node: &Node, source: &'s str) -> Vec<&'s str> {
    node.preorder()
        .filter(|n| n.kind == "call")
        .filter_map(|n| n.child_by_field("function"))
        .filter(|f| f.kind == "identifier")
        .map(|f| f.text(source))
        .collect()
}

/// Whether the assertion calls `name` directly.
pub fn test_calls(test: &str, name: &str) -> bool {
    let (tree, _) = parser::parse_lenient(test, parser::Grammar::Python);
    called_names(&tree.root, test).contains(&name)
}

/// Calls to `name` in `source`, not counting calls inside `name`'s own body.
pub fn self_invocations(source: &str, name: &str) -> usize {
    let Ok(tree) = parser::parse_source(source) else { return 0 };
    fn walk(node: &Node, source: &str, name: &str, count: &mut usize) {
        if node.kind == "function_definition" && node.child_by_field("name").is_some_and(|n| n.text(source) == name) {
            return;
        }
        if node.kind == "call" {
            if let Some(f) = node.child_by_field("function") {
                if f.kind == "identifier" && f.text(source) == name {
                    *count += 1;
                }
            }
        }
        for child in &node.children {
            walk(child, source, name, count);
        }
    }
    let mut count = 0;
    walk(&tree.root, source, name, &mut count);
    count
}

/// 1-based line numbers covered by the bodies of `except` handlers.
pub fn handler_lines(source: &str) -> BTreeSet<u32> {
    let Ok(tree) = parser::parse_source(source) else { return BTreeSet::new() };
    tree.root
        .preorder()
        .filter(|n| n.kind == "except_clause")
        .filter_map(|n| n.children.iter().find(|c| c.kind == "block"))
        .flat_map(|b| (b.start.row as u32 + 1)..=(b.end.row as u32 + 1))
        .collect()
}

fn failing_test(verdict: &SandboxVerdict, tests: &[String]) -> Option<String> {
    verdict.failed_index.and_then(|i| tests.get(i).cloned())
}

pub struct BenchBuilder<'a> {
    gateway: &'a Gateway,
    sandbox: &'a Sandbox,
    pub model_id: String,
    pub cap: u32,
    pub timeout: Duration,
    pub memory_cap: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BuildOutput {
    pub dataset: Dataset,
    pub review: Vec<ReviewRecord>,
    pub gate_reports: Vec<(String, ChangePattern, GateReport)>,
}

impl BuildOutput {
    pub fn review_jsonl(&self) -> String {
        self.review.iter().map(|r| serde_json::to_string(r).expect("review record serializes") + "\n").collect()
    }
}

impl<'a> BenchBuilder<'a> {
    pub fn new(gateway: &'a Gateway, sandbox: &'a Sandbox, model_id: impl Into<String>) -> Self {
        BenchBuilder {
            gateway,
            sandbox,
            model_id: model_id.into(),
            cap: DEFAULT_CO_EVOLUTION_CAP,
            timeout: DEFAULT_TIMEOUT,
            memory_cap: DEFAULT_MEMORY_CAP,
        }
    }

    fn ask(&self, tag: String, prompt: String) -> Result<String, GatewayError> {
        self.gateway.complete(&ChatRequest::user(self.model_id.clone(), tag, prompt))
    }

    fn job(&self, variant: &ProblemVariant, instrument: bool) -> SandboxJob {
        let interface = variant.interface_name().unwrap_or_default();
        let job = SandboxJob::new(variant.solution.clone(), variant.tests.clone(), interface).with_limits(self.timeout, self.memory_cap);
        if instrument {
            job.instrumented()
        } else {
            job
        }
    }

    fn to_variant(problem: &Problem, pattern: ChangePattern, mut map: Map<String, Value>, raw: &str) -> Result<ProblemVariant, BenchgenError> {
        map.insert("parent_id".into(), Value::String(problem.id.clone()));
        let schema = |source| BenchgenError::Schema { source, raw: raw.to_string() };
        match map.get("prompt_type") {
            None => {
                map.insert("prompt_type".into(), Value::String(pattern.tag().into()));
            }
            Some(Value::String(tag)) if tag == pattern.tag() => {}
            Some(other) => {
                return Err(schema(RecordError::Schema {
                    field: "prompt_type".into(),
                    reason: format!("expected {}, found {other}", pattern.tag()),
                }))
            }
        }
        match corpus::validate_record(&map).map_err(schema)? {
            Record::Variant(v) => Ok(v),
            Record::Problem(_) => unreachable!("records with prompt_type validate as variants"),
        }
    }

    /// Prompt for one variant, with a single reprompt when the answer does not validate.
    pub fn generate_variant(&self, problem: &Problem, pattern: ChangePattern) -> Result<CandidateVariant, BenchgenError> {
        let prompt = pattern_template(pattern).render(&[("raw_problem", &problem.statement), ("raw_solution", &problem.solution)])?;
        let mut current = prompt.clone();
        let mut last_error = None;
        for attempt in 1..=2 {
            let tag = format!("bench/{}/{}/generate/{attempt}", problem.id, pattern.short());
            let raw = self.ask(tag, current.clone())?;
            let result = llm_gateway::extract_json(&raw)
                .map_err(|e| BenchgenError::Extract { reason: e.reason, raw: e.raw })
                .and_then(|map| Self::to_variant(problem, pattern, map, &raw));
            match result {
                Ok(parsed) => return Ok(CandidateVariant { pattern, raw_response: raw, parsed, repair_rounds_used: 0 }),
                Err(e) => {
                    current = format!(
                        "{prompt}\n\nYour previous answer was rejected: {e}\nReturn a single valid JSON object with every field and at least five assert statements."
                    );
                    last_error = Some(e);
                }
            }
        }
        Err(last_error.expect("two failed attempts"))
    }

    /// Execute, and on failure request repairs, for at most `cap` repair rounds.
    pub fn co_evolve(&self, problem: &Problem, candidate: CandidateVariant) -> Result<CoEvolution, BenchgenError> {
        let pattern = candidate.pattern;
        let mut variant = candidate.parsed.clone();
        let mut history = Vec::new();
        let mut round = 0;
        loop {
            let verdict = self.sandbox.run(&self.job(&variant, false))?;
            if verdict.passed() {
                return Ok(CoEvolution::Finalized(CandidateVariant { parsed: variant, repair_rounds_used: round, ..candidate }));
            }
            if round == self.cap {
                return Ok(CoEvolution::Review(ReviewRecord {
                    parent_id: problem.id.clone(),
                    pattern,
                    reason: ReviewReason::CapExhausted,
                    detail: format!("still failing after {round} repair round(s): {}", verdict.describe()),
                    candidate: Some(variant),
                    history,
                    final_verdict: Some(verdict),
                }));
            }
            round += 1;
            let failing = failing_test(&verdict, &variant.tests);
            let tests_text = serde_json::to_string_pretty(&variant.tests).expect("tests serialize");
            let prompt = template::BENCHGEN_REPAIR.render(&[
                ("new_problem", &variant.statement),
                ("new_solution", &variant.solution),
                ("test_input", &tests_text),
                ("verdict", &verdict.describe()),
                ("failing_test", failing.as_deref().unwrap_or("(none)")),
                ("stderr_excerpt", &verdict.stderr_excerpt),
            ])?;
            let mut record = FailureRecord {
                round,
                verdict,
                failing_test: failing,
                solution: variant.solution.clone(),
                tests: variant.tests.clone(),
                repair_response: None,
                repair_error: None,
            };
            let raw = self.ask(format!("bench/{}/{}/repair/{round}", problem.id, pattern.short()), prompt)?;
            record.repair_response = Some(raw.clone());
            let repaired = llm_gateway::extract_json(&raw)
                .map_err(|e| BenchgenError::Extract { reason: e.reason, raw: e.raw })
                .and_then(|fix| {
                    let mut map = serde_json::to_value(&variant).expect("variant serializes");
                    let obj = map.as_object_mut().expect("variant is an object");
                    for key in ["new_solution", "test_input", "new_problem"] {
                        if let Some(v) = fix.get(key) {
                            obj.insert(key.to_string(), v.clone());
                        }
                    }
                    Self::to_variant(problem, pattern, obj.clone(), &raw)
                });
            match repaired {
                Ok(next) => variant = next,
                Err(e) => record.repair_error = Some(e.to_string()),
            }
            history.push(record);
        }
    }

    /// Automated checks on a finalized variant.
    pub fn quality_gate(&self, variant: &ProblemVariant, parent: &Problem) -> Result<GateReport, SandboxError> {
        let mut report = GateReport::default();
        let instrument = variant.pattern == ChangePattern::ErrorHandling;
        let verdict = self.sandbox.run(&self.job(variant, instrument))?;
        report.push("solution_passes_tests", verdict.passed(), verdict.describe());

        match variant.interface_name() {
            Ok(name) => {
                let missing: Vec<usize> = (0..variant.tests.len()).filter(|&i| !test_calls(&variant.tests[i], &name)).collect();
                let defined = parser::defines(&variant.solution, &name);
                let detail = if !defined {
                    format!("solution does not define `{name}`")
                } else if !missing.is_empty() {
                    format!("tests {missing:?} do not call `{name}`")
                } else {
                    format!("all tests call `{name}`")
                };
                report.push("tests_call_interface", defined && missing.is_empty(), detail);
            }
            Err(e) => report.push("tests_call_interface", false, e.to_string()),
        }

        match variant.pattern {
            ChangePattern::Extension => {
                let calls = self_invocations(&variant.solution, &parent.interface_name);
                report.push("self_invoking", calls >= 1, format!("{calls} call(s) to `{}`", parent.interface_name));
            }
            ChangePattern::ErrorHandling => {
                let handlers = handler_lines(&variant.solution);
                let executed: BTreeSet<u32> = verdict.executed_lines.unwrap_or_default().into_iter().collect();
                let hit = handlers.intersection(&executed).count();
                let detail = if handlers.is_empty() {
                    "solution has no exception handler".to_string()
                } else {
                    format!("{hit} handler line(s) executed")
                };
                report.push("error_path_exercised", hit > 0, detail);
            }
            ChangePattern::Interface | ChangePattern::DataStructure => {}
        }
        Ok(report)
    }

    /// Generate, repair and gate one (problem, pattern) pair.
    pub fn build_one(&self, problem: &Problem, pattern: ChangePattern) -> Result<Result<(ProblemVariant, GateReport), ReviewRecord>, BenchgenError> {
        let review = |reason, detail: String, candidate, history| ReviewRecord {
            parent_id: problem.id.clone(),
            pattern,
            reason,
            detail,
            candidate,
            history,
            final_verdict: None,
        };
        let candidate = match self.generate_variant(problem, pattern) {
            Ok(c) => c,
            Err(e @ (BenchgenError::Extract { .. } | BenchgenError::Schema { .. })) => {
                return Ok(Err(review(ReviewReason::GenerationFailed, e.to_string(), None, Vec::new())));
            }
            Err(e) => return Err(e),
        };
        match self.co_evolve(problem, candidate)? {
            CoEvolution::Review(r) => Ok(Err(r)),
            CoEvolution::Finalized(done) => {
                let gate = self.quality_gate(&done.parsed, problem)?;
                if gate.passed() {
                    Ok(Ok((done.parsed, gate)))
                } else {
                    let failed: Vec<&str> = gate.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
                    Ok(Err(review(ReviewReason::QualityGate, format!("failed checks: {}", failed.join(", ")), Some(done.parsed), Vec::new())))
                }
            }
        }
    }

    /// Every seed problem crossed with `patterns`, in parallel on the current rayon pool.
    pub fn build(&self, seeds: &Dataset, patterns: &[ChangePattern]) -> Result<BuildOutput, BenchgenError> {
        let pairs: Vec<(&Problem, ChangePattern)> =
            seeds.problems.iter().flat_map(|p| patterns.iter().map(move |&pat| (p, pat))).collect();
        let results: Vec<_> = pairs.par_iter().map(|&(p, pat)| self.build_one(p, pat).map(|r| (p, pat, r))).collect();
        let mut out = BuildOutput {
            dataset: Dataset { name: seeds.name.clone(), problems: seeds.problems.clone(), variants: Vec::new() },
            ..BuildOutput::default()
        };
        for result in results {
            let (problem, pattern, outcome) = result?;
            match outcome {
                Ok((variant, gate)) => {
                    out.dataset.variants.push(variant);
                    out.gate_reports.push((problem.id.clone(), pattern, gate));
                }
                Err(record) => out.review.push(record),
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_invocation_counting() {
        let src = "def add(a, b):\n    return add(a, 0) if b else a\n\ndef total(xs):\n    return add(add(xs[0], xs[1]), 0)\n";
        assert_eq!(self_invocations(src, "add"), 2);
        assert_eq!(self_invocations("def add(a, b):\n    return a + b\n", "add"), 0);
    }

    #[test]
    fn handler_line_ranges() {
        let src = "def f(x):\n    try:\n        return 1 / x\n    except ZeroDivisionError:\n        raise ValueError('x')\n";
        assert_eq!(handler_lines(src), BTreeSet::from([5]));
        assert!(handler_lines("x = 1\n").is_empty());
    }

    #[test]
    fn interface_calls_in_tests() {
        assert!(test_calls("assert sorted(f(1)) == [1]", "f"));
        assert!(!test_calls("assert g(1) == 1", "f"));
        assert!(!test_calls("assert obj.f(1) == 1", "f"));
    }

    #[test]
    fn templates_by_pattern() {
        for p in ChangePattern::ALL {
            assert!(pattern_template(p).text.contains(p.tag()));
        }
    }
}
