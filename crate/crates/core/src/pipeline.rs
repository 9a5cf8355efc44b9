//! Six-agent generation pipeline: requirements analysis, pattern selection,
//! framework design and evaluation (looped), code generation, and code
//! optimization against a seed test (looped).
//!
//! Request tags have the form `{prefix}/maintaincoder/{stage}/{iteration}`.
//! The evaluation agent must end its answer with `VERDICT: ACCEPT` or
//! `VERDICT: REVISE`; anything else counts as a revision request.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::corpus::Problem;
use crate::llm_gateway::{self, ChatRequest, Gateway, GatewayError, DEFAULT_TEMPERATURE, DEFAULT_TOP_P};
use crate::parser;
use crate::sandbox::{Sandbox, SandboxError, SandboxJob, SandboxVerdict, VerdictStatus, DEFAULT_MEMORY_CAP, DEFAULT_TIMEOUT};
use crate::template::{self, Template, TemplateError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageName {
    RequirementsAnalysis,
    PatternSelection,
    FrameworkDesign,
    FrameworkEvaluation,
    CodeGeneration,
    CodeOptimization,
}

impl StageName {
    pub fn slug(self) -> &'static str {
        match self {
            StageName::RequirementsAnalysis => "analysis",
            StageName::PatternSelection => "patterns",
            StageName::FrameworkDesign => "design",
            StageName::FrameworkEvaluation => "evaluation",
            StageName::CodeGeneration => "codegen",
            StageName::CodeOptimization => "optimization",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputSchema {
    Freeform,
    ModulePatternList,
    FrameworkSpec,
    EvaluationVerdict,
    Code,
}

#[derive(Debug, Clone, Copy)]
pub struct AgentStage {
    pub name: StageName,
    pub template: Template,
    pub output_schema: OutputSchema,
}

pub const STAGES: [AgentStage; 6] = [
    AgentStage { name: StageName::RequirementsAnalysis, template: template::MC_REQUIREMENTS, output_schema: OutputSchema::Freeform },
    AgentStage { name: StageName::PatternSelection, template: template::MC_PATTERNS, output_schema: OutputSchema::ModulePatternList },
    AgentStage { name: StageName::FrameworkDesign, template: template::MC_FRAMEWORK, output_schema: OutputSchema::FrameworkSpec },
    AgentStage { name: StageName::FrameworkEvaluation, template: template::MC_EVALUATION, output_schema: OutputSchema::EvaluationVerdict },
    AgentStage { name: StageName::CodeGeneration, template: template::MC_CODEGEN, output_schema: OutputSchema::Code },
    AgentStage { name: StageName::CodeOptimization, template: template::MC_OPTIMIZATION, output_schema: OutputSchema::Code },
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModulePattern {
    pub name: String,
    pub main_pattern: String,
    pub rationale: String,
    pub alternatives: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameworkSpec {
    pub modules: Vec<ModulePattern>,
    pub class_structure: String,
    pub dependencies: String,
}

impl FrameworkSpec {
    pub fn patterns_text(&self) -> String {
        self.modules
            .iter()
            .map(|m| {
                let mut line = format!("- {}: {} ({})", m.name, m.main_pattern, m.rationale);
                if !m.alternatives.is_empty() {
                    line.push_str(&format!("; alternatives: {}", m.alternatives.join(", ")));
                }
                line
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn render(&self) -> String {
        format!(
            "Modules and patterns:\n{}\n\nClass structure:\n{}\n\nDependencies:\n{}",
            self.patterns_text(),
            self.class_structure,
            self.dependencies
        )
    }
}

/// Source of transcript timestamps. `Logical` numbers events so runs are reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Clock {
    Wall,
    Logical,
}

impl Clock {
    pub fn stamp(self, sequence: u64) -> String {
        match self {
            Clock::Logical => format!("t{sequence:06}"),
            Clock::Wall => {
                let now = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default();
                format!("{}.{:03}", now.as_secs(), now.subsec_millis())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEvent {
    pub stage: StageName,
    pub iteration: u32,
    pub fingerprint: String,
    pub response: String,
    pub timestamp: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentTranscript {
    pub run_id: String,
    pub events: Vec<TranscriptEvent>,
    pub loop_counts: BTreeMap<StageName, u32>,
}

impl AgentTranscript {
    pub fn to_jsonl(&self) -> String {
        self.events.iter().map(|e| serde_json::to_string(e).expect("event serializes") + "\n").collect()
    }

    pub fn loop_count(&self, stage: StageName) -> u32 {
        self.loop_counts.get(&stage).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub framework_eval_cap: u32,
    pub optimization_cap: u32,
    pub interface_name: String,
    pub seed_test: String,
    pub model_id: String,
    pub tag_prefix: String,
    pub temperature: f64,
    pub top_p: f64,
    pub sandbox_timeout: std::time::Duration,
    pub sandbox_memory: u64,
    pub clock: Clock,
}

impl PipelineConfig {
    pub fn new(model_id: impl Into<String>, interface_name: impl Into<String>, seed_test: impl Into<String>) -> Self {
        PipelineConfig {
            framework_eval_cap: 3,
            optimization_cap: 5,
            interface_name: interface_name.into(),
            seed_test: seed_test.into(),
            model_id: model_id.into(),
            tag_prefix: String::new(),
            temperature: DEFAULT_TEMPERATURE,
            top_p: DEFAULT_TOP_P,
            sandbox_timeout: DEFAULT_TIMEOUT,
            sandbox_memory: DEFAULT_MEMORY_CAP,
            clock: Clock::Logical,
        }
    }

    /// Interface from the problem; the seed test is its first assertion.
    pub fn for_problem(model_id: impl Into<String>, problem: &Problem) -> Self {
        Self::new(model_id, problem.interface_name.clone(), problem.tests.first().cloned().unwrap_or_default())
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.framework_eval_cap == 0 || self.optimization_cap == 0 {
            return Err(PipelineError::InvalidConfig("loop caps must be at least 1".into()));
        }
        if !crate::corpus::is_identifier(&self.interface_name) {
            return Err(PipelineError::InvalidConfig(format!("`{}` is not an identifier", self.interface_name)));
        }
        if self.seed_test.trim().is_empty() {
            return Err(PipelineError::InvalidConfig("seed test is empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline configuration: {0}")]
    InvalidConfig(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("{stage:?}: {source}")]
    Gateway { stage: StageName, source: GatewayError },
    #[error("{stage:?} failed: {message}")]
    Stage { stage: StageName, message: String },
    #[error("sandbox: {0}")]
    Sandbox(#[from] SandboxError),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

/// A failed run together with everything recorded before the failure.
#[derive(Debug, Error)]
#[error("{error}")]
pub struct PipelineFailure {
    #[source]
    pub error: PipelineError,
    pub transcript: AgentTranscript,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Accept,
    Revise,
}

/// Classify an evaluation response by its last `VERDICT:` line.
pub fn classify_evaluation(response: &str) -> (Verdict, String) {
    let lines: Vec<&str> = response.lines().collect();
    let found = lines.iter().enumerate().rev().find_map(|(i, line)| {
        let cleaned: String = line.chars().filter(|c| !matches!(c, '*' | '`' | '#' | '_')).collect();
        let upper = cleaned.trim().to_ascii_uppercase();
        let rest = upper.strip_prefix("VERDICT")?.trim_start().strip_prefix(':')?.trim();
        match rest {
            "ACCEPT" => Some((i, Verdict::Accept)),
            "REVISE" => Some((i, Verdict::Revise)),
            _ => None,
        }
    });
    match found {
        Some((_, Verdict::Accept)) => (Verdict::Accept, String::new()),
        Some((i, Verdict::Revise)) => {
            let feedback = lines[..i].join("\n").trim().to_string();
            let feedback = if feedback.is_empty() { response.trim().to_string() } else { feedback };
            (Verdict::Revise, feedback)
        }
        None => (Verdict::Revise, response.to_string()),
    }
}

/// Parse `{"modules": [{name, main_pattern, rationale, alternatives}]}`.
pub fn parse_module_patterns(response: &str) -> Result<Vec<ModulePattern>, String> {
    let map = llm_gateway::extract_json(response).map_err(|e| e.reason)?;
    let modules = map.get("modules").and_then(Value::as_array).ok_or("missing `modules` list")?;
    if modules.is_empty() {
        return Err("`modules` is empty".into());
    }
    modules
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let text = |key: &str| m.get(key).and_then(Value::as_str).map(str::trim).unwrap_or("").to_string();
            let name = text("name");
            let main_pattern = text("main_pattern");
            if name.is_empty() {
                return Err(format!("module {i} has no name"));
            }
            if main_pattern.is_empty() {
                return Err(format!("module `{name}` has no main pattern"));
            }
            let alternatives = match m.get("alternatives") {
                Some(Value::Array(items)) => items.iter().filter_map(Value::as_str).map(str::to_string).collect(),
                Some(Value::String(s)) if !s.trim().is_empty() => vec![s.trim().to_string()],
                _ => Vec::new(),
            };
            Ok(ModulePattern { name, main_pattern, rationale: text("rationale"), alternatives })
        })
        .collect()
}

fn section_after<'a>(text: &'a str, header: &str, stop: Option<&str>) -> Option<&'a str> {
    let lower = text.to_ascii_lowercase();
    let start = lower.find(&header.to_ascii_lowercase())? + header.len();
    let end = stop.and_then(|s| lower[start..].find(&s.to_ascii_lowercase()).map(|e| e + start)).unwrap_or(text.len());
    Some(text[start..end].trim_matches(|c: char| c.is_whitespace() || c == '*' || c == '#'))
}

/// Split a design response into class structure and dependencies.
pub fn parse_framework(response: &str, modules: Vec<ModulePattern>) -> FrameworkSpec {
    let class_structure = section_after(response, "class structure:", Some("dependencies:"))
        .map(str::to_string)
        .unwrap_or_else(|| response.trim().to_string());
    let dependencies = section_after(response, "dependencies:", None).unwrap_or("").to_string();
    FrameworkSpec { modules, class_structure, dependencies }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationOutcome {
    pub code: String,
    pub iterations: u32,
    pub passed: bool,
    /// Cap reached without passing; `code` is the best candidate seen.
    pub flagged: bool,
    pub last_verdict: SandboxVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutput {
    pub code: String,
    pub transcript: AgentTranscript,
    pub framework: FrameworkSpec,
    pub optimization: OptimizationOutcome,
}

pub struct Pipeline<'a> {
    gateway: &'a Gateway,
    sandbox: &'a Sandbox,
    config: PipelineConfig,
}

/// State of one run: the transcript being built and the event counter.
pub struct PipelineRun<'p, 'a> {
    pipeline: &'p Pipeline<'a>,
    transcript: AgentTranscript,
    sequence: AtomicU64,
}

fn status_rank(status: VerdictStatus) -> u8 {
    match status {
        VerdictStatus::Pass => 4,
        VerdictStatus::AssertionFail => 3,
        VerdictStatus::RuntimeError => 2,
        VerdictStatus::Timeout => 1,
        VerdictStatus::SyntaxError => 0,
    }
}

fn reprompt(prompt: &str, reason: &str) -> String {
    format!("{prompt}\n\nYour previous answer could not be used: {reason}\nAnswer again and follow the output format exactly.")
}

impl<'a> Pipeline<'a> {
    pub fn new(gateway: &'a Gateway, sandbox: &'a Sandbox, config: PipelineConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        Ok(Pipeline { gateway, sandbox, config })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn start(&self, run_id: impl Into<String>) -> PipelineRun<'_, 'a> {
        PipelineRun {
            pipeline: self,
            transcript: AgentTranscript { run_id: run_id.into(), ..AgentTranscript::default() },
            sequence: AtomicU64::new(0),
        }
    }

    /// All six stages with both loops.
    #[allow(clippy::result_large_err)]
    pub fn run_pipeline(&self, requirements: &str) -> Result<PipelineOutput, PipelineFailure> {
        let run_id = if self.config.tag_prefix.is_empty() { "maintaincoder".to_string() } else { self.config.tag_prefix.clone() };
        let mut run = self.start(run_id);
        match run.execute(requirements) {
            Ok((code, framework, optimization)) => {
                Ok(PipelineOutput { code, transcript: run.transcript, framework, optimization })
            }
            Err(error) => Err(PipelineFailure { error, transcript: run.transcript }),
        }
    }
}

impl PipelineRun<'_, '_> {
    pub fn transcript(&self) -> &AgentTranscript {
        &self.transcript
    }

    pub fn into_transcript(self) -> AgentTranscript {
        self.transcript
    }

    fn call(&mut self, stage: StageName, iteration: u32, prompt: String) -> Result<String, PipelineError> {
        let config = &self.pipeline.config;
        let tag = if config.tag_prefix.is_empty() {
            format!("maintaincoder/{}/{iteration}", stage.slug())
        } else {
            format!("{}/maintaincoder/{}/{iteration}", config.tag_prefix, stage.slug())
        };
        let mut request = ChatRequest::user(config.model_id.clone(), tag, prompt);
        request.temperature = config.temperature;
        request.top_p = config.top_p;
        let fingerprint = llm_gateway::fingerprint(&request);
        let result = self.pipeline.gateway.complete(&request);
        let seq = self.sequence.fetch_add(1, Ordering::SeqCst);
        let (response, error) = match &result {
            Ok(text) => (text.clone(), None),
            Err(e) => (String::new(), Some(e.to_string())),
        };
        self.transcript.events.push(TranscriptEvent {
            stage,
            iteration,
            fingerprint,
            response,
            timestamp: config.clock.stamp(seq),
            error,
        });
        result.map_err(|source| PipelineError::Gateway { stage, source })
    }

    fn execute(&mut self, requirements: &str) -> Result<(String, FrameworkSpec, OptimizationOutcome), PipelineError> {
        let analysis = self.analyze_requirements(requirements)?;
        let modules = self.select_patterns(&analysis)?;
        let cap = self.pipeline.config.framework_eval_cap;
        let mut framework = self.design_framework(&analysis, modules.clone(), None, 0)?;
        let mut revisions = 0;
        for iteration in 1..=cap {
            let (verdict, feedback) = self.evaluate_framework(requirements, &analysis, &framework, iteration)?;
            if verdict == Verdict::Accept {
                break;
            }
            revisions += 1;
            framework = self.design_framework(&analysis, modules.clone(), Some(&feedback), iteration)?;
        }
        self.transcript.loop_counts.insert(StageName::FrameworkEvaluation, revisions);
        let code = self.generate_code(requirements, &analysis, &framework)?;
        let outcome = self.optimize_code(&code, requirements)?;
        Ok((outcome.code.clone(), framework, outcome))
    }

    pub fn analyze_requirements(&mut self, requirements: &str) -> Result<String, PipelineError> {
        if requirements.trim().is_empty() {
            return Err(PipelineError::Precondition("problem statement is empty".into()));
        }
        let prompt = template::MC_REQUIREMENTS.render(&[("requirements", requirements)])?;
        self.call(StageName::RequirementsAnalysis, 1, prompt)
    }

    pub fn select_patterns(&mut self, analysis: &str) -> Result<Vec<ModulePattern>, PipelineError> {
        let prompt = template::MC_PATTERNS.render(&[("analysis", analysis)])?;
        let first = self.call(StageName::PatternSelection, 1, prompt.clone())?;
        let reason = match parse_module_patterns(&first) {
            Ok(modules) => return Ok(modules),
            Err(reason) => reason,
        };
        let second = self.call(StageName::PatternSelection, 2, reprompt(&prompt, &reason))?;
        parse_module_patterns(&second).map_err(|message| PipelineError::Stage { stage: StageName::PatternSelection, message })
    }

    pub fn design_framework(
        &mut self,
        analysis: &str,
        modules: Vec<ModulePattern>,
        feedback: Option<&str>,
        iteration: u32,
    ) -> Result<FrameworkSpec, PipelineError> {
        let patterns = FrameworkSpec { modules: modules.clone(), ..FrameworkSpec::default() }.patterns_text();
        let prompt = template::MC_FRAMEWORK.render(&[
            ("analysis", analysis),
            ("patterns", &patterns),
            ("feedback", feedback.unwrap_or("")),
            ("interface_name", &self.pipeline.config.interface_name),
        ])?;
        let response = self.call(StageName::FrameworkDesign, iteration, prompt)?;
        Ok(parse_framework(&response, modules))
    }

    pub fn evaluate_framework(
        &mut self,
        requirements: &str,
        analysis: &str,
        framework: &FrameworkSpec,
        iteration: u32,
    ) -> Result<(Verdict, String), PipelineError> {
        let prompt = template::MC_EVALUATION.render(&[
            ("requirements", requirements),
            ("analysis", analysis),
            ("framework", &framework.render()),
        ])?;
        let response = self.call(StageName::FrameworkEvaluation, iteration, prompt)?;
        Ok(classify_evaluation(&response))
    }

    fn code_problem(&self, code: &str) -> Option<String> {
        let name = &self.pipeline.config.interface_name;
        if let Err(e) = parser::parse_source(code) {
            return Some(format!("the code does not parse ({e})"));
        }
        (!parser::defines(code, name)).then(|| format!("the code does not define a top-level function named `{name}`"))
    }

    pub fn generate_code(&mut self, requirements: &str, analysis: &str, framework: &FrameworkSpec) -> Result<String, PipelineError> {
        let config = &self.pipeline.config;
        let prompt = template::MC_CODEGEN.render(&[
            ("requirements", requirements),
            ("analysis", analysis),
            ("framework", &framework.render()),
            ("interface_name", &config.interface_name),
            ("seed_test", &config.seed_test),
        ])?;
        let mut current_prompt = prompt.clone();
        for iteration in 1..=2 {
            let response = self.call(StageName::CodeGeneration, iteration, current_prompt)?;
            let code = llm_gateway::extract_code_block(&response).code;
            match self.code_problem(&code) {
                None => return Ok(code),
                Some(reason) if iteration == 1 => current_prompt = reprompt(&prompt, &reason),
                Some(message) => return Err(PipelineError::Stage { stage: StageName::CodeGeneration, message }),
            }
        }
        unreachable!("loop returns on its second iteration")
    }

    fn seed_job(&self, code: &str) -> SandboxJob {
        let config = &self.pipeline.config;
        SandboxJob::new(code, vec![config.seed_test.clone()], config.interface_name.clone())
            .with_limits(config.sandbox_timeout, config.sandbox_memory)
    }

    /// Run the seed test; on failure ask for a fix, up to the optimization cap.
    pub fn optimize_code(&mut self, code: &str, requirements: &str) -> Result<OptimizationOutcome, PipelineError> {
        let cap = self.pipeline.config.optimization_cap;
        let mut current = code.to_string();
        let mut best: Option<(u8, String, SandboxVerdict)> = None;
        let mut iterations = 0;
        loop {
            let verdict = self.pipeline.sandbox.run(&self.seed_job(&current))?;
            let valid = self.code_problem(&current).is_none();
            if valid && verdict.passed() {
                self.transcript.loop_counts.insert(StageName::CodeOptimization, iterations);
                return Ok(OptimizationOutcome { code: current, iterations, passed: true, flagged: false, last_verdict: verdict });
            }
            let rank = status_rank(verdict.status);
            if valid && best.as_ref().is_none_or(|(r, _, _)| rank >= *r) {
                best = Some((rank, current.clone(), verdict.clone()));
            }
            if iterations == cap {
                let (_, code, verdict) = best.unwrap_or((0, current, verdict));
                self.transcript.loop_counts.insert(StageName::CodeOptimization, iterations);
                return Ok(OptimizationOutcome { code, iterations, passed: false, flagged: true, last_verdict: verdict });
            }
            iterations += 1;
            let config = &self.pipeline.config;
            let failing = verdict.failed_index.map_or_else(String::new, |_| format!("\nFailing test: {}", config.seed_test));
            let prompt = template::MC_OPTIMIZATION.render(&[
                ("requirements", requirements),
                ("code", current.trim_end()),
                ("seed_test", &config.seed_test),
                ("interface_name", &config.interface_name),
                ("verdict", &format!("{}{failing}", verdict.describe())),
                ("stderr_excerpt", &verdict.stderr_excerpt),
            ])?;
            let response = self.call(StageName::CodeOptimization, iterations, prompt)?;
            current = llm_gateway::extract_code_block(&response).code;
        }
    }
}
