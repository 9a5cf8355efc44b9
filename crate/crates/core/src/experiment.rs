//! Two-phase maintainability experiments.
//!
//! Phase I asks a generator strategy for `n` initial solutions per problem
//! and records their static metrics. Phase II asks a fixed probe model to
//! adapt each solution to every requirement-change variant, runs the
//! variant's tests, and measures how much code changed.
//!
//! # Run directory
//!
//! ```text
//! <runs>/<run_id>/
//!   manifest.json
//!   dataset.jsonl
//!   phase1/<problem>/<sample>.src
//!   phase1/<problem>/<sample>.static.json
//!   phase1/<problem>/<sample>.transcript.jsonl   (pipeline strategy only)
//!   phase2/probe_manifest.json
//!   phase2/<problem>/<pattern>/<sample>.probe.json
//!   report.json, report.csv, report.md
//! ```
//!
//! Artifacts are write-once: rewriting one with different bytes is an error.
//! Only the report files are regenerated.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{self, ChangePattern, CorpusError, Dataset, Problem, ProblemVariant};
use crate::llm_gateway::{self, CassetteMode, ChatRequest, Gateway, GatewayError};
use crate::metrics_dynamic::{self, DiffVolume, ProbeObservation};
use crate::metrics_static::{self, StaticReport};
use crate::parser;
use crate::pipeline::{Clock, Pipeline, PipelineConfig, PipelineError};
use crate::sandbox::{Sandbox, SandboxError, SandboxJob, SandboxVerdict, DEFAULT_MEMORY_CAP, DEFAULT_TIMEOUT};
use crate::template::{self, Template, TemplateError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Direct,
    #[serde(rename = "cot")]
    ChainOfThought,
    #[serde(rename = "plan")]
    SelfPlanning,
    MaintainCoder,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] =
        [StrategyKind::Direct, StrategyKind::ChainOfThought, StrategyKind::SelfPlanning, StrategyKind::MaintainCoder];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Direct => "direct",
            StrategyKind::ChainOfThought => "cot",
            StrategyKind::SelfPlanning => "plan",
            StrategyKind::MaintainCoder => "maintaincoder",
        }
    }

    /// Prompt for the single-call strategies.
    pub fn template(self) -> Option<Template> {
        match self {
            StrategyKind::Direct => Some(template::STRATEGY_DIRECT),
            StrategyKind::ChainOfThought => Some(template::STRATEGY_COT),
            StrategyKind::SelfPlanning => Some(template::STRATEGY_PLAN),
            StrategyKind::MaintainCoder => None,
        }
    }
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown strategy `{s}` (expected direct, cot, plan or maintaincoder)"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CassetteRef {
    pub name: String,
    pub mode: CassetteMode,
    /// Content hash when the cassette was only read.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sha256: Option<String>,
}

impl CassetteRef {
    pub fn describe(path: &Path, mode: CassetteMode) -> Self {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let sha256 = match mode {
            CassetteMode::Replay => fs::read(path).ok().map(|b| hex::encode(Sha256::digest(b))),
            _ => None,
        };
        CassetteRef { name, mode, sha256 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    #[serde(default)]
    pub run_id: String,
    pub dataset: String,
    pub dataset_sha256: String,
    pub strategy: StrategyKind,
    pub model_id: String,
    pub probe_model_id: String,
    pub samples: u64,
    pub ks: Vec<u64>,
    pub gamma: f64,
    pub horizon: u32,
    pub patterns: Vec<ChangePattern>,
    pub framework_eval_cap: u32,
    pub optimization_cap: u32,
    pub sandbox_timeout_ms: u64,
    pub sandbox_memory: u64,
    pub clock: Clock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created: Option<String>,
    pub cassettes: Vec<CassetteRef>,
}

impl RunManifest {
    pub fn new(dataset: &Dataset, strategy: StrategyKind, model_id: impl Into<String>) -> Self {
        let model_id = model_id.into();
        RunManifest {
            run_id: String::new(),
            dataset: dataset.name.clone(),
            dataset_sha256: hex::encode(Sha256::digest(dataset.to_jsonl().as_bytes())),
            strategy,
            probe_model_id: model_id.clone(),
            model_id,
            samples: 5,
            ks: vec![5],
            gamma: 1.0,
            horizon: 1,
            patterns: ChangePattern::ALL.to_vec(),
            framework_eval_cap: 3,
            optimization_cap: 5,
            sandbox_timeout_ms: DEFAULT_TIMEOUT.as_millis() as u64,
            sandbox_memory: DEFAULT_MEMORY_CAP,
            clock: Clock::Logical,
            created: None,
            cassettes: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::InvalidManifest(m));
        if self.samples == 0 {
            return bad("samples must be at least 1".into());
        }
        if self.ks.is_empty() || self.ks.contains(&0) {
            return bad("k values must be non-empty and positive".into());
        }
        if let Some(&k) = self.ks.iter().max().filter(|&&k| k > self.samples) {
            return bad(format!("k = {k} exceeds samples n = {}", self.samples));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma {} outside (0, 1]", self.gamma));
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if self.patterns.is_empty() {
            return bad("no change patterns selected".into());
        }
        if self.framework_eval_cap == 0 || self.optimization_cap == 0 || self.sandbox_timeout_ms == 0 {
            return bad("loop caps and sandbox timeout must be positive".into());
        }
        Ok(())
    }

    /// Content hash of everything except the id and creation time.
    pub fn compute_run_id(&self) -> String {
        let mut body = self.clone();
        body.run_id = String::new();
        body.created = None;
        let bytes = serde_json::to_vec(&body).expect("manifest serializes");
        hex::encode(&Sha256::digest(bytes)[..8])
    }

    pub fn sandbox_timeout(&self) -> Duration {
        Duration::from_millis(self.sandbox_timeout_ms)
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid run manifest: {0}")]
    InvalidManifest(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {reason}")]
    Artifact { path: PathBuf, reason: String },
    #[error("{path} already exists with different content")]
    Conflict { path: PathBuf },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{context}: {source}")]
    Gateway { context: String, source: GatewayError },
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("maintainability estimate: {0}")]
    Domain(String),
}

fn is_hard_gateway_error(e: &GatewayError) -> bool {
    matches!(e, GatewayError::ReplayMiss { .. } | GatewayError::ForbiddenTag { .. } | GatewayError::NoBackend(_) | GatewayError::Cassette(_))
}

/// Directory-safe form of an identifier.
pub fn path_component(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' }).collect()
}

/// Handle on a run directory.
#[derive(Debug, Clone)]
pub struct RunStore {
    pub root: PathBuf,
}

impl RunStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunStore { root: root.into() }
    }

    pub fn path(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.root.join(rel)
    }

    fn io(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
        move |source| ExperimentError::Io { path: path.to_path_buf(), source }
    }

    /// Write-once: identical rewrites are accepted, different bytes are refused.
    pub fn write_new(&self, rel: impl AsRef<Path>, bytes: &[u8]) -> Result<(), ExperimentError> {
        let path = self.path(rel);
        if let Ok(existing) = fs::read(&path) {
            return if existing == bytes { Ok(()) } else { Err(ExperimentError::Conflict { path }) };
        }
        self.write_replace_at(&path, bytes)
    }

    fn write_replace_at(&self, path: &Path, bytes: &[u8]) -> Result<(), ExperimentError> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(Self::io(dir))?;
        }
        fs::write(path, bytes).map_err(Self::io(path))
    }

    pub fn write_replace(&self, rel: impl AsRef<Path>, bytes: &[u8]) -> Result<(), ExperimentError> {
        let path = self.path(rel);
        self.write_replace_at(&path, bytes)
    }

    pub fn read_string(&self, rel: impl AsRef<Path>) -> Result<String, ExperimentError> {
        let path = self.path(rel);
        fs::read_to_string(&path).map_err(Self::io(&path))
    }

    pub fn read_json<T: for<'de> Deserialize<'de>>(&self, rel: impl AsRef<Path>) -> Result<T, ExperimentError> {
        let path = self.path(rel);
        let text = fs::read_to_string(&path).map_err(Self::io(&path))?;
        serde_json::from_str(&text).map_err(|e| ExperimentError::Artifact { path, reason: e.to_string() })
    }

    pub fn exists(&self, rel: impl AsRef<Path>) -> bool {
        self.path(rel).exists()
    }

    pub fn manifest(&self) -> Result<RunManifest, ExperimentError> {
        self.read_json("manifest.json")
    }

    pub fn dataset(&self) -> Result<Dataset, ExperimentError> {
        let manifest = self.manifest()?;
        let text = self.read_string("dataset.jsonl")?;
        Ok(Dataset::from_jsonl(&manifest.dataset, &text)?)
    }

    pub fn sample_stem(problem_id: &str, sample: u64) -> PathBuf {
        Path::new("phase1").join(path_component(problem_id)).join(sample.to_string())
    }

    pub fn probe_path(problem_id: &str, pattern: ChangePattern, sample: u64) -> PathBuf {
        Path::new("phase2")
            .join(path_component(problem_id))
            .join(pattern.short())
            .join(format!("{sample}.probe.json"))
    }
}

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(ext);
    PathBuf::from(s)
}

fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("artifact serializes");
    bytes.push(b'\n');
    bytes
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase1Sample {
    pub problem_id: String,
    pub sample_index: u64,
    pub valid: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default)]
    pub flags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<StaticReport>,
    #[serde(skip)]
    pub code: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub problem_id: String,
    pub pattern: ChangePattern,
    pub sample_index: u64,
    pub modified_code: String,
    pub verdict: SandboxVerdict,
    /// `None` when there was no usable code to compare.
    pub ast_sim: Option<f64>,
    pub diff: Option<DiffVolume>,
    #[serde(default)]
    pub flags: Vec<String>,
}

impl ProbeResult {
    pub fn observation(&self) -> ProbeObservation {
        ProbeObservation {
            problem_id: self.problem_id.clone(),
            pattern: self.pattern,
            passed: self.verdict.passed(),
            ast_sim: self.ast_sim,
            diff: self.diff,
        }
    }
}

/// Extracted code, flags, and the generation error if the call failed.
type Generated = (Option<String>, Vec<String>, Option<String>);

/// Single-call generation of one Phase I sample.
fn single_call_sample(
    gateway: &Gateway,
    manifest: &RunManifest,
    problem: &Problem,
    sample: u64,
) -> Result<Generated, ExperimentError> {
    let template = manifest.strategy.template().expect("single-call strategy");
    let seed = problem.tests.first().map(String::as_str).unwrap_or("");
    let prompt = template.render(&[
        ("requirements", &problem.statement),
        ("interface_name", &problem.interface_name),
        ("seed_test", seed),
    ])?;
    let tag = format!("phase1/{}/{sample}/{}", problem.id, manifest.strategy.name());
    let request = ChatRequest::user(manifest.model_id.clone(), tag, prompt);
    match gateway.complete(&request) {
        Ok(response) => {
            let extracted = llm_gateway::extract_code_block(&response);
            let flags = if extracted.fallback { vec!["extraction_fallback".to_string()] } else { Vec::new() };
            Ok((Some(extracted.code), flags, None))
        }
        Err(e) if is_hard_gateway_error(&e) => Err(ExperimentError::Gateway { context: request.tag, source: e }),
        Err(e) => Ok((None, Vec::new(), Some(e.to_string()))),
    }
}

/// Generate and persist one Phase I sample.
fn phase1_sample(
    gateway: &Gateway,
    sandbox: &Sandbox,
    store: &RunStore,
    manifest: &RunManifest,
    problem: &Problem,
    sample: u64,
) -> Result<Phase1Sample, ExperimentError> {
    let stem = RunStore::sample_stem(&problem.id, sample);
    let (code, mut flags, mut error) = match manifest.strategy {
        StrategyKind::MaintainCoder => {
            let mut config = PipelineConfig::for_problem(manifest.model_id.clone(), problem);
            config.tag_prefix = format!("phase1/{}/{sample}", problem.id);
            config.framework_eval_cap = manifest.framework_eval_cap;
            config.optimization_cap = manifest.optimization_cap;
            config.sandbox_timeout = manifest.sandbox_timeout();
            config.sandbox_memory = manifest.sandbox_memory;
            config.clock = manifest.clock;
            let pipeline = Pipeline::new(gateway, sandbox, config).map_err(|e| ExperimentError::InvalidManifest(e.to_string()))?;
            match pipeline.run_pipeline(&problem.statement) {
                Ok(out) => {
                    store.write_new(with_ext(&stem, ".transcript.jsonl"), out.transcript.to_jsonl().as_bytes())?;
                    let flags = if out.optimization.flagged { vec!["optimization_cap_reached".to_string()] } else { Vec::new() };
                    (Some(out.code), flags, None)
                }
                Err(failure) => {
                    store.write_new(with_ext(&stem, ".transcript.jsonl"), failure.transcript.to_jsonl().as_bytes())?;
                    match failure.error {
                        PipelineError::Gateway { source, stage } if is_hard_gateway_error(&source) => {
                            return Err(ExperimentError::Gateway { context: format!("{}/{sample} {stage:?}", problem.id), source });
                        }
                        PipelineError::Sandbox(e) => return Err(e.into()),
                        other => (None, Vec::new(), Some(other.to_string())),
                    }
                }
            }
        }
        _ => single_call_sample(gateway, manifest, problem, sample)?,
    };
    let mut report = None;
    if let Some(code) = &code {
        store.write_new(with_ext(&stem, ".src"), code.as_bytes())?;
        match metrics_static::static_report(code) {
            Ok(r) => report = Some(r),
            Err(e) => error = Some(format!("static metrics: {e}")),
        }
        if !parser::defines(code, &problem.interface_name) {
            flags.push("interface_missing".into());
        }
    }
    let record = Phase1Sample {
        problem_id: problem.id.clone(),
        sample_index: sample,
        valid: report.is_some(),
        error,
        flags,
        report,
        code,
    };
    store.write_new(with_ext(&stem, ".static.json"), &to_json_bytes(&record))?;
    Ok(record)
}

fn check_distinct_paths(dataset: &Dataset) -> Result<(), ExperimentError> {
    let mut seen = BTreeMap::new();
    for p in &dataset.problems {
        if let Some(other) = seen.insert(path_component(&p.id), &p.id) {
            return Err(ExperimentError::InvalidManifest(format!("problem ids `{other}` and `{}` map to the same directory", p.id)));
        }
    }
    Ok(())
}

/// Phase I: create the run directory and generate `n` samples per problem.
pub fn phase1(
    gateway: &Gateway,
    sandbox: &Sandbox,
    dataset: &Dataset,
    mut manifest: RunManifest,
    runs_root: &Path,
) -> Result<(RunStore, Vec<Phase1Sample>), ExperimentError> {
    manifest.validate()?;
    check_distinct_paths(dataset)?;
    manifest.dataset_sha256 = hex::encode(Sha256::digest(dataset.to_jsonl().as_bytes()));
    manifest.run_id = manifest.compute_run_id();
    let store = RunStore::new(runs_root.join(&manifest.run_id));
    store.write_new("manifest.json", &to_json_bytes(&manifest))?;
    store.write_new("dataset.jsonl", dataset.to_jsonl().as_bytes())?;
    let jobs: Vec<(&Problem, u64)> =
        dataset.problems.iter().flat_map(|p| (0..manifest.samples).map(move |s| (p, s))).collect();
    let samples = jobs
        .par_iter()
        .map(|&(p, s)| phase1_sample(gateway, sandbox, &store, &manifest, p, s))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((store, samples))
}

/// Interface the variant's tests call, falling back to the parent's.
pub fn variant_interface(problem: &Problem, variant: &ProblemVariant) -> String {
    variant.interface_name().unwrap_or_else(|_| problem.interface_name.clone())
}

/// Ask the probe model to adapt `c0` to the variant, then test and measure the change.
#[allow(clippy::too_many_arguments)]
pub fn phase2_probe(
    gateway: &Gateway,
    sandbox: &Sandbox,
    c0: &str,
    problem: &Problem,
    variant: &ProblemVariant,
    probe_model: &str,
    sample_index: u64,
    limits: (Duration, u64),
) -> Result<ProbeResult, ExperimentError> {
    let interface = variant_interface(problem, variant);
    let prompt = template::PHASE2_PROBE.render(&[
        ("test_interface_name", &interface),
        ("original_requirements", &problem.statement),
        ("original_code", c0.trim_end()),
        ("new_requirements", &variant.statement),
        ("test_case", variant.tests.first().map(String::as_str).unwrap_or("")),
    ])?;
    let tag = format!("phase2/{}/{}/{sample_index}", problem.id, variant.pattern.short());
    let request = ChatRequest::user(probe_model, tag, prompt);
    let response = gateway
        .complete(&request)
        .map_err(|source| ExperimentError::Gateway { context: request.tag.clone(), source })?;
    let extracted = llm_gateway::extract_code_block(&response);
    let mut flags = Vec::new();
    if extracted.fallback {
        flags.push("extraction_fallback".to_string());
    }
    let modified = extracted.code;
    if let Err(e) = parser::parse_source(&modified) {
        flags.push("unparsable_output".to_string());
        return Ok(ProbeResult {
            problem_id: problem.id.clone(),
            pattern: variant.pattern,
            sample_index,
            modified_code: modified,
            verdict: SandboxVerdict::syntax_error(e.to_string()),
            ast_sim: None,
            diff: None,
            flags,
        });
    }
    let job = SandboxJob::new(modified.clone(), variant.tests.clone(), interface).with_limits(limits.0, limits.1);
    let verdict = sandbox.run(&job)?;
    let ast_sim = metrics_dynamic::ast_similarity(c0, &modified).ok();
    let diff = metrics_dynamic::code_diff(c0, &modified).ok();
    Ok(ProbeResult { problem_id: problem.id.clone(), pattern: variant.pattern, sample_index, modified_code: modified, verdict, ast_sim, diff, flags })
}

fn invalid_probe(problem: &Problem, variant: &ProblemVariant, sample: u64, why: &str) -> ProbeResult {
    ProbeResult {
        problem_id: problem.id.clone(),
        pattern: variant.pattern,
        sample_index: sample,
        modified_code: String::new(),
        verdict: SandboxVerdict::syntax_error(why),
        ast_sim: None,
        diff: None,
        flags: vec!["invalid_phase1_sample".to_string()],
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeManifest {
    pub probe_model_id: String,
    pub cassettes: Vec<CassetteRef>,
}

/// Phase II over a persisted run. Phase I tags are refused while it runs.
pub fn phase2(gateway: &Gateway, sandbox: &Sandbox, store: &RunStore, cassettes: Vec<CassetteRef>) -> Result<Vec<ProbeResult>, ExperimentError> {
    let manifest = store.manifest()?;
    let dataset = store.dataset()?;
    gateway.forbid_tag_prefix("phase1/");
    store.write_new(
        Path::new("phase2").join("probe_manifest.json"),
        &to_json_bytes(&ProbeManifest { probe_model_id: manifest.probe_model_id.clone(), cassettes }),
    )?;
    let patterns: BTreeSet<ChangePattern> = manifest.patterns.iter().copied().collect();
    let jobs: Vec<(&Problem, &ProblemVariant, u64)> = corpus::iter_variants(&dataset, &patterns)
        .flat_map(|(p, v)| (0..manifest.samples).map(move |s| (p, v, s)))
        .collect();
    let limits = (manifest.sandbox_timeout(), manifest.sandbox_memory);
    jobs.par_iter()
        .map(|&(problem, variant, sample)| {
            let stem = RunStore::sample_stem(&problem.id, sample);
            let status: Phase1Sample = store.read_json(with_ext(&stem, ".static.json"))?;
            let result = if status.valid {
                let c0 = store.read_string(with_ext(&stem, ".src"))?;
                phase2_probe(gateway, sandbox, &c0, problem, variant, &manifest.probe_model_id, sample, limits)?
            } else {
                invalid_probe(problem, variant, sample, status.error.as_deref().unwrap_or("phase I sample is invalid"))
            };
            store.write_new(RunStore::probe_path(&problem.id, variant.pattern, sample), &to_json_bytes(&result))?;
            Ok(result)
        })
        .collect()
}

/// First-order estimate for `horizon == 1` (mean cost); for longer horizons
/// the discounted sum over the first `horizon` costs.
pub fn estimate_maintainability(costs: &[f64], gamma: f64, horizon: usize) -> Result<f64, ExperimentError> {
    if costs.is_empty() {
        return Err(ExperimentError::Domain("no costs".into()));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(ExperimentError::Domain(format!("gamma {gamma} outside (0, 1]")));
    }
    match horizon {
        0 => Err(ExperimentError::Domain("horizon must be at least 1".into())),
        // running mean: exact when every cost is the same
        1 => Ok(costs.iter().enumerate().fold(0.0, |m, (i, c)| m + (c - m) / (i + 1) as f64)),
        h => Ok(costs.iter().take(h).enumerate().map(|(i, c)| gamma.powi(i as i32) * c).sum()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset: String,
    pub strategy: StrategyKind,
    /// `all`, or a pattern short name.
    pub pattern: String,
    pub mi: Option<f64>,
    pub cc: Option<f64>,
    pub pass_at_k: BTreeMap<u64, Option<f64>>,
    pub ast_sim: Option<f64>,
    pub diff_per: Option<f64>,
    pub diff_abs: Option<f64>,
    pub probes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub run_id: String,
    pub model_id: String,
    pub probe_model_id: String,
    pub samples: u64,
    pub ks: Vec<u64>,
    pub phase1_samples: usize,
    pub phase1_invalid: usize,
    pub rows: Vec<ReportRow>,
    pub maintainability_estimate: Option<f64>,
    pub gaps: Vec<String>,
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Fold persisted artifacts into report tables. Missing artifacts become gaps.
pub fn aggregate_report(store: &RunStore) -> Result<Report, ExperimentError> {
    let manifest = store.manifest()?;
    let dataset = store.dataset()?;
    let mut gaps = Vec::new();

    let mut mi = Vec::new();
    let mut cc = Vec::new();
    let mut phase1_samples = 0;
    let mut phase1_invalid = 0;
    for problem in &dataset.problems {
        for s in 0..manifest.samples {
            let rel = with_ext(&RunStore::sample_stem(&problem.id, s), ".static.json");
            if !store.exists(&rel) {
                gaps.push(format!("missing {}", rel.display()));
                continue;
            }
            let sample: Phase1Sample = store.read_json(&rel)?;
            phase1_samples += 1;
            match sample.report {
                Some(r) if sample.valid => {
                    mi.push(r.maintainability_index);
                    cc.push(r.cyclomatic_complexity);
                }
                _ => phase1_invalid += 1,
            }
        }
    }

    let patterns: BTreeSet<ChangePattern> = manifest.patterns.iter().copied().collect();
    let mut probes: Vec<ProbeResult> = Vec::new();
    for (problem, variant) in corpus::iter_variants(&dataset, &patterns) {
        for s in 0..manifest.samples {
            let rel = RunStore::probe_path(&problem.id, variant.pattern, s);
            if store.exists(&rel) {
                probes.push(store.read_json(&rel)?);
            } else {
                gaps.push(format!("missing {}", rel.display()));
            }
        }
    }

    let row = |label: &str, selected: &[ProbeObservation]| -> ReportRow {
        let agg = metrics_dynamic::dynamic_report(selected, &manifest.ks).ok();
        ReportRow {
            dataset: manifest.dataset.clone(),
            strategy: manifest.strategy,
            pattern: label.to_string(),
            mi: mean(&mi),
            cc: mean(&cc),
            pass_at_k: manifest.ks.iter().map(|&k| (k, agg.as_ref().and_then(|a| a.pass_at_k.get(&k).copied()))).collect(),
            ast_sim: agg.as_ref().and_then(|a| a.ast_sim),
            diff_per: agg.as_ref().and_then(|a| a.diff_per),
            diff_abs: agg.as_ref().and_then(|a| a.diff_abs),
            probes: selected.len(),
        }
    };
    let observations: Vec<ProbeObservation> = probes.iter().map(ProbeResult::observation).collect();
    let mut rows = vec![row("all", &observations)];
    for pattern in &manifest.patterns {
        let subset: Vec<ProbeObservation> = observations.iter().filter(|o| o.pattern == *pattern).cloned().collect();
        if !subset.is_empty() {
            rows.push(row(pattern.short(), &subset));
        }
    }
    if observations.is_empty() {
        gaps.push("no Phase II probes".into());
    }

    let costs: Vec<f64> = probes.iter().filter_map(|p| p.diff.map(|d| d.per)).collect();
    let maintainability_estimate = estimate_maintainability(&costs, manifest.gamma, manifest.horizon as usize).ok();
    Ok(Report {
        run_id: manifest.run_id.clone(),
        model_id: manifest.model_id.clone(),
        probe_model_id: manifest.probe_model_id.clone(),
        samples: manifest.samples,
        ks: manifest.ks.clone(),
        phase1_samples,
        phase1_invalid,
        rows,
        maintainability_estimate,
        gaps,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn md_cell(v: Option<f64>, decimals: usize) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.decimals$}"))
}

impl Report {
    /// Column names: identifying columns, then MI, CC, Pass@k..., AST_sim, per, abs.
    pub fn csv_header(&self) -> Vec<String> {
        let mut h: Vec<String> = ["dataset", "strategy", "pattern", "MI", "CC"].iter().map(|s| s.to_string()).collect();
        h.extend(self.ks.iter().map(|k| format!("Pass@{k}")));
        h.extend(["AST_sim", "per", "abs"].iter().map(|s| s.to_string()));
        h
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.csv_header().join(",");
        out.push('\n');
        for r in &self.rows {
            let mut cells = vec![r.dataset.clone(), r.strategy.to_string(), r.pattern.clone(), cell(r.mi), cell(r.cc)];
            cells.extend(self.ks.iter().map(|k| cell(r.pass_at_k.get(k).copied().flatten())));
            cells.extend([cell(r.ast_sim), cell(r.diff_per), cell(r.diff_abs)]);
            let escaped: Vec<String> =
                cells.into_iter().map(|c| if c.contains([',', '"']) { format!("\"{}\"", c.replace('"', "\"\"")) } else { c }).collect();
            out.push_str(&escaped.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let strategy = self.rows.first().map(|r| r.strategy.to_string()).unwrap_or_default();
        let dataset = self.rows.first().map(|r| r.dataset.clone()).unwrap_or_default();
        let _ = writeln!(out, "# Evaluation report\n");
        let _ = writeln!(
            out,
            "Run `{}`: dataset `{dataset}`, strategy `{strategy}`, generator `{}`, probe model `{}`, n = {}.\n",
            self.run_id, self.model_id, self.probe_model_id, self.samples
        );
        let mut header = vec!["Pattern".to_string(), "MI".into(), "CC".into()];
        header.extend(self.ks.iter().map(|k| format!("Pass@{k}")));
        header.extend(["AST_sim".to_string(), "per".into(), "abs".into()]);
        let _ = writeln!(out, "| {} |", header.join(" | "));
        let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
        for r in &self.rows {
            let mut cells = vec![r.pattern.clone(), md_cell(r.mi, 2), md_cell(r.cc, 2)];
            cells.extend(self.ks.iter().map(|k| {
                r.pass_at_k.get(k).copied().flatten().map_or_else(|| "n/a".into(), |v| format!("{:.1}%", v * 100.0))
            }));
            cells.extend([md_cell(r.ast_sim, 3), md_cell(r.diff_per, 1), md_cell(r.diff_abs, 1)]);
            let _ = writeln!(out, "| {} |", cells.join(" | "));
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "Phase I samples: {} ({} invalid).", self.phase1_samples, self.phase1_invalid);
        let _ = writeln!(out, "Maintainability estimate (mean per-probe `per`): {}.", md_cell(self.maintainability_estimate, 2));
        if !self.gaps.is_empty() {
            let _ = writeln!(out, "\nGaps:\n");
            for g in &self.gaps {
                let _ = writeln!(out, "- {g}");
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        String::from_utf8(to_json_bytes(self)).expect("JSON is UTF-8")
    }

    /// Write report.json, report.csv and report.md into the run directory.
    pub fn write(&self, store: &RunStore) -> Result<(), ExperimentError> {
        store.write_replace("report.json", self.to_json().as_bytes())?;
        store.write_replace("report.csv", self.to_csv().as_bytes())?;
        store.write_replace("report.md", self.to_markdown().as_bytes())
    }
}
