//! Maintainability tooling for generated Python code: static and dynamic
//! metrics, a sandboxed test runner, a multi-agent code generator, a builder
//! for requirement-change benchmarks, and two-phase experiment runs.

pub mod benchgen;
pub mod corpus;
pub mod experiment;
pub mod llm_gateway;
pub mod metrics_dynamic;
pub mod metrics_static;
pub mod parser;
pub mod pipeline;
pub mod sandbox;
pub mod template;

pub use corpus::{ChangePattern, Dataset, Level, Problem, ProblemVariant};
pub use experiment::{ProbeResult, Report, RunManifest, StrategyKind};
pub use llm_gateway::{Cassette, CassetteMode, ChatRequest, Gateway};
pub use metrics_dynamic::DiffVolume;
pub use metrics_static::StaticReport;
pub use pipeline::{AgentTranscript, PipelineConfig};
pub use sandbox::{Sandbox, SandboxConfig, SandboxJob, SandboxVerdict, VerdictStatus};
