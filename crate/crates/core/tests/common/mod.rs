//! Stub backends shared by the integration tests.

use std::sync::Arc;

use maintainkit::llm_gateway::{
    Cassette, CassetteMode, ChatRequest, Gateway, ProviderError, RetryPolicy, ScriptedBackend,
};

pub const PATTERNS: &str = r#"{"modules": [
  {"name": "core", "main_pattern": "Strategy", "rationale": "swappable arithmetic", "alternatives": ["Template Method"]},
  {"name": "api", "main_pattern": "Facade", "rationale": "one entry point"}
]}"#;

pub const FRAMEWORK: &str = "Class structure:\nclass Operation: apply(a, b)\n\nDependencies:\napi -> core\n";

pub fn fenced(code: &str) -> String {
    format!("```python\n{code}```\n")
}

/// `(stage slug, iteration)` for a pipeline tag such as `x/maintaincoder/design/2`.
pub fn stage_of(tag: &str) -> Option<(&str, u32)> {
    let mut parts = tag.rsplitn(3, '/');
    let iteration = parts.next()?.parse().ok()?;
    let stage = parts.next()?;
    let rest = parts.next()?;
    (rest == "maintaincoder" || rest.ends_with("/maintaincoder")).then_some((stage, iteration))
}

/// A gateway that never records and always asks `script`.
pub fn scripted(
    script: impl Fn(&ChatRequest, u64) -> Result<String, ProviderError> + Send + Sync + 'static,
) -> (Gateway, Arc<ScriptedBackend>) {
    let backend = Arc::new(ScriptedBackend::new(script));
    let gateway = Gateway::new(Arc::new(Cassette::in_memory(CassetteMode::Live)), Some(backend.clone()))
        .with_retry(RetryPolicy::immediate(3));
    (gateway, backend)
}
