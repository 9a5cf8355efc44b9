//! Regenerates `tests/fixtures/replay/cassette.jsonl` from a deterministic scripted model.
//!
//!     cargo run -p maintainkit-core --example record_fixture_cassette

use std::path::Path;
use std::sync::Arc;

use maintainkit::corpus::{self, ChangePattern, Dataset, Level};
use maintainkit::experiment::{self, CassetteRef, RunManifest, StrategyKind};
use maintainkit::llm_gateway::{Cassette, CassetteEntry, CassetteMode, ChatRequest, Gateway, ScriptedBackend};
use maintainkit::sandbox::Sandbox;

const MODEL: &str = "fixture-model";

const PATTERNS: &str = r#"{"modules": [
  {"name": "input", "main_pattern": "Adapter", "rationale": "isolates the input shape", "alternatives": ["Facade"]},
  {"name": "core", "main_pattern": "Strategy", "rationale": "the computation may be swapped"}
]}"#;

fn fenced(code: &str) -> String {
    format!("```python\n{}\n```\n", code.trim_end())
}

/// Keeps the interface name but makes the entry point return nothing.
fn hollow(code: &str, name: &str) -> String {
    format!("{}\n\n\ndef {name}(*args, **kwargs):\n    return None\n", code.trim_end())
}

fn answer(dataset: &Dataset, req: &ChatRequest) -> String {
    let parts: Vec<&str> = req.tag.split('/').collect();
    match parts.as_slice() {
        ["phase1", id, sample, "direct"] => {
            let problem = dataset.problem(id).expect("known problem");
            let code = &problem.solution;
            match sample.parse::<u32>().unwrap() {
                0 => fenced(code),
                1 => fenced(&format!("# straightforward version\n{code}")),
                2 => format!("Here is the function.\n\n{}\nIt runs in linear time.\n", fenced(code)),
                3 => code.clone(),
                _ => fenced(&format!("\"\"\"{}\"\"\"\n\n{code}", problem.interface_name)),
            }
        }
        ["phase1", id, sample, "maintaincoder", stage, iteration] => {
            let problem = dataset.problem(id).expect("known problem");
            let sample: u32 = sample.parse().unwrap();
            let iteration: u32 = iteration.parse().unwrap();
            let structured = format!(
                "\"\"\"Solution module for {}.\"\"\"\n\n__all__ = [\"{}\"]\n\n\n{}",
                problem.id,
                problem.interface_name,
                problem.solution.trim_end()
            );
            match *stage {
                "analysis" => format!("Core functionality: {}\nLikely changes: new inputs, new error cases.", problem.interface_name),
                "patterns" => PATTERNS.to_string(),
                "design" => format!(
                    "Class structure:\nmodule {} exposing {}\n\nDependencies:\ninput -> core (revision {iteration})",
                    problem.id, problem.interface_name
                ),
                "evaluation" if sample == 0 && iteration == 1 => "The input adapter is missing.\nVERDICT: REVISE".into(),
                "evaluation" => "The split is sound.\nVERDICT: ACCEPT".into(),
                "codegen" if sample == 1 => fenced(&hollow(&problem.solution, &problem.interface_name)),
                "codegen" => fenced(&structured),
                "optimization" => fenced(&structured),
                other => panic!("unexpected stage {other}"),
            }
        }
        ["phase2", id, pattern, sample] => {
            let problem = dataset.problem(id).expect("known problem");
            let pattern = pattern.parse::<ChangePattern>().expect("known pattern");
            let variant = dataset
                .variants
                .iter()
                .find(|v| v.parent_id == problem.id && v.pattern == pattern)
                .expect("variant exists");
            match sample.parse::<u32>().unwrap() {
                _ if pattern == ChangePattern::DataStructure && problem.level == Level::Competition => fenced(&problem.solution),
                4 => fenced(&problem.solution),
                3 if pattern == ChangePattern::ErrorHandling => "I cannot change this code safely.".into(),
                s => fenced(&format!("{}{}", variant.solution.trim_end(), "\n".repeat(s as usize))),
            }
        }
        _ => panic!("unexpected tag {}", req.tag),
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/replay");
    let dataset = corpus::load_dataset(&fixtures.join("dataset.jsonl"))?;
    let cassette_path = fixtures.join("cassette.jsonl");
    if cassette_path.exists() {
        std::fs::remove_file(&cassette_path)?;
    }
    let cassette = Arc::new(Cassette::open(&cassette_path, CassetteMode::Record)?);
    let script_data = dataset.clone();
    let backend = Arc::new(ScriptedBackend::new(move |req, _| Ok(answer(&script_data, req))));
    let gateway = Gateway::new(cassette, Some(backend));
    let runs = tempfile::tempdir()?;
    for strategy in [StrategyKind::Direct, StrategyKind::MaintainCoder] {
        let mut manifest = RunManifest::new(&dataset, strategy, MODEL);
        manifest.cassettes = vec![CassetteRef::describe(&cassette_path, CassetteMode::Record)];
        let (store, _) = experiment::phase1(&gateway, Sandbox::shared(), &dataset, manifest, runs.path())?;
        // phase II forbids phase I tags on its gateway for good, so it gets its own
        let data = dataset.clone();
        let probe_backend = Arc::new(ScriptedBackend::new(move |req, _| Ok(answer(&data, req))));
        let probe_gateway = Gateway::new(Arc::new(Cassette::open(&cassette_path, CassetteMode::Record)?), Some(probe_backend));
        experiment::phase2(&probe_gateway, Sandbox::shared(), &store, Vec::new())?;
    }

    let text = std::fs::read_to_string(&cassette_path)?;
    let mut entries: Vec<CassetteEntry> = text.lines().map(serde_json::from_str).collect::<Result<_, _>>()?;
    entries.sort_by(|a, b| (&a.tag, &a.fingerprint).cmp(&(&b.tag, &b.fingerprint)));
    entries.dedup_by(|a, b| a.fingerprint == b.fingerprint);
    let mut out = String::new();
    for entry in &entries {
        out.push_str(&serde_json::to_string(entry)?);
        out.push('\n');
    }
    std::fs::write(&cassette_path, out)?;
    println!("{} entries -> {}", entries.len(), cassette_path.display());
    Ok(())
}
