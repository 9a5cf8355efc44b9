use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use maintainkit::benchgen::{BenchBuilder, DEFAULT_CO_EVOLUTION_CAP};
use maintainkit::corpus;
use maintainkit::experiment::{self, CassetteRef, RunManifest, RunStore};
use maintainkit::llm_gateway::HttpBackend;
use maintainkit::metrics_static;
use maintainkit::{Cassette, CassetteMode, ChangePattern, Dataset, Gateway, Sandbox, SandboxConfig, StaticReport};
use serde::Serialize;

use crate::args::{Command, Format};
use crate::config::Settings;
use crate::failure::Failure;

pub fn run(command: &Command, settings: &Settings) -> Result<String, Failure> {
    if let Some(jobs) = settings.jobs {
        // the global pool can only be set once per process; later calls keep the first size
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    match command {
        Command::Metrics { files } => metrics(files, settings),
        Command::BenchBuild { seed, patterns, out, review, cap } => {
            bench_build(settings, seed, patterns, out, review.as_deref(), *cap)
        }
        Command::EvalRun { .. } => eval_run(command, settings),
        Command::Probe { run } => probe(run, settings),
        Command::Report { run } => report(run, settings),
    }
}

fn sandbox(settings: &Settings) -> Sandbox {
    let mut config = SandboxConfig { python: settings.python.clone(), ..SandboxConfig::default() };
    if let Some(jobs) = settings.jobs {
        config.workers = jobs;
    }
    Sandbox::new(config)
}

fn gateway(settings: &Settings) -> Result<Gateway, Failure> {
    let mode = settings.cassette_mode;
    let cassette = match (&settings.cassette, mode) {
        (Some(path), _) => Cassette::open(path, mode)?,
        (None, CassetteMode::Live) => Cassette::in_memory(CassetteMode::Live),
        (None, _) => return Err(Failure::User(format!("cassette mode {mode:?} needs --cassette"))),
    };
    let backend = match mode {
        CassetteMode::Replay => None,
        _ => Some(Arc::new(HttpBackend::from_env()?) as Arc<dyn maintainkit::llm_gateway::ChatBackend>),
    };
    let gateway = Gateway::new(Arc::new(cassette), backend);
    Ok(match settings.rate_limit {
        Some(per_minute) => gateway.with_rate_limit(per_minute),
        None => gateway,
    })
}

fn cassette_refs(settings: &Settings) -> Vec<CassetteRef> {
    settings.cassette.iter().map(|p| CassetteRef::describe(p, settings.cassette_mode)).collect()
}

fn csv_line(cells: &[String]) -> String {
    let escaped: Vec<String> =
        cells.iter().map(|c| if c.contains([',', '"', '\n']) { format!("\"{}\"", c.replace('"', "\"\"")) } else { c.clone() }).collect();
    escaped.join(",") + "\n"
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("output serializes") + "\n"
}

#[derive(Serialize)]
struct FileMetrics {
    file: String,
    #[serde(flatten)]
    report: StaticReport,
}

fn metrics(files: &[PathBuf], settings: &Settings) -> Result<String, Failure> {
    let mut rows = Vec::new();
    for path in files {
        let source = std::fs::read_to_string(path).map_err(|e| Failure::User(format!("{}: {e}", path.display())))?;
        let report = metrics_static::static_report(&source).map_err(|e| Failure::User(format!("{}: {e}", path.display())))?;
        rows.push(FileMetrics { file: path.display().to_string(), report });
    }
    Ok(match settings.format {
        Format::Json => json(&rows),
        Format::Csv => {
            let mut out = csv_line(&["file", "MI", "CC", "V", "SLOC", "comment_ratio"].map(String::from));
            for r in &rows {
                let m = &r.report;
                out += &csv_line(&[
                    r.file.clone(),
                    m.maintainability_index.to_string(),
                    m.cyclomatic_complexity.to_string(),
                    m.halstead_volume.to_string(),
                    m.sloc.to_string(),
                    m.comment_ratio.to_string(),
                ]);
            }
            out
        }
        Format::Md => {
            let mut out = String::from("| File | MI | CC | V | SLOC | Comment ratio |\n|---|---|---|---|---|---|\n");
            for r in &rows {
                let m = &r.report;
                let _ = writeln!(
                    out,
                    "| {} | {:.2} | {:.2} | {:.1} | {} | {:.2} |",
                    r.file, m.maintainability_index, m.cyclomatic_complexity, m.halstead_volume, m.sloc, m.comment_ratio
                );
            }
            out
        }
    })
}

#[derive(Serialize)]
struct BenchSummary {
    out: String,
    review_file: String,
    finalized: usize,
    review: usize,
    by_pattern: BTreeMap<String, (usize, usize)>,
}

fn bench_build(
    settings: &Settings,
    seed: &Path,
    patterns: &[ChangePattern],
    out: &Path,
    review: Option<&Path>,
    cap: Option<u32>,
) -> Result<String, Failure> {
    let seeds = corpus::load_dataset(seed)?;
    let patterns = match (patterns.is_empty(), settings.file.patterns()?) {
        (false, _) => patterns.to_vec(),
        (true, Some(from_file)) => from_file,
        (true, None) => ChangePattern::ALL.to_vec(),
    };
    let gateway = gateway(settings)?;
    let sandbox = sandbox(settings);
    let mut builder = BenchBuilder::new(&gateway, &sandbox, settings.model.clone());
    builder.cap = cap.or(settings.file.co_evolution_cap).unwrap_or(DEFAULT_CO_EVOLUTION_CAP);
    let seeds = Dataset { variants: Vec::new(), ..seeds };
    let built = builder.build(&seeds, &patterns)?;

    let review_path = review.map(Path::to_path_buf).unwrap_or_else(|| {
        let mut p = out.as_os_str().to_owned();
        p.push(".review.jsonl");
        PathBuf::from(p)
    });
    corpus::write_dataset(out, &built.dataset).map_err(|e| Failure::Internal(e.to_string()))?;
    std::fs::write(&review_path, built.review_jsonl()).map_err(|e| Failure::Internal(format!("{}: {e}", review_path.display())))?;

    let mut by_pattern: BTreeMap<String, (usize, usize)> = patterns.iter().map(|p| (p.short().to_string(), (0, 0))).collect();
    for v in &built.dataset.variants {
        by_pattern.entry(v.pattern.short().into()).or_default().0 += 1;
    }
    for r in &built.review {
        by_pattern.entry(r.pattern.short().into()).or_default().1 += 1;
    }
    let summary = BenchSummary {
        out: out.display().to_string(),
        review_file: review_path.display().to_string(),
        finalized: built.dataset.variants.len(),
        review: built.review.len(),
        by_pattern,
    };
    Ok(match settings.format {
        Format::Json => json(&summary),
        Format::Csv => {
            let mut text = csv_line(&["pattern", "finalized", "review"].map(String::from));
            for (p, (f, r)) in &summary.by_pattern {
                text += &csv_line(&[p.clone(), f.to_string(), r.to_string()]);
            }
            text
        }
        Format::Md => {
            let mut text = format!(
                "Built {} variant(s) into {}; {} sent to review ({}).\n\n| Pattern | Finalized | Review |\n|---|---|---|\n",
                summary.finalized, summary.out, summary.review, summary.review_file
            );
            for (p, (f, r)) in &summary.by_pattern {
                let _ = writeln!(text, "| {p} | {f} | {r} |");
            }
            text
        }
    })
}

#[derive(Serialize)]
struct RunSummary {
    run_id: String,
    run_dir: String,
    items: usize,
    invalid: usize,
    flags: BTreeMap<String, usize>,
}

fn render_summary(verb: &str, summary: &RunSummary, format: Format) -> String {
    match format {
        Format::Json => json(summary),
        Format::Csv => {
            csv_line(&["run_id", "run_dir", "items", "invalid"].map(String::from))
                + &csv_line(&[summary.run_id.clone(), summary.run_dir.clone(), summary.items.to_string(), summary.invalid.to_string()])
        }
        Format::Md => {
            let mut out = format!(
                "{verb} `{}` in {}: {} item(s), {} invalid.\n",
                summary.run_id, summary.run_dir, summary.items, summary.invalid
            );
            for (flag, n) in &summary.flags {
                let _ = writeln!(out, "- {flag}: {n}");
            }
            out
        }
    }
}

fn eval_run(command: &Command, settings: &Settings) -> Result<String, Failure> {
    let Command::EvalRun {
        dataset,
        strategy,
        samples,
        ks,
        gamma,
        horizon,
        patterns,
        framework_eval_cap,
        optimization_cap,
        sandbox_timeout_ms,
    } = command
    else {
        unreachable!("eval_run called for another verb")
    };
    let file = &settings.file;
    let data = corpus::load_dataset(dataset)?;
    let mut manifest = RunManifest::new(&data, *strategy, settings.model.clone());
    manifest.probe_model_id = settings.probe_model.clone();
    if let Some(n) = samples.or(file.samples) {
        manifest.samples = n;
    }
    if !ks.is_empty() {
        manifest.ks = ks.clone();
    } else if let Some(from_file) = &file.ks {
        manifest.ks = from_file.clone();
    }
    if let Some(g) = gamma.or(file.gamma) {
        manifest.gamma = g;
    }
    if let Some(h) = horizon.or(file.horizon) {
        manifest.horizon = h;
    }
    if !patterns.is_empty() {
        manifest.patterns = patterns.clone();
    } else if let Some(from_file) = file.patterns()? {
        manifest.patterns = from_file;
    }
    if let Some(c) = framework_eval_cap.or(file.framework_eval_cap) {
        manifest.framework_eval_cap = c;
    }
    if let Some(c) = optimization_cap.or(file.optimization_cap) {
        manifest.optimization_cap = c;
    }
    if let Some(t) = sandbox_timeout_ms.or(file.sandbox_timeout_ms) {
        manifest.sandbox_timeout_ms = t;
    }
    manifest.cassettes = cassette_refs(settings);

    let gateway = gateway(settings)?;
    let sandbox = sandbox(settings);
    let (store, samples) = experiment::phase1(&gateway, &sandbox, &data, manifest, &settings.runs_dir)?;
    let mut flags = BTreeMap::new();
    for s in &samples {
        for f in &s.flags {
            *flags.entry(f.clone()).or_default() += 1;
        }
    }
    let summary = RunSummary {
        run_id: store.root.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        run_dir: store.root.display().to_string(),
        items: samples.len(),
        invalid: samples.iter().filter(|s| !s.valid).count(),
        flags,
    };
    Ok(render_summary("Phase I run", &summary, settings.format))
}

fn probe(run: &str, settings: &Settings) -> Result<String, Failure> {
    let store = RunStore::new(settings.run_dir(run)?);
    let manifest = store.manifest()?;
    let gateway = gateway(settings)?;
    let sandbox = sandbox(settings);
    let probes = experiment::phase2(&gateway, &sandbox, &store, cassette_refs(settings))?;
    let mut flags = BTreeMap::new();
    for p in &probes {
        *flags.entry(format!("verdict {}", p.verdict.status.as_str())).or_default() += 1;
        for f in &p.flags {
            *flags.entry(f.clone()).or_default() += 1;
        }
    }
    let summary = RunSummary {
        run_id: manifest.run_id,
        run_dir: store.root.display().to_string(),
        items: probes.len(),
        invalid: probes.iter().filter(|p| p.flags.iter().any(|f| f == "invalid_phase1_sample")).count(),
        flags,
    };
    Ok(render_summary("Phase II probes for", &summary, settings.format))
}

fn report(run: &str, settings: &Settings) -> Result<String, Failure> {
    let store = RunStore::new(settings.run_dir(run)?);
    let report = experiment::aggregate_report(&store)?;
    report.write(&store)?;
    Ok(match settings.format {
        Format::Json => report.to_json(),
        Format::Csv => report.to_csv(),
        Format::Md => report.to_markdown(),
    })
}
