//! Layered settings: flags, then environment (both via clap), then the config file, then defaults.

use std::path::{Path, PathBuf};

use maintainkit::{CassetteMode, ChangePattern};
use serde::Deserialize;

use crate::args::{Cli, Format, Mode};
use crate::failure::Failure;

pub const DEFAULT_CONFIG: &str = "maintainkit.toml";
pub const DEFAULT_MODEL: &str = "gpt-4o-mini";

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub format: Option<Format>,
    pub jobs: Option<usize>,
    pub runs_dir: Option<PathBuf>,
    pub model: Option<String>,
    pub probe_model: Option<String>,
    pub cassette: Option<PathBuf>,
    pub cassette_mode: Option<Mode>,
    pub python: Option<PathBuf>,
    pub rate_limit: Option<u32>,
    pub samples: Option<u64>,
    pub ks: Option<Vec<u64>>,
    pub gamma: Option<f64>,
    pub horizon: Option<u32>,
    pub patterns: Option<Vec<String>>,
    pub framework_eval_cap: Option<u32>,
    pub optimization_cap: Option<u32>,
    pub sandbox_timeout_ms: Option<u64>,
    pub co_evolution_cap: Option<u32>,
}

impl FileConfig {
    /// Paths in the file are relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::User(format!("config {}: {e}", path.display())))?;
        let mut config: FileConfig =
            toml::from_str(&text).map_err(|e| Failure::User(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut config.runs_dir, &mut config.cassette].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn patterns(&self) -> Result<Option<Vec<ChangePattern>>, Failure> {
        self.patterns
            .as_ref()
            .map(|names| names.iter().map(|n| n.parse().map_err(Failure::User)).collect())
            .transpose()
    }
}

/// Global settings after layering.
#[derive(Debug)]
pub struct Settings {
    pub format: Format,
    pub jobs: Option<usize>,
    pub runs_dir: PathBuf,
    pub model: String,
    pub probe_model: String,
    pub cassette: Option<PathBuf>,
    pub cassette_mode: CassetteMode,
    pub python: PathBuf,
    pub rate_limit: Option<u32>,
    pub file: FileConfig,
}

impl Settings {
    pub fn resolve(cli: &Cli) -> Result<Self, Failure> {
        let file = match &cli.config {
            Some(path) => FileConfig::load(path)?,
            None if Path::new(DEFAULT_CONFIG).is_file() => FileConfig::load(Path::new(DEFAULT_CONFIG))?,
            None => FileConfig::default(),
        };
        let jobs = cli.jobs.or(file.jobs);
        if jobs == Some(0) {
            return Err(Failure::User("--jobs must be at least 1".into()));
        }
        let model = cli.model.clone().or_else(|| file.model.clone()).unwrap_or_else(|| DEFAULT_MODEL.to_string());
        let cassette = cli.cassette.clone().or_else(|| file.cassette.clone());
        let mode = cli.cassette_mode.or(file.cassette_mode).unwrap_or(if cassette.is_some() { Mode::Replay } else { Mode::Live });
        Ok(Settings {
            format: cli.format.or(file.format).unwrap_or(Format::Md),
            jobs,
            runs_dir: cli.runs_dir.clone().or_else(|| file.runs_dir.clone()).unwrap_or_else(|| PathBuf::from("runs")),
            probe_model: cli.probe_model.clone().or_else(|| file.probe_model.clone()).unwrap_or_else(|| model.clone()),
            model,
            cassette,
            cassette_mode: match mode {
                Mode::Record => CassetteMode::Record,
                Mode::Replay => CassetteMode::Replay,
                Mode::Live => CassetteMode::Live,
            },
            python: cli.python.clone().or_else(|| file.python.clone()).unwrap_or_else(|| PathBuf::from("python3")),
            rate_limit: cli.rate_limit.or(file.rate_limit),
            file,
        })
    }

    /// A run id under the runs directory, or a path to a run directory.
    pub fn run_dir(&self, run: &str) -> Result<PathBuf, Failure> {
        let under = self.runs_dir.join(run);
        if under.join("manifest.json").is_file() {
            return Ok(under);
        }
        let direct = PathBuf::from(run);
        if direct.join("manifest.json").is_file() {
            return Ok(direct);
        }
        Err(Failure::User(format!("no run `{run}` under {}", self.runs_dir.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::Parser;

    fn cli(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("maintainkit").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn file_values_fill_gaps_but_flags_win() {
        let dir = std::env::temp_dir().join(format!("mk-config-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("c.toml");
        std::fs::write(&path, "format = \"csv\"\nmodel = \"from-file\"\ncassette = \"tape.jsonl\"\njobs = 3\n").unwrap();
        let p = path.to_str().unwrap();
        let s = Settings::resolve(&cli(&["--config", p, "metrics", "x.py"])).unwrap();
        assert_eq!((s.format, s.model.as_str(), s.jobs), (Format::Csv, "from-file", Some(3)));
        assert_eq!(s.cassette, Some(dir.join("tape.jsonl")));
        assert_eq!(s.cassette_mode, CassetteMode::Replay);
        assert_eq!(s.probe_model, "from-file");
        let s = Settings::resolve(&cli(&["--config", p, "--format", "json", "--model", "flag", "metrics", "x.py"])).unwrap();
        assert_eq!((s.format, s.model.as_str()), (Format::Json, "flag"));
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn unknown_keys_and_bad_patterns_are_user_errors() {
        let dir = std::env::temp_dir().join(format!("mk-config-bad-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("c.toml");
        std::fs::write(&path, "colour = \"red\"\n").unwrap();
        assert!(matches!(FileConfig::load(&path), Err(Failure::User(_))));
        std::fs::write(&path, "patterns = [\"ext\", \"nope\"]\n").unwrap();
        assert!(matches!(FileConfig::load(&path).unwrap().patterns(), Err(Failure::User(_))));
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
