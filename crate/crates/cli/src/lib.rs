//! Experiment orchestration behind the `spinobs` binary.
//!
//! Every run is described by an [`ExperimentConfig`]. Command-line flags are
//! translated into one, and a configuration file (including a replay file
//! written by an earlier run) can be executed directly.

pub mod config;
mod pipelines;
mod report;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

pub use config::{ConfigError, ExperimentConfig, Origin};
pub use report::Table;

/// Keys accepted by every command.
pub const GLOBAL_KEYS: &[&str] = &["threads", "budget", "seed", "format", "csv", "summary", "replay"];

pub const COMMANDS: &[&str] = &["exact", "critical", "gadget", "phase", "reduce", "interpolate", "sample"];

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error at {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] spinobs::Error),
    #[error("cannot write '{path}': {source}")]
    Output { path: PathBuf, source: std::io::Error },
    #[error("budget exceeded: {0}")]
    Budget(String),
    #[error("cannot read '{path}': {source}")]
    Input { path: PathBuf, source: std::io::Error },
}

impl CliError {
    /// 0 ok, 2 validation, 3 budget, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) => e.exit_code(),
            CliError::Budget(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Everything a run produces: text for stdout and files keyed by path.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Artifacts {
    pub stdout: String,
    pub files: Vec<(PathBuf, Vec<u8>)>,
}

impl Artifacts {
    /// Writes each file through a temporary sibling and an atomic rename.
    pub fn write(&self) -> Result<()> {
        for (path, bytes) in &self.files {
            write_atomic(path, bytes).map_err(|source| CliError::Output {
                path: path.clone(),
                source,
            })?;
        }
        Ok(())
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub(crate) fn read_input(path: &str) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CliError::Input {
        path: PathBuf::from(path),
        source,
    })
}

/// Reads and parses a configuration file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Input {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(ExperimentConfig::parse(&text)?)
}

/// Splits a compact `base = k1=v1,k2=v2` entry into ordinary model keys.
fn expand_base(cfg: &ExperimentConfig) -> std::result::Result<ExperimentConfig, ConfigError> {
    let mut out = cfg.clone();
    if let Some(entry) = out.remove("base") {
        for part in entry.value.split(',') {
            let (k, v) = part.split_once('=').ok_or_else(|| {
                ConfigError::new(entry.origin.clone(), format!("key 'base': expected 'name=value', found '{part}'"))
            })?;
            let k = k.trim();
            if !["q", "beta", "gamma", "lambda"].contains(&k) {
                return Err(ConfigError::new(entry.origin.clone(), format!("key 'base': unknown parameter '{k}'")));
            }
            out.insert(k, v.trim(), entry.origin.clone())?;
        }
    }
    Ok(out)
}

/// Validates `cfg` and runs the named pipeline, returning its artifacts
/// without touching the file system except for reading inputs.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let command = cfg.choice("command", COMMANDS, None)?.to_string();
    let mut allowed: Vec<&str> = GLOBAL_KEYS.to_vec();
    allowed.extend(pipelines::keys(&command));
    cfg.check_keys(&allowed)?;
    cfg.check_inputs(&["graph", "recipe"])?;
    let format = cfg.choice("format", &["text", "csv"], Some("text"))?;
    let work = expand_base(cfg)?;

    let outcome = match work.parse_num::<usize>("threads")? {
        Some(0) => return Err(cfg.err("threads", "key 'threads': must be at least 1").into()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| cfg.err("threads", format!("cannot start thread pool: {e}")))?;
            pool.install(|| pipelines::run(&command, &work))?
        }
        None => pipelines::run(&command, &work)?,
    };

    let summary = outcome.summary_text();
    let mut art = Artifacts::default();
    match format {
        "csv" => {
            let table = outcome
                .table
                .as_ref()
                .ok_or_else(|| cfg.err("format", format!("command '{command}' produces no table")))?;
            art.stdout = table.to_csv();
        }
        _ => art.stdout = summary.clone(),
    }
    art.files.extend(outcome.files);
    if let Some(path) = cfg.str("csv") {
        let table = outcome
            .table
            .as_ref()
            .ok_or_else(|| cfg.err("csv", format!("command '{command}' produces no table")))?;
        art.files.push((PathBuf::from(path), table.to_csv().into_bytes()));
    }
    if let Some(path) = cfg.str("summary") {
        art.files.push((PathBuf::from(path), summary.into_bytes()));
    }
    if let Some(path) = cfg.str("replay") {
        art.files.push((PathBuf::from(path), cfg.to_text().into_bytes()));
    }
    let mut seen = std::collections::HashSet::new();
    for (p, _) in &art.files {
        if !seen.insert(p.clone()) {
            return Err(ConfigError::new(Origin::Flag("csv".into()), format!("two outputs target '{}'", p.display())).into());
        }
    }
    Ok(art)
}
