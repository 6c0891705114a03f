//! Library half of the `synergy` command-line tool.
//!
//! [`execute`] loads a scenario file, looks the mode up in a
//! [`ModeRegistry`] and writes its artifact.

pub mod config;
pub mod export;
pub mod modes;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::json;
use thiserror::Error;

use config::{ConfigError, Format, LoadError, ScenarioConfig};
use export::{check_json_encodable, write_csv, write_json, ExportError, JsonArc, Meta};
use modes::{Artifact, ModeOutput, ModeRegistry, RunContext};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error("cannot write output: {0}")]
    Export(#[from] ExportError),
    #[error("unknown mode '{name}' (available: {available})")]
    UnknownMode { name: String, available: String },
    #[error("{0}")]
    Run(String),
}

impl CliError {
    /// 2 for invalid input, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::UnknownMode { .. } => 2,
            _ => 1,
        }
    }
}

/// Exit code of a completed run.
pub fn outcome_code(passed: bool) -> i32 {
    if passed {
        0
    } else {
        3
    }
}

pub struct Invocation {
    pub mode: String,
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

pub struct Outcome {
    pub summary: Vec<String>,
    pub passed: bool,
    /// Where the artifact went; `None` for stdout.
    pub written_to: Option<PathBuf>,
}

fn load(path: &Path) -> Result<ScenarioConfig, CliError> {
    config::load(path).map_err(|e| match e {
        LoadError::Io(_, source) => CliError::Read { path: path.to_path_buf(), source },
        LoadError::Config(c) => CliError::Config(c),
    })
}

fn output_format(config: &ScenarioConfig, path: Option<&Path>) -> Format {
    if let Some(f) = config.output.format {
        return f;
    }
    match path.and_then(|p| p.extension()).and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
        _ => Format::Csv,
    }
}

fn write_artifact<W: Write>(out: W, output: &ModeOutput, format: Format, meta: Meta) -> Result<(), ExportError> {
    match (&output.artifact, format) {
        (Artifact::Arc(table), Format::Csv) => write_csv(table, out),
        (Artifact::Arc(table), Format::Json) => {
            check_json_encodable(table)?;
            write_json(&JsonArc::new(table, meta), out)
        }
        (Artifact::Json(value), _) => write_json(&json!({ "meta": meta, "result": value }), out),
    }
}

/// Runs one invocation with the given registry.
pub fn execute(registry: &ModeRegistry, inv: &Invocation) -> Result<Outcome, CliError> {
    let mode = registry.get(&inv.mode).ok_or_else(|| CliError::UnknownMode {
        name: inv.mode.clone(),
        available: registry.names().join(", "),
    })?;
    let mut config = load(&inv.config)?;
    if let Some(m) = &config.mode {
        if m != mode.name() {
            return Err(ConfigError::new("mode", format!("config is for mode '{m}' but '{}' was requested", mode.name())).into());
        }
    }
    if let Some(seed) = inv.seed {
        config.seed = seed;
    }
    let out_path = inv.out.clone().or_else(|| config.output.path.as_ref().map(PathBuf::from));
    let format = output_format(&config, out_path.as_deref());
    log::info!("running {} with seed {}", mode.name(), config.seed);

    let output = mode.run(&RunContext { config: &config, seed: config.seed })?;
    let meta = Meta::new(mode.name(), config.seed, &config);
    match &out_path {
        Some(p) => {
            let file = File::create(p).map_err(ExportError::from)?;
            let mut w = BufWriter::new(file);
            write_artifact(&mut w, &output, format, meta)?;
            w.flush().map_err(ExportError::from)?;
        }
        None => write_artifact(io::stdout().lock(), &output, format, meta)?,
    }
    Ok(Outcome { summary: output.summary, passed: output.passed, written_to: out_path })
}
