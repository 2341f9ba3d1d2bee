//! Experiment configuration files.

use std::fmt;
use std::path::{Path, PathBuf};

use qcr_core::classical::FunctionalModel;
use qcr_core::graph::CausalDag;
use qcr_core::instrument::InstrumentSpec;
use qcr_core::process::ProcessSpec;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Simulate,
    Tomography,
    Reverse,
    Identifiability,
    Classical,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Kind::Simulate => "simulate",
            Kind::Tomography => "tomography",
            Kind::Reverse => "reverse",
            Kind::Identifiability => "identifiability",
            Kind::Classical => "classical",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SchemeSpec {
    /// SIC instrument on every node.
    Sic,
    /// Explicit instruments; nodes not listed get the SIC instrument.
    Instruments { instruments: Vec<InstrumentSpec> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DoSpec {
    pub node: String,
    pub value: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MutualInformationSpec {
    pub a: String,
    pub b: String,
    #[serde(default)]
    pub given: Vec<DoSpec>,
    /// Evaluate on `P(V | do(node=value))` instead of the observational table.
    #[serde(default)]
    pub under_do: Option<DoSpec>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassicalSpec {
    #[serde(default, rename = "do")]
    pub interventions: Vec<DoSpec>,
    #[serde(default)]
    pub mutual_information: Vec<MutualInformationSpec>,
    /// Sample this many draws (needs the top-level `seed`) and compare with enumeration.
    #[serde(default)]
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub kind: Option<Kind>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub graph: Option<CausalDag>,
    #[serde(default)]
    pub process: Option<ProcessSpec>,
    #[serde(default)]
    pub scheme: Option<SchemeSpec>,
    /// Instruments substituted into the scheme for an extra intervened table.
    #[serde(default)]
    pub interventions: Vec<InstrumentSpec>,
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub model: Option<FunctionalModel>,
    #[serde(default)]
    pub classical: Option<ClassicalSpec>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// A configuration problem; maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn invalid(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

/// Parses a config, reporting the field path and line/column of the first error.
pub fn parse(text: &str, origin: &str) -> anyhow::Result<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let (line, col) = (inner.line(), inner.column());
        let msg = inner.to_string();
        let msg = msg.strip_suffix(&format!(" at line {line} column {col}")).unwrap_or(&msg);
        invalid(format!("{origin}:{line}:{col}: at `{path}`: {msg}"))
    })?;
    if cfg.schema_version != SCHEMA_VERSION {
        return Err(invalid(format!(
            "{origin}: schema_version {} is not supported (expected {SCHEMA_VERSION})",
            cfg.schema_version
        )));
    }
    Ok(cfg)
}

pub fn load(path: &Path) -> anyhow::Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    parse(&text, &path.display().to_string())
}

impl ExperimentConfig {
    pub fn require_graph(&self) -> anyhow::Result<&CausalDag> {
        self.graph.as_ref().ok_or_else(|| invalid("missing field `graph`"))
    }

    pub fn require_process(&self) -> anyhow::Result<&ProcessSpec> {
        self.process.as_ref().ok_or_else(|| invalid("missing field `process`"))
    }

    pub fn require_model(&self) -> anyhow::Result<&FunctionalModel> {
        self.model.as_ref().ok_or_else(|| invalid("missing field `model`"))
    }
}
