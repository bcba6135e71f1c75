//! Run configuration: a TOML file with `[model]`, `[pipeline]`,
//! `[retrieval]` and `[evaluation]` tables, plus `section.key=value`
//! overrides from the command line.

use std::path::{Path, PathBuf};

use propgraph::client::http::HttpConfig;
use propgraph::{GraphRetrieverConfig, SynthesisConfig, SynthesisMode};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provider {
    /// Scripted chat replies and the hashed bag-of-words embedder.
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub provider: Provider,
    /// Chat script for the mock provider, relative to the config file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mock_script: Option<PathBuf>,
    pub mock_embed_dim: usize,
    #[serde(flatten)]
    pub http: HttpConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { provider: Provider::Mock, mock_script: None, mock_embed_dim: 256, http: HttpConfig::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BuildMode {
    #[default]
    Multi,
    Single,
}

impl From<BuildMode> for SynthesisMode {
    fn from(m: BuildMode) -> Self {
        match m {
            BuildMode::Multi => SynthesisMode::MultiStep,
            BuildMode::Single => SynthesisMode::SingleStep,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub mode: BuildMode,
    pub max_tokens: usize,
    pub drift_threshold: f64,
    pub decontextualize: bool,
    /// Build exits with status 3 when more than this fraction of documents fail.
    pub max_failed_fraction: f64,
    pub density_bucket_words: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let s = SynthesisConfig::default();
        Self {
            mode: BuildMode::Multi,
            max_tokens: s.max_tokens,
            drift_threshold: s.drift_threshold,
            decontextualize: s.decontextualize,
            max_failed_fraction: 0.5,
            density_bucket_words: 100,
        }
    }
}

impl PipelineConfig {
    pub fn synthesis(&self) -> SynthesisConfig {
        SynthesisConfig {
            max_tokens: self.max_tokens,
            drift_threshold: self.drift_threshold,
            decontextualize: self.decontextualize,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationConfig {
    pub coverage_threshold: f64,
    pub ks: Vec<usize>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self { coverage_threshold: propgraph::eval::DEFAULT_COVERAGE_THRESHOLD, ks: vec![1, 2, 5, 10] }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub model: ModelConfig,
    pub pipeline: PipelineConfig,
    pub retrieval: GraphRetrieverConfig,
    pub evaluation: EvaluationConfig,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Config {
    /// Reads `path` (if any) and applies `overrides` of the form
    /// `section.key=value`, where value is a TOML literal or a bare string.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut table = match path {
            Some(p) => {
                let raw = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", p.display())))?;
                raw.parse::<toml::Table>()
                    .map_err(|e| CliError::Input(format!("invalid config {}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        check_keys(&table)?;
        let mut config: Config =
            toml::Value::Table(table).try_into().map_err(|e| CliError::Input(format!("invalid config: {e}")))?;
        config.base_dir = path.and_then(Path::parent).map(Path::to_path_buf).unwrap_or_default();
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), CliError> {
        self.retrieval.validate().map_err(|e| CliError::Input(e.to_string()))?;
        if self.pipeline.max_tokens == 0 {
            return Err(CliError::Input("pipeline.max_tokens must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.pipeline.drift_threshold) {
            return Err(CliError::Input("pipeline.drift_threshold must lie in [0, 1]".into()));
        }
        if self.pipeline.density_bucket_words == 0 {
            return Err(CliError::Input("pipeline.density_bucket_words must be at least 1".into()));
        }
        if self.evaluation.ks.is_empty() || self.evaluation.ks.contains(&0) {
            return Err(CliError::Input("evaluation.ks must be non-empty positive ranks".into()));
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Hex SHA-256 of the effective configuration. Credentials never live
    /// in the config (only the name of their environment variable), so
    /// nothing secret enters the hash.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), CliError> {
    let (key, value) =
        spec.split_once('=').ok_or_else(|| CliError::Input(format!("override {spec:?} is not key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.len() != 2 || path.iter().any(|p| p.is_empty()) {
        return Err(CliError::Input(format!("override key {key:?} must be section.key")));
    }
    let value = value.trim();
    let parsed = format!("v = {value}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    let section = table
        .entry(path[0])
        .or_insert_with(|| toml::Value::Table(toml::Table::new()))
        .as_table_mut()
        .ok_or_else(|| CliError::Input(format!("config entry {} is not a table", path[0])))?;
    section.insert(path[1].to_string(), parsed);
    Ok(())
}

/// Rejects sections and keys the configuration does not define, so a typo
/// cannot silently fall back to a default.
fn check_keys(table: &toml::Table) -> Result<(), CliError> {
    let defaults = toml::Table::try_from(Config::default()).expect("default config serializes");
    for (section, value) in table {
        let Some(known) = defaults.get(section).and_then(toml::Value::as_table) else {
            return Err(CliError::Input(format!("unknown config section [{section}]")));
        };
        let Some(entries) = value.as_table() else {
            return Err(CliError::Input(format!("config entry {section} must be a table")));
        };
        for key in entries.keys() {
            let optional = section == "model" && key == "mock_script";
            if !known.contains_key(key) && !optional {
                return Err(CliError::Input(format!("unknown config key {section}.{key}")));
            }
        }
    }
    Ok(())
}
