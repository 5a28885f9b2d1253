//! TOML configuration. Credentials are never read from here: model and
//! embedding providers name an environment variable instead.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use medsql_core::{ExecLimits, ModelConfig, PipelineFlags};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("`{0}` looks like a credential; put it in an environment variable and reference it with credential_env")]
    Credential(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendMode {
    #[default]
    Live,
    Replay,
    /// Live calls, appended to the cassette.
    Record,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub mode: BackendMode,
    pub cassette: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderKind {
    /// Local feature hashing; no network.
    #[default]
    Hashing,
    Http,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedderConfig {
    pub kind: EmbedderKind,
    pub dimension: usize,
    pub endpoint: String,
    pub model: String,
    pub credential_env: String,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            kind: EmbedderKind::Hashing,
            dimension: medsql_core::HashingEmbedder::DEFAULT_DIMENSION,
            endpoint: "https://api.openai.com/v1/embeddings".into(),
            model: "text-embedding-3-small".into(),
            credential_env: "OPENAI_API_KEY".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitsConfig {
    pub timeout_secs: f64,
    pub max_rows: usize,
    /// Rows returned per response; the full result stays in the session.
    pub display_rows: usize,
}

impl Default for LimitsConfig {
    fn default() -> Self {
        let exec = ExecLimits::default();
        Self {
            timeout_secs: exec.timeout.as_secs_f64(),
            max_rows: exec.max_rows,
            display_rows: 200,
        }
    }
}

impl LimitsConfig {
    pub fn exec(&self) -> ExecLimits {
        ExecLimits {
            timeout: Duration::from_secs_f64(self.timeout_secs),
            max_rows: self.max_rows,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    /// Database id to DuckDB file.
    pub databases: BTreeMap<String, PathBuf>,
    pub models: Vec<ModelConfig>,
    /// Defaults to the first entry of `models`.
    pub default_model: Option<String>,
    pub flags: PipelineFlags,
    pub demos: Option<PathBuf>,
    pub embedder: EmbedderConfig,
    pub backend: BackendConfig,
    pub audit_log: PathBuf,
    pub limits: LimitsConfig,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            databases: BTreeMap::new(),
            models: vec![ModelConfig::default()],
            default_model: None,
            flags: PipelineFlags::default(),
            demos: None,
            embedder: EmbedderConfig::default(),
            backend: BackendConfig::default(),
            audit_log: PathBuf::from("audit.jsonl"),
            limits: LimitsConfig::default(),
        }
    }
}

const CREDENTIAL_KEYS: [&str; 9] = [
    "api_key",
    "apikey",
    "key",
    "secret",
    "password",
    "token",
    "access_token",
    "bearer",
    "authorization",
];

fn find_credential(value: &toml::Value, path: &str) -> Option<String> {
    match value {
        toml::Value::Table(t) => t.iter().find_map(|(k, v)| {
            let here = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
            if CREDENTIAL_KEYS.contains(&k.to_ascii_lowercase().as_str()) {
                return Some(here);
            }
            find_credential(v, &here)
        }),
        toml::Value::Array(a) => a
            .iter()
            .enumerate()
            .find_map(|(i, v)| find_credential(v, &format!("{path}[{i}]"))),
        toml::Value::String(s) if s.starts_with("sk-") => Some(path.to_string()),
        _ => None,
    }
}

impl AppConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let raw: toml::Value = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        if let Some(path) = find_credential(&raw, "") {
            return Err(ConfigError::Credential(path));
        }
        let config: AppConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Loads a file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            config.resolve_paths(base);
        }
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.databases.values_mut().for_each(fix);
        self.demos.iter_mut().for_each(fix);
        self.backend.cassette.iter_mut().for_each(fix);
        fix(&mut self.audit_log);
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.models.is_empty() {
            return Err(ConfigError::Invalid("no models configured".into()));
        }
        for m in &self.models {
            m.validate().map_err(|e| ConfigError::Invalid(format!("model {}: {e}", m.model_name)))?;
        }
        if let Some(name) = &self.default_model {
            if self.model(name).is_none() {
                return Err(ConfigError::Invalid(format!("default_model {name} is not in models")));
            }
        }
        if self.backend.mode != BackendMode::Live && self.backend.cassette.is_none() {
            return Err(ConfigError::Invalid("replay and record modes need backend.cassette".into()));
        }
        if !(self.limits.timeout_secs > 0.0) || self.limits.max_rows == 0 {
            return Err(ConfigError::Invalid("limits must be positive".into()));
        }
        if self.flags.max_attempts == 0 {
            return Err(ConfigError::Invalid("flags.max_attempts must be at least 1".into()));
        }
        Ok(())
    }

    pub fn model(&self, name: &str) -> Option<&ModelConfig> {
        self.models.iter().find(|m| m.model_name == name)
    }

    pub fn default_model_name(&self) -> &str {
        self.default_model.as_deref().unwrap_or(&self.models[0].model_name)
    }
}
