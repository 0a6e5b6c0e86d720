use std::path::{Path, PathBuf};

use retouch_core::agent::{AgentConfig, RethinkConfig, SampleMode};
use retouch_core::instruction::MagnitudeTable;
use retouch_core::retouch::TransferConfig;
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;

/// Which generator renders edits.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendName {
    #[default]
    Parametric,
    Remote,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: String,
    pub memory_path: PathBuf,
    pub backend: BackendName,
    /// Base URL of a render endpoint when `backend = "remote"`.
    pub remote_url: Option<String>,
    pub remote_timeout_secs: u64,
    pub rethink: RethinkConfig,
    pub transfer: TransferConfig,
    pub magnitudes: MagnitudeTable,
    pub sample_mode: SampleMode,
    pub seed: u64,
    pub max_dim: u32,
    pub max_body_bytes: usize,
    /// Browser origins allowed to call the API; `"*"` allows any.
    pub cors_origins: Vec<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:8080".into(),
            memory_path: PathBuf::from("memory.jsonl"),
            backend: BackendName::Parametric,
            remote_url: None,
            remote_timeout_secs: 60,
            rethink: RethinkConfig::default(),
            transfer: TransferConfig::default(),
            magnitudes: MagnitudeTable::default(),
            sample_mode: SampleMode::Mean,
            seed: 0,
            max_dim: 4096,
            max_body_bytes: 128 << 20,
            cors_origins: Vec::new(),
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ServiceError> {
        let cfg: ServiceConfig = toml::from_str(text).map_err(|e| ServiceError::Usage(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML file. Relative `memory_path` values resolve against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ServiceError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ServiceError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if cfg.memory_path.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.memory_path = dir.join(&cfg.memory_path);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        if self.max_dim < 64 {
            return Err(ServiceError::Usage("max_dim must be at least 64".into()));
        }
        if let Some(bad) = self.cors_origins.iter().find(|o| o.parse::<axum::http::HeaderValue>().is_err()) {
            return Err(ServiceError::Usage(format!("invalid CORS origin {bad:?}")));
        }
        if self.backend == BackendName::Remote && self.remote_url.is_none() {
            return Err(ServiceError::Usage("backend \"remote\" needs remote_url".into()));
        }
        self.agent_config().validate().map_err(|e| ServiceError::Usage(e.to_string()))
    }

    pub fn agent_config(&self) -> AgentConfig {
        AgentConfig {
            transfer: self.transfer,
            rethink: self.rethink,
            magnitudes: self.magnitudes,
            sample_mode: self.sample_mode,
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let cfg = ServiceConfig::from_toml("").unwrap();
        assert_eq!(cfg, ServiceConfig::default());
        let cfg = ServiceConfig::from_toml(
            "listen = \"0.0.0.0:9000\"\nseed = 7\n[rethink]\nmax_rounds = 4\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.rethink.max_rounds, 4);
        assert_eq!(cfg.rethink.gain, 0.5);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ServiceConfig::from_toml("max_dim = 10").is_err());
        assert!(ServiceConfig::from_toml("backend = \"remote\"").is_err());
        assert!(ServiceConfig::from_toml("bogus = 1").is_err());
        assert!(ServiceConfig::from_toml("[rethink]\ngain = 2.0").is_err());
    }
}
