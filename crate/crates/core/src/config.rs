//! Service configuration (TOML).
//!
//! ```toml
//! listen = "127.0.0.1:8080"
//! store_path = "data/dialogue.jsonl"
//! profile_path = "lux.toml"        # optional, built-in profile otherwise
//! window_rounds = 6
//!
//! [favorability]
//! increment = 1
//! friendly_from = 34
//! warm_from = 67
//!
//! [backend]
//! kind = "scripted"
//! script_path = "script.jsonl"
//!
//! [gateway]                        # optional
//! kind = "tcp_jsonl"
//! address = "127.0.0.1:7000"
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::Deserialize;

use crate::domain::{FavorabilityRules, NpcProfile};
use crate::error::ConfigError;
use crate::llm::LlmBackendConfig;
use crate::orchestrator::gateway::{Backoff, TcpJsonlConnector};
use crate::orchestrator::{Orchestrator, OrchestratorSettings};
use crate::store::{DialogueStore, FileStore, InMemoryStore, DEFAULT_WINDOW_ROUNDS};

fn default_listen() -> SocketAddr {
    SocketAddr::from(([127, 0, 0, 1], 8080))
}

fn default_window() -> usize {
    DEFAULT_WINDOW_ROUNDS
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_listen")]
    pub listen: SocketAddr,
    /// Omitted means an in-memory store that is lost on exit.
    pub store_path: Option<PathBuf>,
    pub profile_path: Option<PathBuf>,
    #[serde(default = "default_window")]
    pub window_rounds: usize,
    #[serde(default)]
    pub favorability: FavorabilityRules,
    pub backend: LlmBackendConfig,
    pub gateway: Option<GatewayConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GatewayConfig {
    TcpJsonl {
        address: String,
        #[serde(default = "default_backoff_base_ms")]
        backoff_base_ms: u64,
        #[serde(default = "default_backoff_cap_ms")]
        backoff_cap_ms: u64,
    },
}

fn default_backoff_base_ms() -> u64 {
    1_000
}

fn default_backoff_cap_ms() -> u64 {
    60_000
}

impl GatewayConfig {
    pub fn connector(&self) -> (TcpJsonlConnector, Backoff) {
        match self {
            GatewayConfig::TcpJsonl {
                address,
                backoff_base_ms,
                backoff_cap_ms,
            } => (
                TcpJsonlConnector {
                    address: address.clone(),
                },
                Backoff {
                    base: Duration::from_millis(*backoff_base_ms),
                    cap: Duration::from_millis(*backoff_cap_ms),
                },
            ),
        }
    }
}

fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

impl ServiceConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let mut config: ServiceConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            reason: e.message().to_string(),
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        config.store_path = config.store_path.map(|p| resolve(base, &p));
        config.profile_path = config.profile_path.map(|p| resolve(base, &p));
        if let LlmBackendConfig::Scripted { script_path } = &mut config.backend {
            *script_path = resolve(base, script_path);
        }
        if config.window_rounds == 0 {
            return Err(ConfigError::Invalid(
                "window_rounds must be at least 1".into(),
            ));
        }
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    pub fn load_profile(&self) -> Result<NpcProfile, ConfigError> {
        let Some(path) = &self.profile_path else {
            return Ok(NpcProfile::default());
        };
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.clone(),
            source,
        })?;
        NpcProfile::from_toml(&text).map_err(|e| ConfigError::Parse {
            path: path.clone(),
            reason: e.to_string(),
        })
    }

    pub fn open_store(&self) -> Result<Arc<dyn DialogueStore>, ConfigError> {
        match &self.store_path {
            Some(path) => FileStore::open(path)
                .map(|s| Arc::new(s) as Arc<dyn DialogueStore>)
                .map_err(|e| ConfigError::Invalid(format!("store {}: {e}", path.display()))),
            None => Ok(Arc::new(InMemoryStore::new())),
        }
    }

    pub fn settings(&self) -> OrchestratorSettings {
        OrchestratorSettings {
            favorability: self.favorability,
            window_rounds: self.window_rounds,
        }
    }

    /// Loads the profile and backend and opens the store.
    pub fn build_orchestrator(&self) -> Result<Orchestrator, ConfigError> {
        let profile = self.load_profile()?;
        let backend = self.backend.build()?;
        let store = self.open_store()?;
        Ok(Orchestrator::new(store, backend, profile).with_settings(self.settings()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = ServiceConfig::parse(
            "[backend]\nkind = \"scripted\"\nscript_path = \"s.jsonl\"\n",
            Path::new("/etc/npc/config.toml"),
        )
        .unwrap();
        assert_eq!(cfg.listen, default_listen());
        assert_eq!(cfg.window_rounds, 6);
        assert_eq!(cfg.favorability, FavorabilityRules::default());
        assert_eq!(
            cfg.backend,
            LlmBackendConfig::Scripted {
                script_path: "/etc/npc/s.jsonl".into()
            }
        );
        assert!(cfg.gateway.is_none());
    }

    #[test]
    fn favorability_section_is_validated() {
        let text = "[favorability]\nincrement = 5\nfriendly_from = 50\nwarm_from = 40\n[backend]\nkind = \"scripted\"\nscript_path = \"s\"\n";
        assert!(ServiceConfig::parse(text, Path::new("c.toml")).is_err());
        let ok = text.replace("warm_from = 40", "warm_from = 90");
        let cfg = ServiceConfig::parse(&ok, Path::new("c.toml")).unwrap();
        assert_eq!(cfg.favorability.increment, 5);
        assert_eq!(cfg.favorability.boundaries.warm_from(), 90);
    }

    #[test]
    fn rejects_unknown_keys_and_zero_window() {
        let base = "[backend]\nkind = \"scripted\"\nscript_path = \"s\"\n";
        assert!(ServiceConfig::parse(&format!("bogus = 1\n{base}"), Path::new("c.toml")).is_err());
        assert!(
            ServiceConfig::parse(&format!("window_rounds = 0\n{base}"), Path::new("c.toml"))
                .is_err()
        );
    }

    #[test]
    fn missing_profile_file_is_an_error() {
        let cfg = ServiceConfig::parse(
            "profile_path = \"/nonexistent/profile.toml\"\n[backend]\nkind = \"scripted\"\nscript_path = \"s\"\n",
            Path::new("c.toml"),
        )
        .unwrap();
        assert!(matches!(cfg.load_profile(), Err(ConfigError::Read { .. })));
    }

    #[test]
    fn gateway_section() {
        let cfg = ServiceConfig::parse(
            "[backend]\nkind = \"scripted\"\nscript_path = \"s\"\n[gateway]\nkind = \"tcp_jsonl\"\naddress = \"127.0.0.1:7000\"\n",
            Path::new("c.toml"),
        )
        .unwrap();
        let (connector, backoff) = cfg.gateway.unwrap().connector();
        assert_eq!(connector.address, "127.0.0.1:7000");
        assert_eq!(backoff, Backoff::default());
    }
}
