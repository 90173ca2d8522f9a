//! Service settings: built-in defaults, then an optional TOML file, then
//! `WSN_*` environment variables, then command-line flags.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_TICK_MS: u64 = 100;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("environment variable {name}={value:?} is invalid: {message}")]
    Env {
        name: &'static str,
        value: String,
        message: String,
    },
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    port: Option<u16>,
    api_key: Option<String>,
    uplink_url: Option<String>,
    static_dir: Option<PathBuf>,
    tick_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Settings {
    pub port: u16,
    /// Replaces the scenario's channel key for both uplink and ingest.
    pub api_key: Option<String>,
    /// Real cloud endpoint; uplinks stay in-process when unset.
    pub uplink_url: Option<String>,
    pub static_dir: Option<PathBuf>,
    /// Wall-clock period of the paced loop.
    pub tick_ms: u64,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            port: DEFAULT_PORT,
            api_key: None,
            uplink_url: None,
            static_dir: None,
            tick_ms: DEFAULT_TICK_MS,
        }
    }
}

impl Settings {
    pub fn load(file: Option<&Path>) -> Result<Settings, ConfigError> {
        Settings::resolve(file, |name| std::env::var(name).ok())
    }

    /// `env` is injectable for tests.
    pub fn resolve(
        file: Option<&Path>,
        env: impl Fn(&str) -> Option<String>,
    ) -> Result<Settings, ConfigError> {
        let mut s = Settings::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            let f: ConfigFile = toml::from_str(&text).map_err(|e| ConfigError::Parse {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
            s.port = f.port.unwrap_or(s.port);
            s.api_key = f.api_key.or(s.api_key);
            s.uplink_url = f.uplink_url.or(s.uplink_url);
            s.static_dir = f.static_dir.or(s.static_dir);
            s.tick_ms = f.tick_ms.unwrap_or(s.tick_ms);
        }
        if let Some(v) = env("WSN_PORT") {
            s.port = v.trim().parse().map_err(|e: std::num::ParseIntError| ConfigError::Env {
                name: "WSN_PORT",
                value: v.clone(),
                message: e.to_string(),
            })?;
        }
        if let Some(v) = env("WSN_API_KEY") {
            s.api_key = Some(v);
        }
        if let Some(v) = env("WSN_UPLINK_URL") {
            s.uplink_url = Some(v);
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn env_beats_file_beats_default() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("wsn.toml");
        std::fs::write(&path, "port = 9000\napi_key = \"FILE\"\ntick_ms = 50\n").unwrap();
        let env: HashMap<&str, &str> = [("WSN_API_KEY", "ENV")].into();
        let s = Settings::resolve(Some(&path), |k| env.get(k).map(|v| v.to_string())).unwrap();
        assert_eq!(s.port, 9000);
        assert_eq!(s.api_key.as_deref(), Some("ENV"));
        assert_eq!(s.tick_ms, 50);
        assert_eq!(s.uplink_url, None);
    }

    #[test]
    fn bad_port_is_reported() {
        let err = Settings::resolve(None, |k| (k == "WSN_PORT").then(|| "eighty".to_string()));
        assert!(matches!(err, Err(ConfigError::Env { name: "WSN_PORT", .. })));
    }

    #[test]
    fn unknown_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("wsn.toml");
        std::fs::write(&path, "prot = 1\n").unwrap();
        assert!(matches!(Settings::resolve(Some(&path), |_| None), Err(ConfigError::Parse { .. })));
    }
}
