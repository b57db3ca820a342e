// SPDX-License-Identifier: Apache-2.0

//! Server configuration file (TOML).
//!
//! ```toml
//! host = "127.0.0.1"
//! port = 8750
//! data_dir = "./ph-data"
//! workers = 2
//! default_timeout_s = 600
//! token_ttl_s = 86400
//! region_cap_pixels = 16777216
//! fsync = true
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub host: String,
    /// 0 picks a free port.
    pub port: u16,
    pub data_dir: PathBuf,
    /// Maximum number of concurrently running app processes.
    pub workers: usize,
    pub default_timeout_s: u64,
    pub token_ttl_s: u64,
    pub region_cap_pixels: u64,
    /// fsync the journal after every record.
    pub fsync: bool,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            host: "127.0.0.1".into(),
            port: 8750,
            data_dir: PathBuf::from("ph-data"),
            workers: 2,
            default_timeout_s: 600,
            token_ttl_s: 24 * 3600,
            region_cap_pixels: pathharbor_core::slide::DEFAULT_REGION_CAP,
            fsync: true,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        toml::from_str(&text).map_err(|source| ConfigError::Parse { path: path.into(), source })
    }

    pub fn for_data_dir(dir: &Path) -> Self {
        Config { data_dir: dir.to_path_buf(), port: 0, ..Config::default() }
    }
}
