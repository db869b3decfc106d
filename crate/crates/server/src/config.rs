// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};
use std::time::Duration;

use actipol_core::{ContinuityConfig, EngineConfig};
use serde::{Deserialize, Serialize};

use crate::ServiceError;

pub const ENV_PREFIX: &str = "ACTIPOL_";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinuitySection {
    pub repetitions: u32,
    pub interval_ms: u64,
}

impl Default for ContinuitySection {
    fn default() -> Self {
        Self {
            repetitions: 10,
            interval_ms: 5,
        }
    }
}

/// Service settings: a TOML file, then `ACTIPOL_*` environment overrides.
///
/// ```toml
/// listen = "127.0.0.1:8080"
/// policy = "policies.xml"
/// fixture = "farm.json"
/// chain_depth_limit = 2
///
/// [continuity]
/// repetitions = 10
/// interval_ms = 5
/// ```
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: String,
    /// Policy corpus; the shipped corpus when unset.
    pub policy: Option<PathBuf>,
    /// Store fixture; the sample farm when unset.
    pub fixture: Option<PathBuf>,
    pub chain_depth_limit: usize,
    pub continuity: ContinuitySection,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:8080".into(),
            policy: None,
            fixture: None,
            chain_depth_limit: 2,
            continuity: ContinuitySection::default(),
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ServiceError> {
        toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))
    }

    /// Reads `path` if given, then applies the process environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ServiceError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| ServiceError::Config(format!("{}: {e}", p.display())))?;
                Self::from_toml(&text)?
            }
            None => Self::default(),
        };
        cfg.apply_env(std::env::vars())?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<(), ServiceError> {
        for (key, value) in vars {
            let Some(name) = key.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let bad = |e: &dyn std::fmt::Display| ServiceError::Config(format!("{key}={value}: {e}"));
            match name {
                "LISTEN" => self.listen = value.clone(),
                "POLICY" => self.policy = Some(value.clone().into()),
                "FIXTURE" => self.fixture = Some(value.clone().into()),
                "CHAIN_DEPTH" => self.chain_depth_limit = value.parse().map_err(|e| bad(&e))?,
                "REPETITIONS" => self.continuity.repetitions = value.parse().map_err(|e| bad(&e))?,
                "INTERVAL_MS" => self.continuity.interval_ms = value.parse().map_err(|e| bad(&e))?,
                _ => {}
            }
        }
        self.validate()
    }

    fn validate(&self) -> Result<(), ServiceError> {
        if self.chain_depth_limit == 0 {
            return Err(ServiceError::Config("chain_depth_limit must be at least 1".into()));
        }
        if self.continuity.repetitions == 0 || self.continuity.interval_ms == 0 {
            return Err(ServiceError::Config("continuity repetitions and interval_ms must be positive".into()));
        }
        Ok(())
    }

    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            continuity: ContinuityConfig::new(
                self.continuity.repetitions,
                Duration::from_millis(self.continuity.interval_ms),
            ),
            chain_depth_limit: self.chain_depth_limit,
            auto_continuity: true,
        }
    }
}
