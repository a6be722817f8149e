//! TOML configuration file.
//!
//! ```toml
//! [cost]
//! alpha = 1.0
//! like = 10.0
//!
//! [store]
//! cache_pages = 4096
//! page_size = 65536
//! seq_threshold = 0.05
//! ```
//!
//! Every key is optional; unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cost::CostFactors;
use crate::error::{Error, Result};
use crate::store::{StoreOptions, DEFAULT_CACHE_PAGES, DEFAULT_PAGE_SIZE, DEFAULT_SEQ_THRESHOLD};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoreConfig {
    pub cache_pages: usize,
    pub page_size: usize,
    pub seq_threshold: f64,
}

impl Default for StoreConfig {
    fn default() -> Self {
        Self {
            cache_pages: DEFAULT_CACHE_PAGES,
            page_size: DEFAULT_PAGE_SIZE,
            seq_threshold: DEFAULT_SEQ_THRESHOLD,
        }
    }
}

impl From<StoreConfig> for StoreOptions {
    fn from(c: StoreConfig) -> Self {
        StoreOptions {
            cache_pages: c.cache_pages,
            page_size: c.page_size,
            seq_threshold: c.seq_threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub cost: CostFactors,
    pub store: StoreConfig,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        self.cost.validate()?;
        let s = &self.store;
        if s.cache_pages == 0 {
            return Err(Error::Config("store.cache_pages must be at least 1".into()));
        }
        if s.page_size < 64 || !s.page_size.is_power_of_two() {
            return Err(Error::Config(format!(
                "store.page_size must be a power of two of at least 64, got {}",
                s.page_size
            )));
        }
        if !(0.0..=1.0).contains(&s.seq_threshold) {
            return Err(Error::Config(format!(
                "store.seq_threshold must lie in [0, 1], got {}",
                s.seq_threshold
            )));
        }
        Ok(())
    }

    pub fn store_options(&self) -> StoreOptions {
        self.store.into()
    }
}
