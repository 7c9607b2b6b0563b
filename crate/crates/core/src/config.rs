//! Run configuration: one TOML file naming the catalog and every tunable.
//!
//! ```toml
//! catalog = "../data/toy.toml"   # relative to this file
//! checkpoint_interval = 5        # updates between snapshots, 0 = final only
//!
//! [env]
//! t_max = 6
//! grid = 18
//! boundary = { kind = "rect", width = 16, height = 16 }
//!
//! [ppo]
//! total_steps = 50000
//!
//! [net]                          # optional, overrides layer sizes
//! conv_channels = [8, 16]
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::env::{EnvConfig, StateDims};
use crate::error::{Error, Result};
use crate::nn::NetConfig;
use crate::ppo::Hyperparams;

/// Optional layer-size overrides; unset fields keep the defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetOverrides {
    pub conv_channels: Option<Vec<usize>>,
    pub kernel: Option<usize>,
    pub stride: Option<usize>,
    pub aux_hidden: Option<usize>,
    pub step_hidden: Option<usize>,
    pub head_hidden: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub catalog: PathBuf,
    #[serde(default)]
    pub checkpoint_interval: usize,
    pub env: EnvConfig,
    #[serde(default)]
    pub ppo: Hyperparams,
    #[serde(default)]
    pub net: NetOverrides,
}

/// A parsed configuration with its catalog resolved and loaded.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub catalog: Arc<Catalog>,
    /// Catalog source, embedded into checkpoints.
    pub catalog_text: String,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.ppo.validate()?;
        cfg.env.boundary.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<LoadedConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = RunConfig::from_toml_str(&text)?;
        if config.catalog.is_relative() {
            config.catalog = path.parent().unwrap_or(Path::new(".")).join(&config.catalog);
        }
        let catalog_text = std::fs::read_to_string(&config.catalog).map_err(|e| Error::io(&config.catalog, e))?;
        let catalog = Catalog::from_toml_str(&catalog_text)?;
        if catalog.domain != config.env.boundary.domain() {
            return Err(Error::Config("boundary kind does not match the catalog domain".into()));
        }
        Ok(LoadedConfig {
            config,
            catalog: Arc::new(catalog),
            catalog_text,
        })
    }

    /// Network layout for `catalog` under this configuration.
    pub fn net_config(&self, catalog: &Catalog) -> NetConfig {
        let mut net = NetConfig::for_dims(StateDims {
            grid: self.env.grid,
            n_categories: catalog.n_categories(),
            t_max: self.env.t_max as usize,
        });
        let o = &self.net;
        if let Some(c) = &o.conv_channels {
            net.conv_channels = c.clone();
        }
        net.kernel = o.kernel.unwrap_or(net.kernel);
        net.stride = o.stride.unwrap_or(net.stride);
        net.aux_hidden = o.aux_hidden.unwrap_or(net.aux_hidden);
        net.step_hidden = o.step_hidden.unwrap_or(net.step_hidden);
        net.head_hidden = o.head_hidden.unwrap_or(net.head_hidden);
        net
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = RunConfig::from_toml_str(
            r#"
            catalog = "cat.toml"
            [env]
            boundary = { kind = "rect", width = 8, height = 8 }
            "#,
        )
        .unwrap();
        assert_eq!(cfg.ppo, Hyperparams::default());
        assert_eq!(cfg.env.t_max, 40);
        assert_eq!(cfg.checkpoint_interval, 0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_toml_str(
            r#"
            catalog = "cat.toml"
            colour = "blue"
            [env]
            boundary = { kind = "rect", width = 8, height = 8 }
            "#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn missing_catalog_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            "catalog = \"nope.toml\"\n[env]\nboundary = { kind = \"rect\", width = 8, height = 8 }\n",
        )
        .unwrap();
        assert!(matches!(RunConfig::load(&path), Err(Error::Io { .. })));
    }
}
