//! Versioned JSON checkpoints holding every parameter tensor with its shape,
//! plus the configuration and catalog needed to rebuild the environment.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::nn::{NetConfig, PolicyNet};
use crate::ppo::Hyperparams;

pub const FORMAT: &str = "rlss-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub steps: u64,
    pub env: EnvConfig,
    pub hyper: Hyperparams,
    pub net: NetConfig,
    pub catalog: String,
    pub tensors: Vec<Tensor>,
}

/// Everything restored from a checkpoint.
#[derive(Clone, Debug)]
pub struct Restored {
    pub net: PolicyNet,
    pub env: EnvConfig,
    pub hyper: Hyperparams,
    pub catalog: Arc<Catalog>,
    pub steps: u64,
}

impl Checkpoint {
    pub fn capture(net: &PolicyNet, env: &EnvConfig, hyper: &Hyperparams, catalog_text: &str, steps: u64) -> Self {
        let tensors = net
            .tensor_layout()
            .into_iter()
            .map(|(name, shape, offset, len)| Tensor {
                name,
                shape,
                data: net.params[offset..offset + len].to_vec(),
            })
            .collect();
        Checkpoint {
            format: FORMAT.into(),
            version: VERSION,
            steps,
            env: env.clone(),
            hyper: hyper.clone(),
            net: net.config().clone(),
            catalog: catalog_text.into(),
            tensors,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serialisation cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Restored> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        Checkpoint::from_json(&text)?.restore()
    }

    /// Rebuilds the network, validating format, version and every shape.
    pub fn restore(self) -> Result<Restored> {
        let bad = |msg: String| Error::Checkpoint(msg);
        if self.format != FORMAT {
            return Err(bad(format!("not a checkpoint (format {:?})", self.format)));
        }
        if self.version != VERSION {
            return Err(bad(format!("unsupported checkpoint version {}", self.version)));
        }
        let catalog = Catalog::from_toml_str(&self.catalog).map_err(|e| bad(format!("embedded catalog: {e}")))?;
        if self.net.n_categories != catalog.n_categories()
            || self.net.grid != self.env.grid
            || self.net.t_max != self.env.t_max as usize
        {
            return Err(bad("network configuration disagrees with the environment".into()));
        }
        let mut net = PolicyNet::zeros(self.net.clone());
        let layout = net.tensor_layout();
        if layout.len() != self.tensors.len() {
            return Err(bad(format!("expected {} tensors, found {}", layout.len(), self.tensors.len())));
        }
        for ((name, shape, offset, len), t) in layout.into_iter().zip(&self.tensors) {
            if t.name != name || t.shape != shape {
                return Err(bad(format!("tensor {} {:?} where {name} {shape:?} was expected", t.name, t.shape)));
            }
            if t.data.len() != len {
                return Err(bad(format!("tensor {name} holds {} values, shape needs {len}", t.data.len())));
            }
            if t.data.iter().any(|x| !x.is_finite()) {
                return Err(bad(format!("tensor {name} contains non-finite values")));
            }
            net.params[offset..offset + len].copy_from_slice(&t.data);
        }
        Ok(Restored {
            net,
            env: self.env,
            hyper: self.hyper,
            catalog: Arc::new(catalog),
            steps: self.steps,
        })
    }
}
