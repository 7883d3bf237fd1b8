//! Training run configuration file.
//!
//! ```toml
//! schema_version = 1
//! data = "data/micro"        # directory written by `spadvid dataset`
//! out = "runs/micro"
//! checkpoint_format = "f64"  # or "f32"
//!
//! [network]
//! num_blocks = 3
//! channels = 60
//!
//! [train]
//! steps = 20000
//! batch_size = 8
//! checkpoint_every = 1000
//!
//! [train.sgd]
//! learning_rate = 0.01
//! momentum = 0.9
//! ```
//!
//! Omitted keys take their defaults. Command-line flags override the file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spad_core::network::{FloatFormat, NetworkConfig, TrainConfig};

pub const RUN_CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckpointFormat {
    F32,
    #[default]
    F64,
}

impl From<CheckpointFormat> for FloatFormat {
    fn from(f: CheckpointFormat) -> Self {
        match f {
            CheckpointFormat::F32 => FloatFormat::F32,
            CheckpointFormat::F64 => FloatFormat::F64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub data: PathBuf,
    pub out: PathBuf,
    #[serde(default)]
    pub checkpoint_format: CheckpointFormat,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let cfg: RunConfig = toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        if cfg.schema_version != RUN_CONFIG_VERSION {
            return Err(format!(
                "{}: schema_version {} is not supported (expected {RUN_CONFIG_VERSION})",
                path.display(),
                cfg.schema_version
            ));
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serialises")
    }
}
