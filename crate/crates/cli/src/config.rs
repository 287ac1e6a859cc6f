//! Optional TOML configuration shared by all subcommands. Flags given on
//! the command line override the file.

use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};
use untangle_core::classifier::TrainConfig;
use untangle_core::code_metrics::ReadabilityWeights;
use untangle_core::embedding::EmbedConfig;
use untangle_core::goldset::GoldsetConfig;
use untangle_core::llm::ModelConfig;
use untangle_core::mining::DEFAULT_BUGFIX_PATTERNS;

use crate::invalid;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub llm: ModelConfig,
    pub embed: EmbedConfig,
    pub train: TrainConfig,
    pub goldset: GoldsetConfig,
    pub readability: ReadabilityWeights,
    pub mining: MiningSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MiningSection {
    pub bugfix_patterns: Vec<String>,
    pub extensions: Vec<String>,
}

impl Default for MiningSection {
    fn default() -> Self {
        Self {
            bugfix_patterns: DEFAULT_BUGFIX_PATTERNS.iter().map(|s| s.to_string()).collect(),
            extensions: vec!["java".to_string()],
        }
    }
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        if !path.is_file() {
            return Err(invalid(format!("config file {} not found", path.display())));
        }
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }
}
