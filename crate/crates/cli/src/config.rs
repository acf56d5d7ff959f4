//! Pipeline configuration file (TOML). Every section is optional.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use g2p_bridge_core::corpus::AugmentConfig;
use g2p_bridge_core::metrics::EvalOptions;
use g2p_bridge_core::model::{ModelConfig, TrainConfig};
use g2p_bridge_core::tokenizer::BpeConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub alphabet: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub tokenizer: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

/// Held-out sizes used when a corpus has no split labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub val: usize,
    pub test: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { val: 1000, test: 1000 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: Paths,
    pub split: SplitConfig,
    pub augment: AugmentConfig,
    pub tokenizer: BpeConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalOptions,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: Self = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        // relative paths in the file are relative to the file
        if let Some(dir) = path.parent() {
            let p = &mut cfg.paths;
            for slot in
                [&mut p.corpus, &mut p.alphabet, &mut p.lexicon, &mut p.tokenizer, &mut p.checkpoint, &mut p.report]
            {
                if let Some(rel) = slot.as_mut().filter(|r| r.is_relative()) {
                    *rel = dir.join(&*rel);
                }
            }
        }
        Ok(cfg)
    }
}
