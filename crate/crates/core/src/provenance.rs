//! Provenance stamped into every artifact the toolkit writes.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const TOOL_NAME: &str = "g2p-bridge";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactMeta {
    pub tool: String,
    pub config_digest: String,
    pub seed: Option<u64>,
}

impl ArtifactMeta {
    pub fn new(config: &impl Serialize, seed: Option<u64>) -> Self {
        Self { tool: format!("{TOOL_NAME} {TOOL_VERSION}"), config_digest: config_digest(config), seed }
    }
}

/// First 16 hex digits of the SHA-256 of the config's JSON serialization.
pub fn config_digest(config: &impl Serialize) -> String {
    let json = serde_json::to_vec(config).expect("config serializes");
    let digest = Sha256::digest(&json);
    hex::encode(&digest[..8])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_is_stable_and_sensitive() {
        let a = config_digest(&("bpe", 3, 100));
        assert_eq!(a.len(), 16);
        assert_eq!(a, config_digest(&("bpe", 3, 100)));
        assert_ne!(a, config_digest(&("bpe", 3, 101)));
    }
}
