use serde::{Deserialize, Serialize};

use super::{PoolError, Valence};

pub const MANIFEST_VERSION: u32 = 1;

/// On-disk pool manifest. Image paths are relative to the manifest file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub images: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub path: String,
    pub category: String,
    pub valence: Valence,
    pub source_url: String,
    pub license: String,
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self, PoolError> {
        let manifest: Manifest = serde_json::from_str(text).map_err(|e| PoolError::Parse(e.to_string()))?;
        if manifest.version != MANIFEST_VERSION {
            return Err(PoolError::Parse(format!(
                "unsupported manifest version {} (expected {MANIFEST_VERSION})",
                manifest.version
            )));
        }
        if let Some(entry) = manifest.images.iter().find(|e| e.id.is_empty()) {
            return Err(PoolError::Parse(format!(
                "entry with path `{}` has an empty id",
                entry.path
            )));
        }
        Ok(manifest)
    }
}
