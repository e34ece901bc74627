use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::Command;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputDigest {
    pub source: String,
    pub sha256: String,
    pub dropped_rows: usize,
}

/// Everything needed to reproduce one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Command,
    pub master_seed: Option<u64>,
    pub inputs: Vec<InputDigest>,
    pub version: String,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("cannot read manifest {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Data(format!("malformed manifest {}: {e}", path.display())))
    }
}

/// `--manifest` if given, else `<out>.manifest.json` next to the output.
pub fn default_path(out: Option<&Path>, manifest: Option<&Path>) -> Option<PathBuf> {
    manifest.map(Path::to_path_buf).or_else(|| {
        out.map(|o| {
            let mut name = o.as_os_str().to_owned();
            name.push(".manifest.json");
            PathBuf::from(name)
        })
    })
}
