//! Run manifests: every command that writes artifacts records its resolved
//! arguments, so any output can be regenerated exactly with `um rerun`.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    /// Resolved `(flag, value)` pairs, in flag order.
    pub args: Vec<(String, String)>,
}

impl RunManifest {
    pub fn new(subcommand: &str, args: Vec<(&str, String)>) -> Self {
        Self {
            tool: "um".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: subcommand.to_string(),
            args: args
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
        }
    }

    /// Full argument vector for re-parsing: subcommand then `--flag value`.
    pub fn to_argv(&self) -> Vec<String> {
        let mut argv = vec![self.subcommand.clone()];
        for (flag, value) in &self.args {
            argv.push(format!("--{flag}"));
            argv.push(value.clone());
        }
        argv
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        fs::write(path, json + "\n")
            .with_context(|| format!("writing manifest {}", path.display()))?;
        Ok(())
    }

    /// Writes `<artifact>.manifest.json` next to an output artifact.
    pub fn write_alongside(&self, artifact: &Path) -> Result<()> {
        let mut name = artifact.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        self.write(&artifact.with_file_name(name))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading manifest {}", path.display()))?;
        serde_json::from_str(&text).context("manifest is not valid JSON")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argv_round_trip() {
        let manifest = RunManifest::new(
            "train",
            vec![("net", "a.bnet".to_string()), ("seed", "7".to_string())],
        );
        assert_eq!(
            manifest.to_argv(),
            vec!["train", "--net", "a.bnet", "--seed", "7"]
        );
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let manifest = RunManifest::new("generate", vec![("seed", "3".to_string())]);
        manifest.write(&path).unwrap();
        assert_eq!(RunManifest::read(&path).unwrap(), manifest);
    }
}
