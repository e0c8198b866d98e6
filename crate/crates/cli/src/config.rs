//! Run configuration: an optional TOML document overlaid by command-line
//! flags. Top-level keys hold the common options, `[augment]`, `[estimate]`
//! and so on hold per-command ones. Flags always win.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use illumix::io::RasterFormat;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub const SECTIONS: &[&str] = &["augment", "estimate", "correct", "seeds", "evaluate", "losses", "split"];

/// Options shared by every command.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Common {
    pub out: Option<PathBuf>,
    pub rng_seed: u64,
    /// Worker count; does not affect outputs, so it is left out of metadata.
    #[serde(skip_serializing)]
    pub jobs: Option<usize>,
    pub format: RasterFormat,
}

impl Default for Common {
    fn default() -> Self {
        Self { out: None, rng_seed: 0, jobs: None, format: RasterFormat::Png16 }
    }
}

impl Common {
    pub fn out(&self) -> Result<&Path> {
        self.out.as_deref().context("no output location: pass --out or set `out` in the config file")
    }
}

#[derive(Debug, Default)]
pub struct ConfigFile {
    root: Map<String, Value>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let table: toml::Table = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let Value::Object(root) = serde_json::to_value(table)? else { unreachable!("a TOML table is an object") };
        for (key, value) in &root {
            if value.is_object() && !SECTIONS.contains(&key.as_str()) {
                bail!("config {}: unknown section [{key}]", path.display());
            }
        }
        Ok(Self { root })
    }

    /// Top-level keys overlaid by the common flags.
    pub fn common(&self, flags: &impl Serialize) -> Result<Common> {
        let base = self.root.iter().filter(|(_, v)| !v.is_object()).map(|(k, v)| (k.clone(), v.clone())).collect();
        overlay(base, flags).context("common options")
    }

    /// The `[section]` table overlaid by that command's flags.
    pub fn section<T: DeserializeOwned>(&self, section: &str, flags: &impl Serialize) -> Result<T> {
        let base = match self.root.get(section) {
            Some(Value::Object(m)) => m.clone(),
            _ => Map::new(),
        };
        overlay(base, flags).with_context(|| format!("[{section}] options"))
    }
}

fn overlay<T: DeserializeOwned>(mut base: Map<String, Value>, flags: &impl Serialize) -> Result<T> {
    let Value::Object(flags) = serde_json::to_value(flags)? else { bail!("flags must serialize to a map") };
    // unset options and switches left off do not override the file
    for (k, v) in flags {
        if !(v.is_null() || v == Value::Bool(false)) {
            base.insert(k, v);
        }
    }
    Ok(serde_json::from_value(Value::Object(base))?)
}

/// Everything a run used, for the manifest.
pub fn describe(command: &str, common: &Common, params: &impl Serialize) -> Result<Value> {
    Ok(serde_json::json!({
        "command": command,
        "common": common,
        "params": params,
    }))
}
