use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use illumix::dataset::{Manifest, ManifestEntry};
use illumix::split_dataset;
use serde::{Deserialize, Serialize};

use crate::batch;
use crate::config::{describe, Common};

/// Split a dataset manifest into train and test manifests.
#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Fraction of samples in the train part.
    #[arg(long)]
    train_fraction: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub dataset: Option<PathBuf>,
    pub train_fraction: f64,
}

impl Default for Params {
    fn default() -> Self {
        Self { dataset: None, train_fraction: 0.8 }
    }
}

/// Entry paths rewritten so they resolve from `out`.
fn rebase(entries: &[ManifestEntry], from: &Path, out: &Path) -> Result<Vec<ManifestEntry>> {
    let same = from.canonicalize()? == out.canonicalize()?;
    entries
        .iter()
        .map(|e| {
            let path = if same {
                e.path.clone()
            } else {
                let abs = from.join(&e.path).canonicalize().with_context(|| format!("sample {} not found", e.id))?;
                abs.to_str().context("non UTF-8 path")?.to_string()
            };
            Ok(ManifestEntry { id: e.id.clone(), path })
        })
        .collect()
}

pub fn run(common: &Common, p: Params) -> Result<usize> {
    let manifest_path = batch::required(&p.dataset, "dataset")?;
    let manifest = Manifest::read(manifest_path)?;
    let from = manifest_path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let out = common.out.as_deref().unwrap_or(from);
    batch::create_out(out)?;

    let mut entries = manifest.samples.clone();
    entries.sort_by(|a, b| a.id.cmp(&b.id));
    let (train, test) = split_dataset(&entries, p.train_fraction, common.rng_seed)?;
    let config = describe("split", common, &p)?;
    for (name, part) in [("train", train), ("test", test)] {
        let mut m = Manifest::new(&manifest.kind, config.clone());
        m.samples = rebase(&part, from, out)?;
        m.write(&out.join(format!("{name}.json")))?;
        log::info!("{name}: {} samples", m.samples.len());
    }
    Ok(0)
}
