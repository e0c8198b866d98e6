//! Per-sample fan-out with failure isolation, and the files every batch
//! command leaves behind.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use illumix::dataset::{FailedSample, Manifest, ManifestEntry, SampleMeta};
use illumix::{io, LinearImage};
use log::{info, warn};
use rayon::prelude::*;

pub type Outcome<T> = (String, Result<T, String>);

/// Run `f` over id-sorted items in parallel. Errors are kept per item;
/// results come back in input order whatever the worker count.
pub fn run_each<I, T, F>(items: &[(String, I)], f: F) -> Vec<Outcome<T>>
where
    I: Sync,
    T: Send,
    F: Fn(&str, &I) -> Result<T> + Sync,
{
    items
        .par_iter()
        .map(|(id, item)| {
            let r = f(id, item).map_err(|e| format!("{e:#}"));
            if let Err(e) = &r {
                warn!("{id}: {e}");
            }
            (id.clone(), r)
        })
        .collect()
}

/// Write `errors.log` (only when something failed) and return the failure count.
pub fn write_error_log<T>(out: &Path, outcomes: &[Outcome<T>]) -> Result<usize> {
    let log_path = out.join("errors.log");
    let lines: Vec<String> = outcomes.iter().filter_map(|(id, r)| r.as_ref().err().map(|e| format!("{id}: {e}\n"))).collect();
    if lines.is_empty() {
        if log_path.exists() {
            std::fs::remove_file(&log_path).with_context(|| format!("removing stale {}", log_path.display()))?;
        }
    } else {
        illumix::io::write_file_atomically(&log_path, lines.concat().as_bytes())?;
    }
    Ok(lines.len())
}

/// Finish a command that produces one directory per sample: write
/// `manifest.json` and the error log, return the failure count.
pub fn finish(out: &Path, kind: &str, config: serde_json::Value, outcomes: Vec<Outcome<String>>) -> Result<usize> {
    let failures = write_error_log(out, &outcomes)?;
    let mut manifest = Manifest::new(kind, config);
    for (id, r) in outcomes {
        match r {
            Ok(path) => manifest.samples.push(ManifestEntry { id, path }),
            Err(error) => manifest.failed.push(FailedSample { id, error }),
        }
    }
    manifest.sort();
    manifest.write(&out.join("manifest.json"))?;
    info!("{kind}: {} written, {failures} failed", manifest.samples.len());
    Ok(failures)
}

/// `(id, directory)` pairs of a manifest, sorted by id.
pub fn load_manifest(path: &Path) -> Result<Vec<(String, PathBuf)>> {
    let m = Manifest::read(path).with_context(|| format!("reading manifest {}", path.display()))?;
    let mut entries = m.resolve(path);
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    if entries.is_empty() {
        bail!("manifest {} lists no samples", path.display());
    }
    Ok(entries)
}

/// Metadata and biased image of a stored sample.
pub fn read_biased(dir: &Path) -> Result<(SampleMeta, LinearImage)> {
    let meta: SampleMeta = io::read_json(&dir.join("meta.json"))?;
    let biased = io::read_image(&dir.join(format!("biased.{}", meta.format.extension())))?;
    Ok((meta, biased))
}

/// Per-sample seed derived from the run seed and the sample id, so a
/// sample's randomness does not depend on which other samples are present.
pub fn sample_seed(run_seed: u64, id: &str) -> u64 {
    // FNV-1a over the id, mixed with the run seed
    let h = id.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
    h ^ run_seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

pub fn create_out(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating output directory {}", out.display()))
}

pub fn required<'a, T>(v: &'a Option<T>, what: &str) -> Result<&'a T> {
    v.as_ref().with_context(|| format!("missing required option `{what}`"))
}
