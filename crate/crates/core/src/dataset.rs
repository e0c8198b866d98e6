//! On-disk layout of augmented samples and run manifests.
//!
//! Each sample lives in its own directory:
//!
//! ```text
//! <id>/biased.{png,pfm}      color-biased image
//! <id>/corrected.{png,pfm}   canonical image
//! <id>/illum_{i}.json        color of illuminant i
//! <id>/seedmask_{i}.png      seed points of illuminant i
//! <id>/illum.pfm             ground-truth illumination map
//! <id>/meta.json             provenance and parameters
//! ```
//!
//! The first four groups are the `2N + 2` training artifacts; the map and
//! metadata ride along for evaluation and reproducibility.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::{AugmentedSample, Provenance};
use crate::color::{Illuminant, IlluminationMap, LinearImage};
use crate::error::{Error, Result};
use crate::grayness::{IlluminantSeeds, SeedSet};
use crate::io::{self, RasterFormat};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IlluminantRecord {
    pub index: usize,
    pub rgb: Illuminant,
    pub pool_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub schema: u32,
    pub format: RasterFormat,
    pub provenance: Provenance,
    /// The source image is assumed to be white-balanced before relighting.
    pub canonical_input: String,
    pub artifacts: Vec<String>,
}

/// File names of the `2N + 2` artifacts for a given illuminant count.
pub fn artifact_names(n: usize, format: RasterFormat) -> Vec<String> {
    let ext = format.extension();
    let mut names: Vec<String> = (0..n).map(|i| format!("illum_{i}.json")).collect();
    names.extend((0..n).map(|i| format!("seedmask_{i}.png")));
    names.push(format!("biased.{ext}"));
    names.push(format!("corrected.{ext}"));
    names
}

/// Write one sample directory atomically and return the artifact paths.
pub fn write_sample(dir: &Path, sample: &AugmentedSample, format: RasterFormat) -> Result<Vec<PathBuf>> {
    let n = sample.illuminant_colors.len();
    let names = artifact_names(n, format);
    io::write_dir_atomically(dir, |d| {
        for (i, color) in sample.illuminant_colors.iter().enumerate() {
            let rec = IlluminantRecord { index: i, rgb: *color, pool_id: sample.provenance.pool_ids[i].clone() };
            io::write_json(&d.join(format!("illum_{i}.json")), &rec)?;
            io::write_mask(&d.join(format!("seedmask_{i}.png")), sample.seeds.width(), sample.seeds.height(), &sample.seeds.mask(i))?;
        }
        let ext = format.extension();
        io::write_image(&d.join(format!("biased.{ext}")), &sample.biased, format)?;
        io::write_image(&d.join(format!("corrected.{ext}")), &sample.corrected, format)?;
        io::write_illumination_map(&d.join("illum.pfm"), &sample.illum_map)?;
        let meta = SampleMeta {
            schema: SCHEMA_VERSION,
            format,
            provenance: sample.provenance.clone(),
            canonical_input: "source image treated as white-balanced (canonical) before relighting".into(),
            artifacts: names.clone(),
        };
        io::write_json(&d.join("meta.json"), &meta)
    })?;
    Ok(names.iter().map(|n| dir.join(n)).collect())
}

/// A sample read back from disk.
#[derive(Debug, Clone)]
pub struct StoredSample {
    pub biased: LinearImage,
    pub corrected: LinearImage,
    pub illum_map: IlluminationMap,
    pub seeds: SeedSet,
    pub meta: SampleMeta,
}

pub fn read_sample(dir: &Path) -> Result<StoredSample> {
    let meta: SampleMeta = io::read_json(&dir.join("meta.json"))?;
    let ext = meta.format.extension();
    let biased = io::read_image(&dir.join(format!("biased.{ext}")))?;
    let corrected = io::read_image(&dir.join(format!("corrected.{ext}")))?;
    let illum_map = io::read_illumination_map(&dir.join("illum.pfm"))?;
    let seeds = read_seed_masks(dir, meta.provenance.n)?;
    Ok(StoredSample { biased, corrected, illum_map, seeds, meta })
}

/// Rebuild a seed set from `illum_{i}.json` + `seedmask_{i}.png`.
pub fn read_seed_masks(dir: &Path, n: usize) -> Result<SeedSet> {
    let mut illuminants = Vec::with_capacity(n);
    let mut dims = None;
    for i in 0..n {
        let rec: IlluminantRecord = io::read_json(&dir.join(format!("illum_{i}.json")))?;
        let (w, h, mask) = io::read_mask(&dir.join(format!("seedmask_{i}.png")))?;
        dims = Some((w, h));
        let points = mask.iter().enumerate().filter(|(_, b)| **b).map(|(p, _)| (p % w, p / w)).collect();
        illuminants.push(IlluminantSeeds { color: rec.rgb, points });
    }
    let (w, h) = dims.ok_or_else(|| Error::format(dir, "sample has no illuminants"))?;
    SeedSet::new(w, h, illuminants).map_err(|e| Error::format(dir, e.to_string()))
}

/// Write a seed set as JSON plus one mask PNG per illuminant.
pub fn write_seed_set(dir: &Path, seeds: &SeedSet) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    io::write_json(&dir.join("seeds.json"), seeds)?;
    for i in 0..seeds.n_illuminants() {
        io::write_mask(&dir.join(format!("seedmask_{i}.png")), seeds.width(), seeds.height(), &seeds.mask(i))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Relative to the manifest's directory.
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: u32,
    pub kind: String,
    /// Run parameters, so the run can be reproduced from the manifest.
    pub config: serde_json::Value,
    pub samples: Vec<ManifestEntry>,
    #[serde(default)]
    pub failed: Vec<FailedSample>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailedSample {
    pub id: String,
    pub error: String,
}

impl Manifest {
    pub fn new(kind: &str, config: serde_json::Value) -> Self {
        Self { schema: SCHEMA_VERSION, kind: kind.into(), config, samples: Vec::new(), failed: Vec::new() }
    }

    pub fn sort(&mut self) {
        self.samples.sort_by(|a, b| a.id.cmp(&b.id));
        self.failed.sort_by(|a, b| a.id.cmp(&b.id));
    }

    pub fn read(path: &Path) -> Result<Self> {
        let m: Manifest = io::read_json(path)?;
        if m.schema != SCHEMA_VERSION {
            return Err(Error::format(path, format!("unsupported manifest schema {}", m.schema)));
        }
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        io::write_file_atomically(path, text.as_bytes())
    }

    /// Absolute sample paths resolved against the manifest location.
    pub fn resolve(&self, manifest_path: &Path) -> Vec<(String, PathBuf)> {
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        self.samples.iter().map(|e| (e.id.clone(), base.join(&e.path))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::{augment, parse_pool, AugmentConfig, SegmentMap};
    use crate::color::{apply_illumination, Raster};

    fn sample() -> AugmentedSample {
        let img = LinearImage::from_fn(20, 16, |x, y| [0.1 + 0.03 * x as f64, 0.2 + 0.04 * y as f64, 0.5]).unwrap();
        let seg = SegmentMap::voronoi(20, 16, 4, 2).unwrap();
        let pool = parse_pool("[[0.8,0.6,0.4],[0.3,0.5,0.9],[0.6,0.6,0.5],[0.5,0.9,0.6]]").unwrap();
        augment("s", &img, &seg, &pool, &AugmentConfig { n: 4, k: 5, feather_sigma: 2.0, rng_seed: 8 }).unwrap()
    }

    #[test]
    fn written_sample_has_all_artifacts_and_reads_back() {
        let dir = tempfile::tempdir().unwrap();
        let s = sample();
        let target = dir.path().join("s");
        let paths = write_sample(&target, &s, RasterFormat::Pfm).unwrap();
        assert_eq!(paths.len(), 10);
        assert!(paths.iter().all(|p| p.exists()));
        assert!(target.join("illum.pfm").exists() && target.join("meta.json").exists());

        let back = read_sample(&target).unwrap();
        assert_eq!(back.seeds, s.seeds);
        let rebuilt = apply_illumination(&back.corrected, &back.illum_map).unwrap();
        for p in 0..rebuilt.len() {
            for c in 0..3 {
                assert!((rebuilt.pixel(p)[c] - back.biased.pixel(p)[c]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn rewrite_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let s = sample();
        let a = write_sample(&dir.path().join("a"), &s, RasterFormat::Png16).unwrap();
        let b = write_sample(&dir.path().join("b"), &s, RasterFormat::Png16).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
        }
    }
}
