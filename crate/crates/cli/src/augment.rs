use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use illumix::augment::{parse_pool, DEFAULT_FEATHER_SIGMA, DEFAULT_SEEDS_PER_ILLUMINANT};
use illumix::{dataset, io, AugmentConfig, Raster, SegmentMap};
use serde::{Deserialize, Serialize};

use crate::batch;
use crate::config::{describe, Common};

/// Relight canonical images with several illuminants.
#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    /// Directory of canonical (white-balanced) PNG or PFM images.
    #[arg(long)]
    input: Option<PathBuf>,
    /// JSON illuminant pool.
    #[arg(long)]
    pool: Option<PathBuf>,
    /// Directory of 16-bit label PNGs named `<id>.png`.
    #[arg(long)]
    segments: Option<PathBuf>,
    /// Use random Voronoi segments instead of segment files.
    #[arg(long)]
    synthetic_segments: bool,
    /// Illuminants per image.
    #[arg(long)]
    n: Option<usize>,
    /// Seed points per illuminant.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    feather_sigma: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub input: Option<PathBuf>,
    pub pool: Option<PathBuf>,
    pub segments: Option<PathBuf>,
    pub synthetic_segments: bool,
    pub n: usize,
    pub k: usize,
    pub feather_sigma: f64,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            input: None,
            pool: None,
            segments: None,
            synthetic_segments: false,
            n: 4,
            k: DEFAULT_SEEDS_PER_ILLUMINANT,
            feather_sigma: DEFAULT_FEATHER_SIGMA,
        }
    }
}

/// Images in a directory keyed by file stem, sorted.
pub fn list_images(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut found = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if path.is_file() && matches!(ext.as_deref(), Some("png" | "pfm")) {
            let id = path.file_stem().and_then(|s| s.to_str()).context("non UTF-8 file name")?.to_string();
            found.push((id, path));
        }
    }
    found.sort();
    if let Some(w) = found.windows(2).find(|w| w[0].0 == w[1].0) {
        bail!("two input images share the id {:?}", w[0].0);
    }
    if found.is_empty() {
        bail!("no PNG or PFM images in {}", dir.display());
    }
    Ok(found)
}

pub fn run(common: &Common, p: Params) -> Result<usize> {
    let out = common.out()?;
    let input = batch::required(&p.input, "input")?;
    let pool_path = batch::required(&p.pool, "pool")?;
    if p.segments.is_none() && !p.synthetic_segments {
        bail!("pass --segments <dir> or --synthetic-segments");
    }
    let pool_text = std::fs::read_to_string(pool_path).with_context(|| format!("reading pool {}", pool_path.display()))?;
    let pool = parse_pool(&pool_text).with_context(|| format!("parsing pool {}", pool_path.display()))?;
    let inputs = list_images(input)?;
    batch::create_out(out)?;

    let outcomes = batch::run_each(&inputs, |id, path| {
        let img = io::read_image(path)?;
        let segments = match (&p.segments, p.synthetic_segments) {
            (_, true) => SegmentMap::voronoi(img.width(), img.height(), p.n, batch::sample_seed(common.rng_seed, &format!("{id}/segments")))?,
            (Some(dir), false) => io::read_segments(&dir.join(format!("{id}.png")))?,
            (None, false) => unreachable!("checked above"),
        };
        let cfg = AugmentConfig { n: p.n, k: p.k, feather_sigma: p.feather_sigma, rng_seed: batch::sample_seed(common.rng_seed, id) };
        let sample = illumix::augment(id, &img, &segments, &pool, &cfg)?;
        dataset::write_sample(&out.join(id), &sample, common.format)?;
        Ok(id.to_string())
    });
    batch::finish(out, "augmented", describe("augment", common, &p)?, outcomes)
}
