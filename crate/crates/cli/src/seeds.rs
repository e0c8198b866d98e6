use std::path::PathBuf;

use anyhow::Result;
use illumix::dataset;
use illumix::{cluster_gray_pixels, grayness_map, ClusterConfig, LinearImage, SeedSet};
use serde::{Deserialize, Serialize};

use crate::batch;
use crate::config::{describe, Common};

/// Estimate seed points from gray pixels.
#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    /// Dataset manifest (from `augment`).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Number of illuminant clusters; defaults to each sample's N.
    #[arg(long)]
    m: Option<usize>,
    /// Keep at most this many points per cluster.
    #[arg(long)]
    k: Option<usize>,
    /// Fraction of pixels, grayest first, that enter clustering.
    #[arg(long)]
    gray_fraction: Option<f64>,
    #[arg(long)]
    min_contrast: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub dataset: Option<PathBuf>,
    pub m: Option<usize>,
    pub k: Option<usize>,
    pub gray_fraction: f64,
    pub min_contrast: f64,
}

impl Default for Params {
    fn default() -> Self {
        let c = ClusterConfig::default();
        Self { dataset: None, m: None, k: None, gray_fraction: c.gray_fraction, min_contrast: c.min_contrast }
    }
}

/// Grayness clustering on one image, optionally thinned to `k` per cluster.
pub fn gray_seeds(
    img: &LinearImage,
    m: usize,
    k: Option<usize>,
    gray_fraction: f64,
    min_contrast: f64,
    rng_seed: u64,
) -> Result<SeedSet> {
    let cfg = ClusterConfig { gray_fraction, min_contrast, rng_seed, ..ClusterConfig::default() };
    let seeds = cluster_gray_pixels(img, &grayness_map(img), m, &cfg)?;
    Ok(match k {
        Some(k) => seeds.subsample(k, rng_seed),
        None => seeds,
    })
}

pub fn run(common: &Common, p: Params) -> Result<usize> {
    let out = common.out()?;
    let samples = batch::load_manifest(batch::required(&p.dataset, "dataset")?)?;
    batch::create_out(out)?;
    let outcomes = batch::run_each(&samples, |id, dir| {
        let (meta, biased) = batch::read_biased(dir)?;
        let m = p.m.unwrap_or(meta.provenance.n);
        let seeds = gray_seeds(&biased, m, p.k, p.gray_fraction, p.min_contrast, batch::sample_seed(common.rng_seed, id))?;
        dataset::write_seed_set(&out.join(id), &seeds)?;
        Ok(id.to_string())
    });
    batch::finish(out, "seeds", describe("seeds", common, &p)?, outcomes)
}
