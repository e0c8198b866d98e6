use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use illumix::dataset::{self, read_seed_masks};
use illumix::estimators::ESTIMATOR_NAMES;
use illumix::{
    doing_nothing, grey_world_family, import_probability_map, io, reconstruct_illumination, seed_diffusion_estimate,
    DiffusionConfig, EstimatorConfig, IlluminationMap, Illuminant, LinearImage, Minkowski, ProbabilityMap, Raster, SeedSet,
};
use serde::{Deserialize, Serialize};

use crate::batch;
use crate::config::{describe, Common};
use crate::seeds::gray_seeds;

/// Where seed points come from for `seed-diffusion` and `import`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeedSource {
    /// Ground-truth seed masks stored with each sample.
    Gt,
    /// Gray-pixel clustering on the biased image.
    Grayness,
    /// A `seeds` run, given with `--seeds`.
    File,
}

/// Predict illumination maps for a dataset.
#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    /// Dataset manifest (from `augment`).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// A classical estimator, `doing-nothing`, `seed-diffusion` or `import`.
    #[arg(long)]
    estimator: Option<String>,
    /// Minkowski norm override (`inf` for the maximum).
    #[arg(long)]
    minkowski_p: Option<Minkowski>,
    #[arg(long)]
    derivative_order: Option<u8>,
    #[arg(long)]
    smoothing_sigma: Option<f64>,
    #[arg(long)]
    saturation_threshold: Option<f64>,
    #[arg(long, value_enum)]
    seed_source: Option<SeedSource>,
    /// Seeds manifest for `--seed-source file`.
    #[arg(long)]
    seeds: Option<PathBuf>,
    /// Clusters for grayness seeding; defaults to each sample's N.
    #[arg(long)]
    m: Option<usize>,
    /// Points kept per grayness cluster.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    gray_fraction: Option<f64>,
    #[arg(long)]
    min_contrast: Option<f64>,
    #[arg(long)]
    sigma_chroma: Option<f64>,
    /// Spatial kernel width as a fraction of the image diagonal.
    #[arg(long)]
    sigma_spatial_fraction: Option<f64>,
    /// Directory of `<id>.pmap` probability maps for `import`.
    #[arg(long)]
    import_dir: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub dataset: Option<PathBuf>,
    pub estimator: Option<String>,
    pub minkowski_p: Option<Minkowski>,
    pub derivative_order: Option<u8>,
    pub smoothing_sigma: Option<f64>,
    pub saturation_threshold: Option<f64>,
    pub seed_source: SeedSource,
    pub seeds: Option<PathBuf>,
    pub m: Option<usize>,
    pub k: Option<usize>,
    pub gray_fraction: f64,
    pub min_contrast: f64,
    pub sigma_chroma: f64,
    pub sigma_spatial_fraction: f64,
    pub import_dir: Option<PathBuf>,
}

impl Default for Params {
    fn default() -> Self {
        let s = crate::seeds::Params::default();
        let d = DiffusionConfig::default();
        Self {
            dataset: None,
            estimator: None,
            minkowski_p: None,
            derivative_order: None,
            smoothing_sigma: None,
            saturation_threshold: None,
            seed_source: SeedSource::Grayness,
            seeds: None,
            m: None,
            k: None,
            gray_fraction: s.gray_fraction,
            min_contrast: s.min_contrast,
            sigma_chroma: d.sigma_chroma,
            sigma_spatial_fraction: d.sigma_spatial_fraction,
            import_dir: None,
        }
    }
}

/// What the estimator wrote next to `illum.pfm`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub estimator: String,
    /// Global estimate, for single-illuminant estimators.
    pub illuminant: Option<Illuminant>,
}

enum Method {
    Classical(EstimatorConfig),
    DoingNothing,
    SeedDiffusion(DiffusionConfig),
    Import(PathBuf),
}

fn method(p: &Params, name: &str) -> Result<Method> {
    Ok(match name {
        "doing-nothing" => Method::DoingNothing,
        "seed-diffusion" => {
            Method::SeedDiffusion(DiffusionConfig { sigma_chroma: p.sigma_chroma, sigma_spatial_fraction: p.sigma_spatial_fraction })
        }
        "import" => Method::Import(batch::required(&p.import_dir, "import_dir")?.clone()),
        _ => {
            let Some(mut cfg) = EstimatorConfig::by_name(name) else {
                bail!(
                    "unknown estimator {name:?}; expected one of {}, doing-nothing, seed-diffusion, import",
                    ESTIMATOR_NAMES.join(", ")
                );
            };
            if let Some(v) = p.minkowski_p {
                cfg.minkowski_p = v;
            }
            if let Some(v) = p.derivative_order {
                cfg.derivative_order = v;
            }
            if let Some(v) = p.smoothing_sigma {
                cfg.smoothing_sigma = v;
            }
            if let Some(v) = p.saturation_threshold {
                cfg.saturation_threshold = v;
            }
            cfg.validate()?;
            Method::Classical(cfg)
        }
    })
}

struct SeedContext<'a> {
    p: &'a Params,
    rng_seed: u64,
    /// Seed directories of a `seeds` run, by id.
    files: HashMap<String, PathBuf>,
}

impl SeedContext<'_> {
    fn seeds_for(&self, id: &str, sample_dir: &Path, n: usize, biased: &LinearImage) -> Result<SeedSet> {
        let p = self.p;
        match p.seed_source {
            SeedSource::Gt => Ok(read_seed_masks(sample_dir, n)?),
            SeedSource::Grayness => {
                gray_seeds(biased, p.m.unwrap_or(n), p.k, p.gray_fraction, p.min_contrast, batch::sample_seed(self.rng_seed, id))
            }
            SeedSource::File => {
                let dir = self.files.get(id).with_context(|| format!("the seeds run has no entry for {id}"))?;
                Ok(io::read_json(&dir.join("seeds.json"))?)
            }
        }
    }
}

pub fn run(common: &Common, p: Params) -> Result<usize> {
    let out = common.out()?;
    let name = batch::required(&p.estimator, "estimator")?.clone();
    let method = method(&p, &name)?;
    let files = match (p.seed_source, &p.seeds) {
        (SeedSource::File, None) => bail!("--seed-source file needs --seeds <manifest>"),
        (SeedSource::File, Some(m)) => batch::load_manifest(m)?.into_iter().collect(),
        _ => HashMap::new(),
    };
    let seed_ctx = SeedContext { p: &p, rng_seed: common.rng_seed, files };
    let samples = batch::load_manifest(batch::required(&p.dataset, "dataset")?)?;
    batch::create_out(out)?;

    let outcomes = batch::run_each(&samples, |id, dir| {
        let (meta, biased) = batch::read_biased(dir)?;
        let (w, h) = biased.dims();
        let target = out.join(id);
        let record = |illuminant| EstimateRecord { estimator: name.clone(), illuminant };
        io::write_dir_atomically(&target, |d| {
            let (map, illuminant): (IlluminationMap, Option<Illuminant>) = match &method {
                Method::DoingNothing => (doing_nothing(&biased), Some(Illuminant::neutral())),
                Method::Classical(cfg) => {
                    let e = grey_world_family(&biased, cfg)?;
                    (IlluminationMap::uniform(w, h, e), Some(e))
                }
                Method::SeedDiffusion(_) | Method::Import(_) => {
                    let seeds = seed_ctx.seeds_for(id, dir, meta.provenance.n, &biased).map_err(to_core)?;
                    let probs: ProbabilityMap = match &method {
                        Method::SeedDiffusion(cfg) => seed_diffusion_estimate(&biased, &seeds, cfg)?,
                        Method::Import(dir) => import_probability_map(&dir.join(format!("{id}.pmap")))?,
                        _ => unreachable!(),
                    };
                    let map = reconstruct_illumination(&probs, &seeds)?;
                    probs.write(&d.join("probs.pmap"))?;
                    dataset::write_seed_set(d, &seeds)?;
                    (map, None)
                }
            };
            io::write_illumination_map(&d.join("illum.pfm"), &map)?;
            io::write_json(&d.join("estimate.json"), &record(illuminant))
        })?;
        Ok(id.to_string())
    });
    batch::finish(out, "predictions", describe("estimate", common, &p)?, outcomes)
}

/// Carry a CLI-side error through a library callback.
fn to_core(e: anyhow::Error) -> illumix::Error {
    match e.downcast::<illumix::Error>() {
        Ok(e) => e,
        Err(e) => illumix::Error::Config(format!("{e:#}")),
    }
}
