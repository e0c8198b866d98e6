use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use illumix::dataset::{self, SCHEMA_VERSION};
use illumix::mixture::DEFAULT_LAMBDA;
use illumix::numeric::stable_mean;
use illumix::{import_probability_map, io, oracle_probabilities, total_loss, LossReport, ProbabilityMap, SeedSet};
use serde::{Deserialize, Serialize};

use crate::batch;
use crate::config::{describe, Common};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    /// `probs.pmap` of an `estimate` run.
    Predictions,
    /// Exact inversion of the ground-truth map.
    Oracle,
    /// Equal weight on every illuminant.
    Uniform,
}

/// Evaluate the supervised losses of probability maps.
#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, value_enum)]
    probabilities: Option<Source>,
    /// Predictions manifest for `--probabilities predictions`.
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Weight of the supervised terms.
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub dataset: Option<PathBuf>,
    pub probabilities: Source,
    pub predictions: Option<PathBuf>,
    pub lambda: f64,
}

impl Default for Params {
    fn default() -> Self {
        Self { dataset: None, probabilities: Source::Predictions, predictions: None, lambda: DEFAULT_LAMBDA }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SampleLosses {
    pub id: String,
    pub losses: LossReport,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MeanLosses {
    pub illum: f64,
    pub rgb: f64,
    pub masks: f64,
    pub total_supervised: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LossSummary {
    pub schema: u32,
    pub lambda: f64,
    pub config: serde_json::Value,
    pub samples: Vec<SampleLosses>,
    pub mean: MeanLosses,
    pub failed: Vec<String>,
}

pub fn run(common: &Common, p: Params) -> Result<usize> {
    let out = common.out()?;
    let samples = batch::load_manifest(batch::required(&p.dataset, "dataset")?)?;
    let predictions: BTreeMap<String, PathBuf> = match (p.probabilities, &p.predictions) {
        (Source::Predictions, None) => bail!("--probabilities predictions needs --predictions <manifest>"),
        (Source::Predictions, Some(m)) => batch::load_manifest(m)?.into_iter().collect(),
        _ => BTreeMap::new(),
    };
    batch::create_out(out)?;

    let outcomes = batch::run_each(&samples, |id, dir| {
        let gt = dataset::read_sample(dir)?;
        let (w, h) = (gt.seeds.width(), gt.seeds.height());
        let (probs, seeds): (ProbabilityMap, SeedSet) = match p.probabilities {
            Source::Oracle => (oracle_probabilities(&gt.illum_map, &gt.seeds)?.map, gt.seeds.clone()),
            Source::Uniform => (ProbabilityMap::uniform(w, h, gt.seeds.n_illuminants()), gt.seeds.clone()),
            Source::Predictions => {
                let pred = predictions.get(id).context("no prediction for this id")?;
                let probs = import_probability_map(&pred.join("probs.pmap"))?;
                let seeds_file = pred.join("seeds.json");
                let seeds = if seeds_file.exists() { io::read_json(&seeds_file)? } else { gt.seeds.clone() };
                (probs, seeds)
            }
        };
        Ok(total_loss(&gt.illum_map, &probs, &gt.biased, &gt.corrected, &seeds, p.lambda)?)
    });
    let failures = batch::write_error_log(out, &outcomes)?;
    let rows: Vec<SampleLosses> =
        outcomes.iter().filter_map(|(id, r)| r.as_ref().ok().map(|l| SampleLosses { id: id.clone(), losses: *l })).collect();
    if rows.is_empty() {
        bail!("every sample failed; see {}", out.join("errors.log").display());
    }
    let mean_of = |f: fn(&LossReport) -> f64| stable_mean(&rows.iter().map(|r| f(&r.losses)).collect::<Vec<_>>());
    let summary = LossSummary {
        schema: SCHEMA_VERSION,
        lambda: p.lambda,
        config: describe("losses", common, &p)?,
        mean: MeanLosses {
            illum: mean_of(|l| l.illum),
            rgb: mean_of(|l| l.rgb),
            masks: mean_of(|l| l.masks),
            total_supervised: mean_of(|l| l.total_supervised),
        },
        failed: outcomes.iter().filter(|(_, r)| r.is_err()).map(|(id, _)| id.clone()).collect(),
        samples: rows,
    };
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    io::write_file_atomically(&out.join("losses.json"), text.as_bytes())?;

    let csv_path = out.join("losses.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(["id", "illum", "rgb", "masks", "total_supervised"])?;
    for r in &summary.samples {
        let l = &r.losses;
        w.write_record([r.id.clone(), format!("{:e}", l.illum), format!("{:e}", l.rgb), format!("{:e}", l.masks), format!("{:e}", l.total_supervised)])?;
    }
    w.flush()?;
    let m = &summary.mean;
    println!("mean over {} samples: illum={:.6e} rgb={:.6e} masks={:.6e} total={:.6e}", summary.samples.len(), m.illum, m.rgb, m.masks, m.total_supervised);
    Ok(failures)
}
