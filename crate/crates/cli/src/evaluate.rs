use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use illumix::dataset::{Manifest, StoredSample};
use illumix::metrics::angular_error;
use illumix::report::{write_csv, EvaluationReport, ImageErrors, Protocol};
use illumix::{apparent_illumination, dataset, io, map_angular_error, summarize, von_kries_correct, IlluminationMap, LinearImage, Raster};
use serde::{Deserialize, Serialize};

use crate::batch;
use crate::config::{describe, Common};
use crate::correct::align;
use crate::estimate::EstimateRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Which {
    Single,
    Map,
    Both,
}

impl Which {
    fn protocols(self) -> &'static [Protocol] {
        match self {
            Which::Single => &[Protocol::SingleIlluminant],
            Which::Map => &[Protocol::IlluminationMap],
            Which::Both => &[Protocol::SingleIlluminant, Protocol::IlluminationMap],
        }
    }
}

/// Score predictions against ground truth.
#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    /// Dataset manifest (ground truth).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Predictions manifest (from `estimate`).
    #[arg(long)]
    predictions: Option<PathBuf>,
    #[arg(long, value_enum)]
    protocol: Option<Which>,
    /// Estimator name for the report; read from the predictions run if unset.
    #[arg(long)]
    label: Option<String>,
    /// Also write gamma-encoded PNGs of the maps and corrected images.
    #[arg(long)]
    visualize: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub dataset: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub protocol: Which,
    pub label: Option<String>,
    pub visualize: bool,
}

impl Default for Params {
    fn default() -> Self {
        Self { dataset: None, predictions: None, protocol: Which::Both, label: None, visualize: false }
    }
}

/// Per-image result: one entry per requested protocol.
type Scores = Vec<ImageErrors>;

fn single_illuminant(id: &str, gt: &StoredSample, pred_dir: &Path, pred: &IlluminationMap) -> Result<ImageErrors> {
    let reference = apparent_illumination(&gt.biased, &gt.corrected)?;
    let record = pred_dir.join("estimate.json");
    let global = if record.exists() { io::read_json::<EstimateRecord>(&record)?.illuminant } else { None };
    let estimate = match global {
        Some(e) => e,
        None => apparent_illumination(&gt.biased, &von_kries_correct(&gt.biased, pred)?)?,
    };
    Ok(ImageErrors { id: id.into(), stats: summarize(&[angular_error(&reference, &estimate)])? })
}

fn illumination_map(id: &str, gt: &StoredSample, pred: &IlluminationMap) -> Result<ImageErrors> {
    let errors = map_angular_error(&gt.illum_map, pred, gt.biased.mask())?;
    Ok(ImageErrors { id: id.into(), stats: summarize(&errors.valid_errors())? })
}

/// Map scaled so its largest channel value is 1, for viewing.
fn map_preview(map: &IlluminationMap) -> Result<LinearImage> {
    let peak = map.data().iter().cloned().fold(0.0, f64::max);
    Ok(LinearImage::new(map.width(), map.height(), map.data().iter().map(|v| v / peak).collect())?)
}

fn visualize(dir: &Path, id: &str, gt: &StoredSample, pred: &IlluminationMap) -> Result<()> {
    io::write_png8(&dir.join(format!("{id}_gt_map.png")), &map_preview(&gt.illum_map)?)?;
    io::write_png8(&dir.join(format!("{id}_pred_map.png")), &map_preview(pred)?)?;
    io::write_png8(&dir.join(format!("{id}_biased.png")), &gt.biased)?;
    io::write_png8(&dir.join(format!("{id}_corrected.png")), &von_kries_correct(&gt.biased, pred)?)?;
    Ok(())
}

fn estimator_label(p: &Params, predictions: &Path) -> Result<String> {
    if let Some(l) = &p.label {
        return Ok(l.clone());
    }
    let m = Manifest::read(predictions)?;
    Ok(m.config.pointer("/params/estimator").and_then(|v| v.as_str()).unwrap_or("unknown").to_string())
}

pub fn run(common: &Common, p: Params) -> Result<usize> {
    let out = common.out()?;
    let predictions_path = batch::required(&p.predictions, "predictions")?;
    let dataset = batch::load_manifest(batch::required(&p.dataset, "dataset")?)?;
    let predictions = batch::load_manifest(predictions_path)?;
    let (pairs, excluded) = align(dataset, predictions);
    for id in &excluded {
        log::warn!("{id}: present in only one of dataset and predictions, excluded");
    }
    if pairs.is_empty() {
        bail!("dataset and predictions share no ids");
    }
    let label = estimator_label(&p, predictions_path)?;
    batch::create_out(out)?;
    let vis_dir = out.join("vis");
    if p.visualize {
        batch::create_out(&vis_dir)?;
    }

    let protocols = p.protocol.protocols();
    let outcomes = batch::run_each(&pairs, |id, (dir, pred_dir)| -> Result<Scores> {
        let gt = dataset::read_sample(dir)?;
        let pred = io::read_illumination_map(&pred_dir.join("illum.pfm")).context("reading predicted map")?;
        if p.visualize {
            visualize(&vis_dir, id, &gt, &pred)?;
        }
        protocols
            .iter()
            .map(|proto| match proto {
                Protocol::SingleIlluminant => single_illuminant(id, &gt, pred_dir, &pred),
                Protocol::IlluminationMap => illumination_map(id, &gt, &pred),
            })
            .collect()
    });
    let failures = batch::write_error_log(out, &outcomes)?;
    let scored: Vec<&Scores> = outcomes.iter().filter_map(|(_, r)| r.as_ref().ok()).collect();
    if scored.is_empty() {
        bail!("every sample failed; see {}", out.join("errors.log").display());
    }
    let mut excluded_ids = excluded;
    excluded_ids.extend(outcomes.iter().filter(|(_, r)| r.is_err()).map(|(id, _)| id.clone()));
    excluded_ids.sort();

    let config = describe("evaluate", common, &p)?;
    for (i, proto) in protocols.iter().enumerate() {
        let rows: Vec<ImageErrors> = scored.iter().map(|s| s[i].clone()).collect();
        let mut report = EvaluationReport::from_images(*proto, &label, &rows)?;
        report.excluded_ids = excluded_ids.clone();
        report.config = config.clone();
        write_csv(&out.join(format!("errors_{}.csv", proto.as_str())), &rows)?;
        let mut text = serde_json::to_string_pretty(&report)?;
        text.push('\n');
        io::write_file_atomically(&out.join(format!("report_{}.json", proto.as_str())), text.as_bytes())?;
        let s = &report.stats;
        println!(
            "{:<18} {:<20} n={:<5} mean={:.3} median={:.3} trimean={:.3} best25={:.3} worst25={:.3} max={:.3}",
            proto.as_str(),
            label,
            s.count,
            s.mean,
            s.median,
            s.trimean,
            s.best25,
            s.worst25,
            s.max
        );
    }
    Ok(failures)
}
