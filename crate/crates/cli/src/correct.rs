use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{Context, Result};
use illumix::{io, von_kries_correct};
use serde::{Deserialize, Serialize};

use crate::batch;
use crate::config::{describe, Common};

/// White-balance biased images with predicted illumination maps.
#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    /// Dataset manifest (from `augment`).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Predictions manifest (from `estimate`).
    #[arg(long)]
    predictions: Option<PathBuf>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub dataset: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
}

/// `(id, (sample dir, prediction dir))`.
pub type Paired = Vec<(String, (PathBuf, PathBuf))>;

/// Pair dataset and prediction entries by id. Ids present on one side only
/// are returned separately.
pub fn align(dataset: Vec<(String, PathBuf)>, predictions: Vec<(String, PathBuf)>) -> (Paired, Vec<String>) {
    let mut preds: BTreeMap<String, PathBuf> = predictions.into_iter().collect();
    let mut paired = Vec::new();
    let mut unmatched = Vec::new();
    for (id, dir) in dataset {
        match preds.remove(&id) {
            Some(pred) => paired.push((id, (dir, pred))),
            None => unmatched.push(id),
        }
    }
    unmatched.extend(preds.into_keys());
    unmatched.sort();
    (paired, unmatched)
}

pub fn run(common: &Common, p: Params) -> Result<usize> {
    let out = common.out()?;
    let dataset = batch::load_manifest(batch::required(&p.dataset, "dataset")?)?;
    let predictions = batch::load_manifest(batch::required(&p.predictions, "predictions")?)?;
    let (pairs, unmatched) = align(dataset, predictions);
    for id in &unmatched {
        log::warn!("{id}: present in only one of dataset and predictions, skipped");
    }
    anyhow::ensure!(!pairs.is_empty(), "dataset and predictions share no ids");
    batch::create_out(out)?;
    let outcomes = batch::run_each(&pairs, |id, (dir, pred)| {
        let (_, biased) = batch::read_biased(dir)?;
        let map = io::read_illumination_map(&pred.join("illum.pfm")).context("reading predicted map")?;
        let corrected = von_kries_correct(&biased, &map)?;
        let target = out.join(id);
        io::write_dir_atomically(&target, |d| io::write_image(&d.join(format!("corrected.{}", common.format.extension())), &corrected, common.format))?;
        Ok(id.to_string())
    });
    batch::finish(out, "corrected", describe("correct", common, &p)?, outcomes)
}
