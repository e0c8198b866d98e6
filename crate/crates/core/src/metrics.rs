//! Angular error and the six-statistic summary used in color-constancy
//! benchmarks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::color::{check_dims, IlluminationMap, Illuminant, Raster};
use crate::error::{Error, Result};
use crate::numeric::{median_sorted, norm3, stable_mean};

/// Angle in degrees between two RGB vectors. Fails if either is zero.
pub fn angular_error_rgb(e: [f64; 3], e_hat: [f64; 3]) -> Result<f64> {
    let (ne, nh) = (norm3(e), norm3(e_hat));
    if ne == 0.0 || nh == 0.0 || !ne.is_finite() || !nh.is_finite() {
        return Err(Error::UndefinedDirection);
    }
    let dot = e[0] * e_hat[0] + e[1] * e_hat[1] + e[2] * e_hat[2];
    let cos = (dot / (ne * nh)).clamp(-1.0, 1.0);
    Ok(cos.acos().to_degrees())
}

/// Angle in degrees between two illuminants.
pub fn angular_error(e: &Illuminant, e_hat: &Illuminant) -> f64 {
    angular_error_rgb(e.rgb(), e_hat.rgb()).expect("illuminants are never zero")
}

/// Per-pixel angular errors between two illumination maps.
#[derive(Debug, Clone, PartialEq)]
pub struct MapError {
    pub width: usize,
    pub height: usize,
    /// `None` at pixels outside the validity mask.
    pub errors: Vec<Option<f64>>,
    pub mean: f64,
    pub median: f64,
}

impl MapError {
    pub fn valid_errors(&self) -> Vec<f64> {
        self.errors.iter().flatten().copied().collect()
    }
}

pub fn map_angular_error(
    gt: &IlluminationMap,
    pred: &IlluminationMap,
    mask: Option<&[bool]>,
) -> Result<MapError> {
    check_dims(gt.dims(), pred.dims())?;
    if let Some(m) = mask {
        if m.len() != gt.len() {
            return Err(Error::shape(format!("{} mask entries", gt.len()), format!("{} mask entries", m.len())));
        }
    }
    let errors: Vec<Option<f64>> = (0..gt.len())
        .into_par_iter()
        .map(|p| {
            if mask.is_some_and(|m| !m[p]) {
                return Ok(None);
            }
            angular_error_rgb(gt.pixel(p), pred.pixel(p)).map(Some)
        })
        .collect::<Result<_>>()?;
    let mut valid: Vec<f64> = errors.iter().flatten().copied().collect();
    if valid.is_empty() {
        return Err(Error::EmptyDomain("no valid pixels in the error map".into()));
    }
    valid.sort_by(f64::total_cmp);
    Ok(MapError {
        width: gt.width(),
        height: gt.height(),
        mean: stable_mean(&valid),
        median: median_sorted(&valid),
        errors,
    })
}

/// Summary of a set of angular errors, all in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mean: f64,
    pub median: f64,
    pub trimean: f64,
    pub best25: f64,
    pub worst25: f64,
    pub max: f64,
    pub count: usize,
}

/// Percentile by the midpoint (Hazen) rule: the i-th sorted sample sits at
/// probability `(i - 0.5) / n`, with linear interpolation between samples
/// and clamping outside `[0.5/n, 1 - 0.5/n]`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let pos = q * n as f64 - 0.5;
    if pos <= 0.0 {
        return sorted[0];
    }
    if pos >= (n - 1) as f64 {
        return sorted[n - 1];
    }
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

pub fn summarize(errors: &[f64]) -> Result<ErrorStats> {
    if errors.is_empty() {
        return Err(Error::EmptyDomain("cannot summarize an empty error list".into()));
    }
    if let Some(v) = errors.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidData(format!("non-finite angular error {v}")));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let quarter = n.div_ceil(4);
    let q1 = quantile_sorted(&sorted, 0.25);
    let q2 = median_sorted(&sorted);
    let q3 = quantile_sorted(&sorted, 0.75);
    let mean = stable_mean(&sorted);
    let best25 = stable_mean(&sorted[..quarter]);
    let worst25 = stable_mean(&sorted[n - quarter..]);
    Ok(ErrorStats {
        // guard against a last-ulp mismatch between the sums
        mean: mean.clamp(best25, worst25),
        median: q2,
        trimean: ((q1 + 2.0 * q2 + q3) / 4.0).clamp(sorted[0], sorted[n - 1]),
        best25,
        worst25,
        max: sorted[n - 1],
        count: n,
    })
}
