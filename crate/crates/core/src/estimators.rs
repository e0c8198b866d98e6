//! Learning-free single-illuminant baselines.
//!
//! Grey-World, White-Patch, Shades-of-Grey, general Grey-World and the
//! Grey-Edge variants are all instances of one framework: the illuminant
//! is proportional to the per-channel Minkowski-p norm of the order-k
//! Gaussian derivative magnitude of the image.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::color::{IlluminationMap, Illuminant, LinearImage, Raster};
use crate::error::{Error, Result};
use crate::numeric::{convolve_separable, gaussian_kernel, stable_sum};

/// Default saturation threshold as a fraction of full scale (1.0).
pub const DEFAULT_SATURATION: f64 = 0.98;

/// Minkowski exponent; serialized as a number or the string `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MinkowskiRepr", into = "MinkowskiRepr")]
pub enum Minkowski {
    Finite(f64),
    Infinity,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum MinkowskiRepr {
    Number(f64),
    Text(String),
}

impl TryFrom<MinkowskiRepr> for Minkowski {
    type Error = String;
    fn try_from(r: MinkowskiRepr) -> Result<Self, String> {
        match r {
            MinkowskiRepr::Number(p) => Ok(Minkowski::Finite(p)),
            MinkowskiRepr::Text(t) => t.parse(),
        }
    }
}

impl From<Minkowski> for MinkowskiRepr {
    fn from(m: Minkowski) -> Self {
        match m {
            Minkowski::Finite(p) => MinkowskiRepr::Number(p),
            Minkowski::Infinity => MinkowskiRepr::Text("inf".into()),
        }
    }
}

impl std::str::FromStr for Minkowski {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "max" => Ok(Minkowski::Infinity),
            other => other
                .parse::<f64>()
                .map(Minkowski::Finite)
                .map_err(|_| format!("invalid Minkowski exponent {s:?}")),
        }
    }
}

impl fmt::Display for Minkowski {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Minkowski::Finite(p) => write!(f, "{p}"),
            Minkowski::Infinity => f.write_str("inf"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub minkowski_p: Minkowski,
    pub derivative_order: u8,
    pub smoothing_sigma: f64,
    /// Pixels with any channel at or above this fraction of full scale are
    /// treated as clipped and ignored. `1.0` disables the test.
    pub saturation_threshold: f64,
}

impl EstimatorConfig {
    pub fn grey_world() -> Self {
        Self {
            minkowski_p: Minkowski::Finite(1.0),
            derivative_order: 0,
            smoothing_sigma: 0.0,
            saturation_threshold: DEFAULT_SATURATION,
        }
    }

    pub fn white_patch() -> Self {
        Self { minkowski_p: Minkowski::Infinity, ..Self::grey_world() }
    }

    pub fn shades_of_grey() -> Self {
        Self { minkowski_p: Minkowski::Finite(4.0), ..Self::grey_world() }
    }

    pub fn general_grey_world() -> Self {
        Self { minkowski_p: Minkowski::Finite(4.0), smoothing_sigma: 1.0, ..Self::grey_world() }
    }

    pub fn grey_edge(order: u8) -> Self {
        Self {
            minkowski_p: Minkowski::Finite(5.0),
            derivative_order: order,
            smoothing_sigma: 1.0,
            saturation_threshold: DEFAULT_SATURATION,
        }
    }

    /// Look up a preset by its command-line name.
    pub fn by_name(name: &str) -> Option<Self> {
        Some(match name {
            "grey-world" => Self::grey_world(),
            "white-patch" => Self::white_patch(),
            "shades-of-grey" => Self::shades_of_grey(),
            "general-grey-world" => Self::general_grey_world(),
            "grey-edge-1" => Self::grey_edge(1),
            "grey-edge-2" => Self::grey_edge(2),
            _ => return None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.derivative_order > 2 {
            return Err(Error::Config(format!("derivative order {} not in 0..=2", self.derivative_order)));
        }
        if let Minkowski::Finite(p) = self.minkowski_p {
            if !(p >= 1.0 && p.is_finite()) {
                return Err(Error::Config(format!("Minkowski p = {p} must be >= 1")));
            }
        }
        if !(self.smoothing_sigma >= 0.0 && self.smoothing_sigma.is_finite()) {
            return Err(Error::Config(format!("smoothing sigma {} must be >= 0", self.smoothing_sigma)));
        }
        if self.derivative_order > 0 && self.smoothing_sigma == 0.0 {
            return Err(Error::Config("derivative estimators need a positive smoothing sigma".into()));
        }
        if !(self.saturation_threshold > 0.0 && self.saturation_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "saturation threshold {} not in (0, 1]",
                self.saturation_threshold
            )));
        }
        Ok(())
    }
}

pub const ESTIMATOR_NAMES: &[&str] = &[
    "grey-world",
    "white-patch",
    "shades-of-grey",
    "general-grey-world",
    "grey-edge-1",
    "grey-edge-2",
];

/// Pixels usable for estimation: valid and below the saturation level,
/// eroded by the filter support when any smoothing is applied.
fn usable_pixels(img: &LinearImage, cfg: &EstimatorConfig) -> Vec<bool> {
    let (w, h) = img.dims();
    // a threshold of 1.0 (full scale) turns the clipping test off
    let level = cfg.saturation_threshold;
    let unclipped = |v: &f64| level >= 1.0 || *v < level;
    let base: Vec<bool> = (0..img.len())
        .map(|p| img.is_valid(p) && img.pixel(p).iter().all(unclipped))
        .collect();
    if cfg.smoothing_sigma == 0.0 {
        return base;
    }
    let r = (4.0 * cfg.smoothing_sigma).ceil().max(1.0) as i64;
    // separable erosion: a pixel survives if its (2r+1)^2 window is clean
    let mut rows = vec![true; base.len()];
    for y in 0..h {
        for x in 0..w {
            let lo = (x as i64 - r).max(0) as usize;
            let hi = ((x as i64 + r) as usize).min(w - 1);
            rows[y * w + x] = (lo..=hi).all(|xi| base[y * w + xi]);
        }
    }
    let mut out = vec![true; base.len()];
    for y in 0..h {
        for x in 0..w {
            let lo = (y as i64 - r).max(0) as usize;
            let hi = ((y as i64 + r) as usize).min(h - 1);
            out[y * w + x] = (lo..=hi).all(|yi| rows[yi * w + x]);
        }
    }
    out
}

/// Per-channel response planes: raw, smoothed, or derivative magnitude.
fn response_planes(img: &LinearImage, cfg: &EstimatorConfig) -> [Vec<f64>; 3] {
    let (w, h) = img.dims();
    let plane = |c: usize| -> Vec<f64> { img.data().iter().skip(c).step_by(3).copied().collect() };
    let sigma = cfg.smoothing_sigma;
    std::array::from_fn(|c| {
        let raw = plane(c);
        if sigma == 0.0 {
            return raw;
        }
        let g0 = gaussian_kernel(sigma, 0);
        match cfg.derivative_order {
            0 => convolve_separable(&raw, w, h, &g0, &g0),
            1 => {
                let g1 = gaussian_kernel(sigma, 1);
                let dx = convolve_separable(&raw, w, h, &g1, &g0);
                let dy = convolve_separable(&raw, w, h, &g0, &g1);
                dx.iter().zip(&dy).map(|(a, b)| (a * a + b * b).sqrt()).collect()
            }
            _ => {
                let g1 = gaussian_kernel(sigma, 1);
                let g2 = gaussian_kernel(sigma, 2);
                let dxx = convolve_separable(&raw, w, h, &g2, &g0);
                let dyy = convolve_separable(&raw, w, h, &g0, &g2);
                let dxy = convolve_separable(&raw, w, h, &g1, &g1);
                (0..raw.len())
                    .map(|i| (dxx[i] * dxx[i] + dyy[i] * dyy[i] + 4.0 * dxy[i] * dxy[i]).sqrt())
                    .collect()
            }
        }
    })
}

/// Minkowski-norm illuminant estimate; covers Grey-World (p=1, order 0),
/// Shades-of-Grey, general Grey-World and first/second-order Grey-Edge.
pub fn grey_world_family(img: &LinearImage, cfg: &EstimatorConfig) -> Result<Illuminant> {
    cfg.validate()?;
    let usable = usable_pixels(img, cfg);
    let count = usable.iter().filter(|v| **v).count();
    if count == 0 {
        return Err(Error::EmptyDomain("every pixel is masked or saturated".into()));
    }
    let planes = response_planes(img, cfg);
    let mut rgb = [0.0; 3];
    for c in 0..3 {
        let values = planes[c].iter().zip(&usable).filter(|(_, u)| **u).map(|(v, _)| v.abs());
        rgb[c] = match cfg.minkowski_p {
            Minkowski::Infinity => values.fold(0.0, f64::max),
            Minkowski::Finite(1.0) => stable_sum(&values.collect::<Vec<_>>()) / count as f64,
            Minkowski::Finite(p) => {
                // scale by the channel max so large p does not overflow
                let v: Vec<f64> = values.collect();
                let m = v.iter().cloned().fold(0.0, f64::max);
                if m == 0.0 {
                    0.0
                } else {
                    let powered: Vec<f64> = v.iter().map(|x| (x / m).powf(p)).collect();
                    m * (stable_sum(&powered) / count as f64).powf(1.0 / p)
                }
            }
        };
    }
    Illuminant::new(rgb).map(|i| i.normalized()).map_err(|_| {
        Error::EmptyDomain("estimator response is zero in every channel".into())
    })
}

/// Per-channel maximum over usable pixels.
pub fn white_patch(img: &LinearImage, cfg: &EstimatorConfig) -> Result<Illuminant> {
    grey_world_family(img, &EstimatorConfig { minkowski_p: Minkowski::Infinity, ..*cfg })
}

/// The no-op baseline: a neutral illuminant everywhere.
pub fn doing_nothing(img: &LinearImage) -> IlluminationMap {
    IlluminationMap::uniform(img.width(), img.height(), Illuminant::neutral())
}
