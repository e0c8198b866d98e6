//! N-illuminant probability maps and everything computed from them.
//!
//! A [`ProbabilityMap`] assigns every pixel a convex weight vector over the
//! seed illuminants; the illumination map is the weighted sum of the seed
//! colors. This module also holds the supervised loss suite, an oracle that
//! inverts the reconstruction for a known map, a non-learned seed-diffusion
//! estimator, and the binary map file format.
//!
//! # Probability map file format
//!
//! All integers and floats are little-endian.
//!
//! | offset | size | content                                  |
//! |--------|------|------------------------------------------|
//! | 0      | 4    | magic `b"PMAP"`                          |
//! | 4      | 4    | format version, `u32` = 1                |
//! | 8      | 4    | width, `u32`                             |
//! | 12     | 4    | height, `u32`                            |
//! | 16     | 4    | illuminant count n, `u32`                |
//! | 20     | 4·w·h·n | weights, `f32`, row-major pixels with the n weights of a pixel contiguous: `(y·w + x)·n + i` |
//!
//! Nothing may follow the payload.

use std::path::Path;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::color::{check_dims, von_kries_correct, IlluminationMap, LinearImage, Raster};
use crate::error::{Error, Result};
use crate::grayness::SeedSet;
use crate::numeric::stable_mean;
use crate::simplex::SimplexLeastSquares;

/// Default weight of the supervised terms in the total objective.
pub const DEFAULT_LAMBDA: f64 = 100.0;
/// Tolerance on per-pixel weight sums.
pub const SIMPLEX_TOL: f64 = 1e-6;
/// Largest sum deviation an imported map may have and still be repaired.
pub const IMPORT_REPAIR_TOL: f64 = 1e-3;

const MAGIC: &[u8; 4] = b"PMAP";
const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

/// Per-pixel simplex weights over N illuminants, stored as `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    width: usize,
    height: usize,
    n: usize,
    data: Vec<f32>,
}

impl ProbabilityMap {
    /// Validates weights in `[0, 1]` with per-pixel sums of `1 ± 1e-6`.
    pub fn new(width: usize, height: usize, n: usize, data: Vec<f32>) -> Result<Self> {
        if n == 0 || data.len() != width * height * n {
            return Err(Error::shape(format!("{width}x{height}x{n} weights"), format!("{} weights", data.len())));
        }
        for (p, px) in data.chunks_exact(n).enumerate() {
            if let Some(message) = simplex_violation(px, SIMPLEX_TOL) {
                return Err(Error::InvalidData(format!("pixel ({}, {}): {message}", p % width, p / width)));
            }
        }
        Ok(Self { width, height, n, data })
    }

    /// Build from f64 weights, renormalizing each pixel onto the simplex.
    pub fn from_weights(width: usize, height: usize, n: usize, weights: &[f64]) -> Result<Self> {
        if n == 0 || weights.len() != width * height * n {
            return Err(Error::shape(format!("{width}x{height}x{n} weights"), format!("{} weights", weights.len())));
        }
        let mut data = Vec::with_capacity(weights.len());
        for px in weights.chunks_exact(n) {
            data.extend(normalize_pixel(px));
        }
        Self::new(width, height, n, data)
    }

    pub fn uniform(width: usize, height: usize, n: usize) -> Self {
        Self { width, height, n, data: vec![1.0 / n as f32; width * height * n] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn weights(&self, p: usize) -> &[f32] {
        &self.data[p * self.n..(p + 1) * self.n]
    }

    pub fn argmax(&self, p: usize) -> usize {
        let w = self.weights(p);
        (0..self.n).fold(0, |best, i| if w[i] > w[best] { i } else { best })
    }

    /// Channel `i` as a plane.
    pub fn plane(&self, i: usize) -> Vec<f32> {
        self.data.iter().skip(i).step_by(self.n).copied().collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.data.len() * 4);
        out.extend_from_slice(MAGIC);
        for v in [FORMAT_VERSION, self.width as u32, self.height as u32, self.n as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Parse the binary format. Pixels whose sums are off by more than
    /// `1e-6` but at most `1e-3` are renormalized with a warning; anything
    /// worse is rejected with its location. Returns the map and the number
    /// of repaired pixels.
    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<(Self, usize)> {
        let fail = |m: String| Error::format(origin, m);
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
            return Err(fail("missing PMAP header".into()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
        let (version, width, height, n) = (word(0), word(1), word(2), word(3));
        if version != FORMAT_VERSION as usize {
            return Err(fail(format!("unsupported version {version}")));
        }
        if n == 0 {
            return Err(fail("illuminant count is zero".into()));
        }
        let expected = width
            .checked_mul(height)
            .and_then(|v| v.checked_mul(n))
            .and_then(|v| v.checked_mul(4))
            .ok_or_else(|| fail("header dimensions overflow".into()))?;
        if bytes.len() - HEADER_LEN != expected {
            return Err(fail(format!("payload is {} bytes, header implies {expected}", bytes.len() - HEADER_LEN)));
        }
        let mut data: Vec<f32> = bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let mut repaired = 0;
        for (p, px) in data.chunks_exact_mut(n).enumerate() {
            let (x, y) = (p % width.max(1), p / width.max(1));
            if let Some(message) = simplex_violation(px, IMPORT_REPAIR_TOL) {
                return Err(fail(format!("pixel ({x}, {y}): {message}")));
            }
            if simplex_violation(px, SIMPLEX_TOL).is_some() {
                let fixed = normalize_pixel(&px.iter().map(|v| *v as f64).collect::<Vec<_>>());
                px.copy_from_slice(&fixed);
                repaired += 1;
            }
        }
        if repaired > 0 {
            warn!("{}: renormalized {repaired} pixel(s) onto the simplex", origin.display());
        }
        Ok((Self { width, height, n, data }, repaired))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Read and validate a probability map file.
pub fn import_probability_map(path: &Path) -> Result<ProbabilityMap> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    ProbabilityMap::from_bytes(&bytes, path).map(|(m, _)| m)
}

fn simplex_violation<T: Into<f64> + Copy>(px: &[T], tol: f64) -> Option<String> {
    let mut sum = 0.0;
    for &v in px {
        let v: f64 = v.into();
        if !v.is_finite() || v < -tol || v > 1.0 + tol {
            return Some(format!("weight {v} outside [0, 1]"));
        }
        sum += v;
    }
    ((sum - 1.0).abs() > tol).then(|| format!("weights sum to {sum}"))
}

fn normalize_pixel(px: &[f64]) -> Vec<f32> {
    let clamped: Vec<f64> = px.iter().map(|v| v.max(0.0)).collect();
    let s: f64 = clamped.iter().sum();
    if s.is_nan() || s <= 0.0 {
        return vec![1.0 / px.len() as f32; px.len()];
    }
    let mut out: Vec<f32> = clamped.iter().map(|v| (v / s) as f32).collect();
    // push f32 rounding into the largest weight
    let drift = 1.0 - out.iter().map(|v| *v as f64).sum::<f64>();
    let big = (0..out.len()).fold(0, |b, i| if out[i] > out[b] { i } else { b });
    out[big] = (out[big] as f64 + drift).clamp(0.0, 1.0) as f32;
    out
}

fn check_count(p: &ProbabilityMap, seeds: &SeedSet) -> Result<()> {
    check_dims((p.width, p.height), (seeds.width(), seeds.height()))?;
    if p.n != seeds.n_illuminants() {
        return Err(Error::shape(format!("{} illuminants", seeds.n_illuminants()), format!("{} probability channels", p.n)));
    }
    Ok(())
}

/// `L(p) = Σ_i P_i(p) · I_i`.
pub fn reconstruct_illumination(p: &ProbabilityMap, seeds: &SeedSet) -> Result<IlluminationMap> {
    check_count(p, seeds)?;
    let colors: Vec<[f64; 3]> = seeds.colors().iter().map(|c| c.rgb()).collect();
    let data: Vec<f64> = (0..p.width * p.height)
        .into_par_iter()
        .flat_map_iter(|px| {
            let w = p.weights(px);
            let mut out = [0.0; 3];
            for (wi, col) in w.iter().zip(&colors) {
                for c in 0..3 {
                    out[c] += *wi as f64 * col[c];
                }
            }
            out
        })
        .collect();
    IlluminationMap::new(p.width, p.height, data)
}

fn l1(a: [f64; 3], b: [f64; 3]) -> f64 {
    (a[0] - b[0]).abs() + (a[1] - b[1]).abs() + (a[2] - b[2]).abs()
}

/// Mean over pixels valid in both rasters of the per-pixel L1 channel
/// difference.
pub fn l1_image_distance(a: &impl Raster, b: &impl Raster) -> Result<f64> {
    check_dims(a.dims(), b.dims())?;
    let diffs: Vec<f64> = (0..a.len())
        .filter(|&p| a.is_valid(p) && b.is_valid(p))
        .map(|p| l1(a.pixel(p), b.pixel(p)))
        .collect();
    if diffs.is_empty() {
        return Err(Error::EmptyDomain("no pixel is valid in both images".into()));
    }
    Ok(stable_mean(&diffs))
}

/// Sum over illuminants of the mean L1 difference between the predicted map
/// and the seed color at that illuminant's seed pixels.
pub fn mask_loss(pred: &IlluminationMap, seeds: &SeedSet) -> Result<f64> {
    check_dims(pred.dims(), (seeds.width(), seeds.height()))?;
    let w = pred.width();
    let terms: Vec<f64> = seeds
        .illuminants()
        .iter()
        .map(|s| {
            let color = s.color.rgb();
            let d: Vec<f64> = s.points.iter().map(|&(x, y)| l1(pred.pixel(y * w + x), color)).collect();
            stable_mean(&d)
        })
        .collect();
    Ok(terms.iter().sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdversarialTerm {
    /// No discriminator is involved; the supervised total is all there is.
    Absent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub illum: f64,
    pub rgb: f64,
    pub masks: f64,
    pub total_supervised: f64,
    pub lambda: f64,
    pub adversarial: AdversarialTerm,
}

/// Supervised objective for a predicted probability map: illumination L1,
/// corrected-image L1 and seed-mask loss, weighted by `lambda`.
pub fn total_loss(
    gt_illum: &IlluminationMap,
    pred_p: &ProbabilityMap,
    biased: &LinearImage,
    gt_white: &LinearImage,
    seeds: &SeedSet,
    lambda: f64,
) -> Result<LossReport> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!("lambda {lambda} must be positive")));
    }
    let pred = reconstruct_illumination(pred_p, seeds)?;
    let illum = l1_image_distance(&pred, gt_illum)?;
    let corrected = von_kries_correct(biased, &pred)?;
    let rgb = l1_image_distance(&corrected, gt_white)?;
    let masks = mask_loss(&pred, seeds)?;
    Ok(LossReport {
        illum,
        rgb,
        masks,
        total_supervised: lambda * (illum + rgb + masks),
        lambda,
        adversarial: AdversarialTerm::Absent,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub map: ProbabilityMap,
    /// Per-pixel `‖Σ p_i I_i − L‖₂`.
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    /// Seed colors were affinely dependent; weights are a minimal-norm pick.
    pub degenerate: bool,
}

/// Invert the reconstruction: per-pixel simplex weights that best explain a
/// known illumination map with the seed colors.
pub fn oracle_probabilities(gt: &IlluminationMap, seeds: &SeedSet) -> Result<OracleResult> {
    check_dims(gt.dims(), (seeds.width(), seeds.height()))?;
    let columns: Vec<[f64; 3]> = seeds.colors().iter().map(|c| c.rgb()).collect();
    let solver = SimplexLeastSquares::new(&columns);
    if solver.is_degenerate() {
        warn!("seed colors are affinely dependent; oracle weights are not unique");
    }
    let solutions: Vec<_> = (0..gt.len()).into_par_iter().map(|p| solver.solve(gt.pixel(p))).collect();
    let weights: Vec<f64> = solutions.iter().flat_map(|s| s.weights.iter().copied()).collect();
    let residuals: Vec<f64> = solutions.iter().map(|s| s.residual).collect();
    let max_residual = residuals.iter().cloned().fold(0.0, f64::max);
    Ok(OracleResult {
        map: ProbabilityMap::from_weights(gt.width(), gt.height(), columns.len(), &weights)?,
        residuals,
        max_residual,
        degenerate: solver.is_degenerate(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionConfig {
    /// Kernel width in `(r, g)` chromaticity.
    pub sigma_chroma: f64,
    /// Spatial kernel width as a fraction of the image diagonal.
    pub sigma_spatial_fraction: f64,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        Self { sigma_chroma: 0.05, sigma_spatial_fraction: 0.25 }
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Spread seed identities over the image. Each illuminant's weight at a
/// pixel is the sum over its seeds of a chromaticity kernel times a spatial
/// kernel; weights are then normalized. Seed pixels are pinned to their own
/// illuminant.
pub fn seed_diffusion_estimate(biased: &LinearImage, seeds: &SeedSet, cfg: &DiffusionConfig) -> Result<ProbabilityMap> {
    check_dims(biased.dims(), (seeds.width(), seeds.height()))?;
    if !(cfg.sigma_chroma > 0.0 && cfg.sigma_spatial_fraction > 0.0) {
        return Err(Error::Config("diffusion kernel widths must be positive".into()));
    }
    let (w, h) = biased.dims();
    let n = seeds.n_illuminants();
    let diag = ((w * w + h * h) as f64).sqrt();
    let inv_sc = 1.0 / (2.0 * cfg.sigma_chroma.powi(2));
    let inv_ss = 1.0 / (2.0 * (cfg.sigma_spatial_fraction * diag).powi(2));
    let chroma_at = |p: usize| {
        let v = biased.pixel(p);
        let s = v[0] + v[1] + v[2];
        if s > 0.0 {
            [v[0] / s, v[1] / s]
        } else {
            [1.0 / 3.0, 1.0 / 3.0]
        }
    };
    let anchors: Vec<Vec<(f64, f64, [f64; 2])>> = seeds
        .illuminants()
        .iter()
        .map(|s| s.points.iter().map(|&(x, y)| (x as f64, y as f64, chroma_at(y * w + x))).collect())
        .collect();
    let owner = seeds.owner_map();

    let weights: Vec<f64> = (0..w * h)
        .into_par_iter()
        .flat_map_iter(|p| {
            let mut out = vec![0.0; n];
            if let Some(i) = owner[p] {
                out[i] = 1.0;
                return out;
            }
            let (x, y) = ((p % w) as f64, (p / w) as f64);
            let c = chroma_at(p);
            let logs: Vec<f64> = anchors
                .iter()
                .map(|pts| {
                    log_sum_exp(pts.iter().map(|(sx, sy, sc)| {
                        let dc = (c[0] - sc[0]).powi(2) + (c[1] - sc[1]).powi(2);
                        let ds = (x - sx).powi(2) + (y - sy).powi(2);
                        -dc * inv_sc - ds * inv_ss
                    }))
                })
                .collect();
            let z = log_sum_exp(logs.iter().copied());
            for i in 0..n {
                out[i] = (logs[i] - z).exp();
            }
            out
        })
        .collect();
    ProbabilityMap::from_weights(w, h, n, &weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::color::{apply_illumination, Illuminant};
    use crate::grayness::IlluminantSeeds;

    fn ill(rgb: [f64; 3]) -> Illuminant {
        Illuminant::new(rgb).unwrap()
    }

    fn seeds(w: usize, h: usize, colors: &[[f64; 3]]) -> SeedSet {
        // one seed per illuminant along the first row
        SeedSet::new(
            w,
            h,
            colors.iter().enumerate().map(|(i, c)| IlluminantSeeds { color: ill(*c), points: vec![(i, 0)] }).collect(),
        )
        .unwrap()
    }

    #[test]
    fn reconstruction_examples() {
        let s = seeds(4, 4, &[[1.0, 0.0, 0.0], [0.8, 0.1, 0.1]]);
        let one_hot = ProbabilityMap::from_weights(4, 4, 2, &[0.0, 1.0].repeat(16)).unwrap();
        let map = reconstruct_illumination(&one_hot, &s).unwrap();
        let c = s.colors()[1].rgb();
        for p in 0..16 {
            assert_eq!(map.pixel(p), c);
        }

        let s = seeds(2, 2, &[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        let map = reconstruct_illumination(&ProbabilityMap::uniform(2, 2, 2), &s).unwrap();
        assert_eq!(map.pixel(3), [0.5, 0.5, 0.0]);

        let cols = [[0.9, 0.3, 0.1], [0.2, 0.8, 0.3], [0.1, 0.3, 0.9], [0.5, 0.5, 0.5]];
        let s = seeds(4, 1, &cols);
        let map = reconstruct_illumination(&ProbabilityMap::uniform(4, 1, 4), &s).unwrap();
        let mean: Vec<f64> = (0..3).map(|c| s.colors().iter().map(|i| i.rgb()[c]).sum::<f64>() / 4.0).collect();
        for c in 0..3 {
            assert!((map.pixel(0)[c] - mean[c]).abs() < 1e-12);
        }

        assert!(reconstruct_illumination(&ProbabilityMap::uniform(4, 1, 3), &s).is_err());
    }

    #[test]
    fn l1_examples() {
        let a = LinearImage::uniform(3, 3, [0.2, 0.5, 0.1]).unwrap();
        assert_eq!(l1_image_distance(&a, &a).unwrap(), 0.0);
        let x = LinearImage::new(1, 1, vec![1.0, 0.0, 0.0]).unwrap();
        let y = LinearImage::new(1, 1, vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(l1_image_distance(&x, &y).unwrap(), 2.0);
        let x = LinearImage::new(2, 1, vec![0.2, 0.2, 0.2, 0.5, 0.5, 0.5]).unwrap();
        let y = LinearImage::new(2, 1, vec![0.1, 0.1, 0.1, 0.5, 0.5, 0.5]).unwrap();
        assert!((l1_image_distance(&x, &y).unwrap() - 0.15).abs() < 1e-12);
        assert!(l1_image_distance(&x, &a).is_err());
    }

    #[test]
    fn mask_loss_examples() {
        let s = SeedSet::new(4, 1, vec![IlluminantSeeds { color: ill([1.0, 0.0, 0.0]), points: vec![(0, 0)] }]).unwrap();
        let exact = IlluminationMap::uniform(4, 1, ill([1.0, 0.0, 0.0]));
        assert_eq!(mask_loss(&exact, &s).unwrap(), 0.0);
        let black_there = IlluminationMap::new(4, 1, vec![0.0, 0.0, 1e-9, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        assert!((mask_loss(&black_there, &s).unwrap() - 1.0).abs() < 1e-8);

        let more = SeedSet::new(4, 1, vec![IlluminantSeeds { color: ill([1.0, 0.0, 0.0]), points: vec![(0, 0), (1, 0)] }]).unwrap();
        assert_eq!(mask_loss(&exact, &more).unwrap(), 0.0);
        // per-mask normalization: one wrong of two points costs half
        let half = SeedSet::new(4, 1, vec![IlluminantSeeds { color: ill([1.0, 0.0, 0.0]), points: vec![(0, 0), (1, 0)] }]).unwrap();
        assert!((mask_loss(&black_there, &half).unwrap() - 0.5).abs() < 1e-8);
    }

    fn two_region_scene(w: usize, h: usize) -> (LinearImage, IlluminationMap, SeedSet, [Illuminant; 2]) {
        let a = ill([0.8, 0.5, 0.3]).normalized();
        let b = ill([0.3, 0.5, 0.8]).normalized();
        let gt = IlluminationMap::from_fn(w, h, |x, _| if x < w / 2 { a.rgb() } else { b.rgb() }).unwrap();
        let white = LinearImage::from_fn(w, h, |x, y| {
            let t = ((x * 7 + y * 3) % 11) as f64 / 11.0;
            [0.2 + 0.6 * t, 0.7 - 0.4 * t, 0.4]
        })
        .unwrap();
        let s = SeedSet::new(w, h, vec![
            IlluminantSeeds { color: a, points: vec![(0, 0), (1, 3)] },
            IlluminantSeeds { color: b, points: vec![(w - 1, 2), (w - 2, h - 1)] },
        ])
        .unwrap();
        (white, gt, s, [a, b])
    }

    #[test]
    fn total_loss_examples() {
        let (white, gt, s, [a, b]) = two_region_scene(12, 8);
        let biased = apply_illumination(&white, &gt).unwrap();
        let oracle = oracle_probabilities(&gt, &s).unwrap();
        let r = total_loss(&gt, &oracle.map, &biased, &white, &s, DEFAULT_LAMBDA).unwrap();
        assert!(r.illum < 1e-9 && r.rgb < 1e-9 && r.masks < 1e-9, "{r:?}");
        assert_eq!(r.adversarial, AdversarialTerm::Absent);

        let uni = ProbabilityMap::uniform(12, 8, 2);
        let r100 = total_loss(&gt, &uni, &biased, &white, &s, 100.0).unwrap();
        assert_eq!(r100.total_supervised, 100.0 * (r100.illum + r100.rgb + r100.masks));
        let r50 = total_loss(&gt, &uni, &biased, &white, &s, 50.0).unwrap();
        assert_eq!(r50.total_supervised * 2.0, r100.total_supervised);

        // every pixel sits at half the L1 gap between the two colors
        let closed: f64 = (0..3).map(|c| (a.rgb()[c] - b.rgb()[c]).abs()).sum::<f64>() / 2.0;
        assert!((r100.illum - closed).abs() < 1e-6);
        assert!((r100.masks - 2.0 * closed).abs() < 1e-6);
        assert!(total_loss(&gt, &uni, &biased, &white, &s, 0.0).is_err());
    }

    #[test]
    fn oracle_examples() {
        let cols = [[0.9, 0.3, 0.1], [0.2, 0.8, 0.3], [0.1, 0.3, 0.9]];
        let s = seeds(3, 1, &cols);
        let c: Vec<[f64; 3]> = s.colors().iter().map(|i| i.rgb()).collect();
        let mid = [0.5 * (c[0][0] + c[1][0]), 0.5 * (c[0][1] + c[1][1]), 0.5 * (c[0][2] + c[1][2])];
        let gt = IlluminationMap::new(3, 1, [c[1], mid, c[2]].concat()).unwrap();
        let r = oracle_probabilities(&gt, &s).unwrap();
        assert!(!r.degenerate);
        assert_eq!(r.map.argmax(0), 1);
        assert!((r.map.weights(0)[1] - 1.0).abs() < 1e-6);
        assert!((r.map.weights(1)[0] - 0.5).abs() < 1e-6 && (r.map.weights(1)[1] - 0.5).abs() < 1e-6);
        assert!(r.max_residual < 1e-9);
    }

    #[test]
    fn oracle_flags_degenerate_colors() {
        let s = SeedSet::new(2, 1, vec![
            IlluminantSeeds { color: ill([1.0, 1.0, 1.0]), points: vec![(0, 0)] },
            IlluminantSeeds { color: ill([2.0, 2.0, 2.0]), points: vec![(1, 0)] },
        ])
        .unwrap();
        let gt = IlluminationMap::uniform(2, 1, Illuminant::neutral());
        let r = oracle_probabilities(&gt, &s).unwrap();
        assert!(r.degenerate);
        assert!(r.max_residual < 1e-9);
    }

    #[test]
    fn diffusion_contracts() {
        let (white, gt, s, _) = two_region_scene(12, 8);
        let biased = apply_illumination(&white, &gt).unwrap();
        let p = seed_diffusion_estimate(&biased, &s, &DiffusionConfig::default()).unwrap();
        for (i, ill) in s.illuminants().iter().enumerate() {
            for &(x, y) in &ill.points {
                assert_eq!(p.argmax(y * 12 + x), i);
            }
        }
        for px in 0..96 {
            let sum: f64 = p.weights(px).iter().map(|v| *v as f64).sum();
            assert!((sum - 1.0).abs() <= SIMPLEX_TOL);
        }

        let single = SeedSet::new(12, 8, vec![IlluminantSeeds { color: ill([1.0, 0.5, 0.2]), points: vec![(3, 3)] }]).unwrap();
        let p = seed_diffusion_estimate(&biased, &single, &DiffusionConfig::default()).unwrap();
        assert!(p.data().iter().all(|v| *v == 1.0));
    }

    #[test]
    fn file_format_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pmap");
        let m = ProbabilityMap::from_weights(3, 2, 2, &[0.25, 0.75, 1.0, 0.0, 0.5, 0.5, 0.1, 0.9, 0.3, 0.7, 0.0, 1.0]).unwrap();
        m.write(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"PMAP");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
        assert_eq!(bytes.len(), 20 + 12 * 4);
        assert_eq!(import_probability_map(&path).unwrap(), m);

        let mut bad = m.to_bytes();
        bad[HEADER_LEN..HEADER_LEN + 4].copy_from_slice(&1.0f32.to_le_bytes()); // pixel 0 sums to 1.75
        let err = ProbabilityMap::from_bytes(&bad, &path).unwrap_err();
        assert!(err.to_string().contains("pixel (0, 0)"), "{err}");

        let mut near = m.to_bytes();
        near[HEADER_LEN..HEADER_LEN + 4].copy_from_slice(&0.2505f32.to_le_bytes());
        let (fixed, repaired) = ProbabilityMap::from_bytes(&near, &path).unwrap();
        assert_eq!(repaired, 1);
        let sum: f64 = fixed.weights(0).iter().map(|v| *v as f64).sum();
        assert!((sum - 1.0).abs() < 1e-7);

        assert!(ProbabilityMap::from_bytes(&bytes[..bytes.len() - 1], &path).is_err());
        assert!(ProbabilityMap::from_bytes(b"NOPE", &path).is_err());
    }
}
