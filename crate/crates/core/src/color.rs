//! Linear-RGB rasters, illuminants, and the diagonal image-formation model.
//!
//! A color-biased image is the canonical (white-lit) image multiplied
//! pixel-wise by an illumination map, `I = W * L`. Von Kries correction
//! divides it back out. All channel data is held in `f64`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{median, norm3};

/// Floor for illuminant channels used as divisors.
pub const ILLUMINANT_EPSILON: f64 = 1e-4;

/// Common read access for three-channel rasters.
pub trait Raster {
    fn width(&self) -> usize;
    fn height(&self) -> usize;
    fn pixel(&self, index: usize) -> [f64; 3];

    /// `false` for pixels excluded from statistics.
    fn is_valid(&self, _index: usize) -> bool {
        true
    }

    fn len(&self) -> usize {
        self.width() * self.height()
    }

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn dims(&self) -> (usize, usize) {
        (self.width(), self.height())
    }
}

pub(crate) fn check_dims(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::shape(
            format!("{}x{}", a.0, a.1),
            format!("{}x{}", b.0, b.1),
        ));
    }
    Ok(())
}

fn check_data(width: usize, height: usize, data: &[f64]) -> Result<()> {
    if data.len() != width * height * 3 {
        return Err(Error::shape(
            format!("{} values ({width}x{height}x3)", width * height * 3),
            format!("{} values", data.len()),
        ));
    }
    if let Some((i, v)) = data.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
        return Err(Error::InvalidData(format!(
            "channel value {v} at index {i} is negative or not finite"
        )));
    }
    Ok(())
}

/// H×W×3 linear-RGB image with an optional validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
    mask: Option<Vec<bool>>,
}

impl LinearImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_data(width, height, &data)?;
        Ok(Self { width, height, data, mask: None })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> [f64; 3]) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn uniform(width: usize, height: usize, rgb: [f64; 3]) -> Result<Self> {
        Self::from_fn(width, height, |_, _| rgb)
    }

    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.width * self.height {
            return Err(Error::shape(
                format!("{} mask entries", self.width * self.height),
                format!("{} mask entries", mask.len()),
            ));
        }
        self.mask = Some(mask);
        Ok(self)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    pub fn valid_count(&self) -> usize {
        match &self.mask {
            Some(m) => m.iter().filter(|v| **v).count(),
            None => self.width * self.height,
        }
    }

    /// Multiply every channel by `k` (exposure change). The mask is kept.
    pub fn scaled(&self, k: f64) -> Result<Self> {
        let data = self.data.iter().map(|v| v * k).collect();
        let mut out = Self::new(self.width, self.height, data)?;
        out.mask = self.mask.clone();
        Ok(out)
    }
}

impl Raster for LinearImage {
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn pixel(&self, index: usize) -> [f64; 3] {
        let d = &self.data[index * 3..index * 3 + 3];
        [d[0], d[1], d[2]]
    }
    fn is_valid(&self, index: usize) -> bool {
        self.mask.as_ref().is_none_or(|m| m[index])
    }
}

/// RGB color of a light source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct Illuminant([f64; 3]);

impl Illuminant {
    pub fn new(rgb: [f64; 3]) -> Result<Self> {
        if rgb.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidData(format!("illuminant {rgb:?} has a negative or non-finite channel")));
        }
        if rgb.iter().all(|v| *v == 0.0) {
            return Err(Error::UndefinedDirection);
        }
        Ok(Self(rgb))
    }

    /// The neutral illuminant `(1,1,1)/√3`.
    pub fn neutral() -> Self {
        let c = 1.0 / 3f64.sqrt();
        Self([c, c, c])
    }

    pub fn rgb(&self) -> [f64; 3] {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm3(self.0)
    }

    /// Unit-L2 version of this illuminant.
    pub fn normalized(&self) -> Self {
        let n = self.norm();
        Self(self.0.map(|v| v / n))
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm() - 1.0).abs() < 1e-9
    }

    /// `(r, g)` chromaticity, `(R, G) / (R + G + B)`.
    pub fn chromaticity(&self) -> [f64; 2] {
        let s = self.0[0] + self.0[1] + self.0[2];
        [self.0[0] / s, self.0[1] / s]
    }
}

impl TryFrom<[f64; 3]> for Illuminant {
    type Error = Error;
    fn try_from(rgb: [f64; 3]) -> Result<Self> {
        Self::new(rgb)
    }
}

impl From<Illuminant> for [f64; 3] {
    fn from(i: Illuminant) -> Self {
        i.0
    }
}

/// Per-pixel illuminant colors.
#[derive(Debug, Clone, PartialEq)]
pub struct IlluminationMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl IlluminationMap {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_data(width, height, &data)?;
        if let Some(p) = data.chunks_exact(3).position(|c| c.iter().all(|v| *v == 0.0)) {
            return Err(Error::InvalidData(format!(
                "illumination map pixel ({}, {}) is all-zero",
                p % width.max(1),
                p / width.max(1)
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn uniform(width: usize, height: usize, illuminant: Illuminant) -> Self {
        let rgb = illuminant.rgb();
        let data = (0..width * height).flat_map(|_| rgb).collect();
        Self { width, height, data }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> [f64; 3]) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn illuminant(&self, index: usize) -> Illuminant {
        Illuminant(self.pixel(index))
    }

    pub fn scaled(&self, k: f64) -> Result<Self> {
        Self::new(self.width, self.height, self.data.iter().map(|v| v * k).collect())
    }
}

impl Raster for IlluminationMap {
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn pixel(&self, index: usize) -> [f64; 3] {
        let d = &self.data[index * 3..index * 3 + 3];
        [d[0], d[1], d[2]]
    }
}

/// Gamma-encoded sRGB raster with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SrgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
    /// Set when encoding had to clip linear values outside `[0, 1]`.
    pub clipped: bool,
}

/// sRGB electro-optical transfer (encoded -> linear).
pub fn srgb_eotf(v: f64) -> f64 {
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

/// Inverse of [`srgb_eotf`] (linear -> encoded).
pub fn srgb_oetf(v: f64) -> f64 {
    if v <= 0.003_130_8 {
        v * 12.92
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

pub fn srgb_to_linear(image: &SrgbImage) -> Result<LinearImage> {
    if let Some((index, &value)) = image
        .data
        .iter()
        .enumerate()
        .find(|(_, v)| !v.is_finite() || **v < 0.0 || **v > 1.0)
    {
        return Err(Error::ValueRange { index, value });
    }
    let data = image.data.iter().map(|&v| srgb_eotf(v)).collect();
    LinearImage::new(image.width, image.height, data)
}

pub fn linear_to_srgb(image: &LinearImage) -> SrgbImage {
    let mut clipped = false;
    let data = image
        .data
        .iter()
        .map(|&v| {
            if v > 1.0 {
                clipped = true;
            }
            // full scale maps to exactly 1 (the curve itself lands 1 ulp short)
            if v >= 1.0 {
                1.0
            } else {
                srgb_oetf(v.max(0.0))
            }
        })
        .collect();
    SrgbImage { width: image.width, height: image.height, data, clipped }
}

/// `I = W * L`, pixel-wise.
pub fn apply_illumination(white: &LinearImage, illum: &IlluminationMap) -> Result<LinearImage> {
    check_dims(white.dims(), illum.dims())?;
    let data = white.data.iter().zip(&illum.data).map(|(w, l)| w * l).collect();
    let mut out = LinearImage::new(white.width, white.height, data)?;
    out.mask = white.mask.clone();
    Ok(out)
}

/// Von Kries correction `W = I / L`. Invalid pixels are passed through
/// unchanged; a valid pixel whose illuminant has a channel at or below
/// [`ILLUMINANT_EPSILON`] is an error.
pub fn von_kries_correct(biased: &LinearImage, illum: &IlluminationMap) -> Result<LinearImage> {
    check_dims(biased.dims(), illum.dims())?;
    let mut data = Vec::with_capacity(biased.data.len());
    for p in 0..biased.len() {
        let b = biased.pixel(p);
        let l = illum.pixel(p);
        if !biased.is_valid(p) {
            data.extend_from_slice(&b);
            continue;
        }
        for c in 0..3 {
            if l[c] <= ILLUMINANT_EPSILON {
                return Err(Error::SingularIlluminant {
                    x: p % biased.width,
                    y: p / biased.width,
                    channel: c,
                    value: l[c],
                });
            }
            data.push(b[c] / l[c]);
        }
    }
    let mut out = LinearImage::new(biased.width, biased.height, data)?;
    out.mask = biased.mask.clone();
    Ok(out)
}

/// Recover a single normalized illuminant from a biased/corrected pair as
/// the per-channel median of `I / Ŵ` over valid pixels. Pixels with any
/// corrected channel at or below [`ILLUMINANT_EPSILON`] are skipped.
pub fn apparent_illumination(biased: &LinearImage, corrected: &LinearImage) -> Result<Illuminant> {
    check_dims(biased.dims(), corrected.dims())?;
    let mut ratios: [Vec<f64>; 3] = Default::default();
    for p in 0..biased.len() {
        if !biased.is_valid(p) || !corrected.is_valid(p) {
            continue;
        }
        let w = corrected.pixel(p);
        if w.iter().any(|v| *v <= ILLUMINANT_EPSILON) {
            continue;
        }
        let i = biased.pixel(p);
        for c in 0..3 {
            ratios[c].push(i[c] / w[c]);
        }
    }
    if ratios[0].is_empty() {
        return Err(Error::EmptyDomain("no valid pixels for apparent illumination".into()));
    }
    let rgb = [median(&ratios[0]), median(&ratios[1]), median(&ratios[2])];
    Ok(Illuminant::new(rgb)?.normalized())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn one_pixel(rgb: [f64; 3]) -> LinearImage {
        LinearImage::new(1, 1, rgb.to_vec()).unwrap()
    }

    fn one_map(rgb: [f64; 3]) -> IlluminationMap {
        IlluminationMap::new(1, 1, rgb.to_vec()).unwrap()
    }

    #[test]
    fn srgb_fixed_points_and_midpoint() {
        assert_eq!(srgb_eotf(0.0), 0.0);
        assert_eq!(srgb_eotf(1.0), 1.0);
        // ((0.5 + 0.055) / 1.055)^2.4
        let expected = (0.555f64 / 1.055).powf(2.4);
        assert_abs_diff_eq!(srgb_eotf(0.5), expected, epsilon = 1e-15);
        assert_abs_diff_eq!(srgb_eotf(0.5), 0.2140, epsilon = 5e-5);
    }

    #[test]
    fn srgb_round_trip_and_clip() {
        let xs: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
        let data = xs.iter().flat_map(|&x| [x, x, x]).collect();
        let img = SrgbImage { width: 9, height: 1, data, clipped: false };
        let lin = srgb_to_linear(&img).unwrap();
        let back = linear_to_srgb(&lin);
        assert!(!back.clipped);
        for (a, b) in back.data.iter().zip(&img.data) {
            assert!((a - b).abs() < 1e-6);
        }

        let hot = linear_to_srgb(&one_pixel([1.5, 0.0, 0.2]));
        assert!(hot.clipped);
        assert_eq!(hot.data[0], 1.0);
        assert_eq!(hot.data[1], 0.0);
    }

    #[test]
    fn srgb_rejects_out_of_range() {
        let img = SrgbImage { width: 1, height: 1, data: vec![0.2, 1.2, 0.1], clipped: false };
        assert!(matches!(srgb_to_linear(&img), Err(Error::ValueRange { index: 1, .. })));
        let img = SrgbImage { width: 1, height: 1, data: vec![0.2, f64::NAN, 0.1], clipped: false };
        assert!(matches!(srgb_to_linear(&img), Err(Error::ValueRange { .. })));
    }

    #[test]
    fn formation_examples() {
        let cases = [
            ([0.5, 0.5, 0.5], [1.0, 1.0, 1.0], [0.5, 0.5, 0.5]),
            ([1.0, 1.0, 1.0], [0.8, 0.6, 0.4], [0.8, 0.6, 0.4]),
            ([0.2, 0.4, 0.6], [0.5, 0.5, 1.0], [0.1, 0.2, 0.6]),
        ];
        for (w, l, expected) in cases {
            let out = apply_illumination(&one_pixel(w), &one_map(l)).unwrap();
            for c in 0..3 {
                assert_abs_diff_eq!(out.pixel(0)[c], expected[c], epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn von_kries_examples() {
        let out = von_kries_correct(&one_pixel([0.1, 0.2, 0.6]), &one_map([0.5, 0.5, 1.0])).unwrap();
        for (a, b) in out.pixel(0).iter().zip([0.2, 0.4, 0.6]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
        let img = one_pixel([0.3, 0.7, 0.1]);
        assert_eq!(von_kries_correct(&img, &one_map([1.0, 1.0, 1.0])).unwrap(), img);
    }

    #[test]
    fn von_kries_singular_pixel_is_located() {
        let img = LinearImage::uniform(3, 2, [0.5, 0.5, 0.5]).unwrap();
        let map = IlluminationMap::from_fn(3, 2, |x, y| if (x, y) == (2, 1) { [0.5, 5e-5, 0.5] } else { [1.0; 3] }).unwrap();
        match von_kries_correct(&img, &map) {
            Err(Error::SingularIlluminant { x: 2, y: 1, channel: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        // the same pixel masked out is fine
        let mut mask = vec![true; 6];
        mask[5] = false;
        let masked = img.with_mask(mask).unwrap();
        assert!(von_kries_correct(&masked, &map).is_ok());
    }

    #[test]
    fn shape_mismatch() {
        let img = LinearImage::uniform(2, 2, [0.5; 3]).unwrap();
        let map = IlluminationMap::uniform(2, 3, Illuminant::neutral());
        assert!(matches!(apply_illumination(&img, &map), Err(Error::Shape { .. })));
        assert!(matches!(von_kries_correct(&img, &map), Err(Error::Shape { .. })));
    }

    #[test]
    fn apparent_illumination_examples() {
        let w = LinearImage::from_fn(4, 4, |x, y| [0.1 + 0.05 * x as f64, 0.2 + 0.1 * y as f64, 0.6]).unwrap();
        let c = 1.0 / 3f64.sqrt();
        let e = apparent_illumination(&w.scaled(0.5).unwrap(), &w).unwrap();
        for v in e.rgb() {
            assert_abs_diff_eq!(v, c, epsilon = 1e-12);
        }

        let l = Illuminant::new([0.8, 0.6, 0.4]).unwrap();
        let biased = apply_illumination(&w, &IlluminationMap::uniform(4, 4, l)).unwrap();
        let e = apparent_illumination(&biased, &w).unwrap();
        for (a, b) in e.rgb().iter().zip(l.normalized().rgb()) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }

        let e = apparent_illumination(&one_pixel([0.3, 0.2, 0.1]), &one_pixel([0.6, 0.4, 0.2])).unwrap();
        for v in e.rgb() {
            assert_abs_diff_eq!(v, c, epsilon = 1e-12);
        }
    }

    #[test]
    fn apparent_illumination_skips_dark_and_masked_pixels() {
        let biased = LinearImage::new(2, 1, vec![0.3, 0.2, 0.1, 0.5, 0.5, 0.5]).unwrap();
        let corrected = LinearImage::new(2, 1, vec![0.0, 0.4, 0.2, 0.5, 0.5, 0.5]).unwrap();
        let e = apparent_illumination(&biased, &corrected).unwrap();
        assert_abs_diff_eq!(e.rgb()[0], 1.0 / 3f64.sqrt(), epsilon = 1e-12);

        let only_dark = LinearImage::new(1, 1, vec![0.0, 0.4, 0.2]).unwrap();
        assert!(matches!(
            apparent_illumination(&one_pixel([0.3, 0.2, 0.1]), &only_dark),
            Err(Error::EmptyDomain(_))
        ));
        let masked = one_pixel([0.6, 0.4, 0.2]).with_mask(vec![false]).unwrap();
        assert!(apparent_illumination(&one_pixel([0.3, 0.2, 0.1]), &masked).is_err());
    }

    #[test]
    fn invariants_enforced() {
        assert!(LinearImage::new(2, 2, vec![0.0; 11]).is_err());
        assert!(LinearImage::new(1, 1, vec![-0.1, 0.0, 0.0]).is_err());
        assert!(LinearImage::new(1, 1, vec![f64::INFINITY, 0.0, 0.0]).is_err());
        assert!(LinearImage::uniform(2, 2, [0.1; 3]).unwrap().with_mask(vec![true; 3]).is_err());
        assert!(Illuminant::new([0.0; 3]).is_err());
        assert!(IlluminationMap::new(1, 1, vec![0.0; 3]).is_err());
        assert!(Illuminant::new([3.0, 4.0, 0.0]).unwrap().normalized().is_normalized());
    }
}
