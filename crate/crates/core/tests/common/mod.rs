//! Synthetic scenes shared by the integration tests.
#![allow(dead_code)]

use illumix::{apply_illumination, IlluminationMap, Illuminant, LinearImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize, lo: f64, hi: f64) -> LinearImage {
    LinearImage::new(w, h, (0..w * h * 3).map(|_| rng.random_range(lo..=hi)).collect()).unwrap()
}

pub fn random_illuminant(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Illuminant {
    Illuminant::new([rng.random_range(lo..=hi), rng.random_range(lo..=hi), rng.random_range(lo..=hi)]).unwrap()
}

/// Two unit illuminants `half_angle` degrees either side of neutral.
pub fn symmetric_pair(half_angle: f64) -> (Illuminant, Illuminant) {
    let n = 1.0 / 3f64.sqrt();
    let u = [1.0 / 2f64.sqrt(), 0.0, -1.0 / 2f64.sqrt()];
    let (s, c) = half_angle.to_radians().sin_cos();
    let a = Illuminant::new(std::array::from_fn(|i| c * n + s * u[i])).unwrap();
    let b = Illuminant::new(std::array::from_fn(|i| c * n - s * u[i])).unwrap();
    (a, b)
}

/// 16x16 tiles alternating between textured gray and textured color.
pub fn patchwork(w: usize, h: usize) -> LinearImage {
    LinearImage::from_fn(w, h, |x, y| {
        let t = ((x * 7 + y * 13) % 17) as f64 / 17.0;
        if (x / 16 + y / 16) % 2 == 0 {
            [0.25 + 0.5 * t; 3]
        } else {
            let u = ((x * 5 + y * 3) % 11) as f64 / 11.0;
            let v = ((x * 3 + y * 11) % 7) as f64 / 7.0;
            [0.2 + 0.6 * t, 0.15 + 0.5 * u, 0.1 + 0.6 * v]
        }
    })
    .unwrap()
}

/// Left half lit by `a`, right half by `b`.
pub fn halves_map(w: usize, h: usize, a: Illuminant, b: Illuminant) -> IlluminationMap {
    IlluminationMap::from_fn(w, h, |x, _| if x < w / 2 { a.rgb() } else { b.rgb() }).unwrap()
}

pub struct TwoRegionScene {
    pub canonical: LinearImage,
    pub gt: IlluminationMap,
    pub biased: LinearImage,
    pub a: Illuminant,
    pub b: Illuminant,
}

/// Gray and colored patches under two illuminants 20 degrees apart.
pub fn two_region_scene(w: usize, h: usize) -> TwoRegionScene {
    let (a, b) = symmetric_pair(10.0);
    let canonical = patchwork(w, h);
    let gt = halves_map(w, h, a, b);
    let biased = apply_illumination(&canonical, &gt).unwrap();
    TwoRegionScene { canonical, gt, biased, a, b }
}

/// Point on the probability simplex.
pub fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..n).map(|_| -rng.random_range(1e-9f64..1.0).ln()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}
