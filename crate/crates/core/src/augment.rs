//! Multi-illuminant relighting of single-illuminant images.
//!
//! A canonical image is split into regions (a [`SegmentMap`]), every region
//! gets a channel-shuffled illuminant drawn from a pool, region indicators
//! are Gaussian-feathered into a partition of unity, and the resulting
//! illumination map is multiplied into the image. Seeds are drawn from the
//! hard label map.

use rand::seq::index;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::color::{apply_illumination, check_dims, IlluminationMap, Illuminant, LinearImage, Raster};
use crate::error::{Error, Result};
use crate::grayness::{IlluminantSeeds, SeedSet};
use crate::numeric::{convolve_separable, gaussian_kernel, median};

/// Default feathering width in pixels.
pub const DEFAULT_FEATHER_SIGMA: f64 = 8.0;
/// Default seeds per illuminant.
pub const DEFAULT_SEEDS_PER_ILLUMINANT: usize = 16;

/// Per-pixel region label in `[0, n)`; every label is used.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentMap {
    width: usize,
    height: usize,
    n: usize,
    labels: Vec<usize>,
}

impl SegmentMap {
    /// The label count is inferred as `max(label) + 1`.
    pub fn new(width: usize, height: usize, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != width * height || labels.is_empty() {
            return Err(Error::shape(format!("{} labels", width * height), format!("{} labels", labels.len())));
        }
        let n = labels.iter().max().unwrap() + 1;
        let mut seen = vec![false; n];
        labels.iter().for_each(|&l| seen[l] = true);
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidData(format!("segment label {missing} of {n} is unused")));
        }
        Ok(Self { width, height, n, labels })
    }

    /// Voronoi partition around `n` distinct random sites.
    pub fn voronoi(width: usize, height: usize, n: usize, rng_seed: u64) -> Result<Self> {
        if n == 0 || n > width * height {
            return Err(Error::Config(format!("cannot place {n} Voronoi cells in {width}x{height}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let sites: Vec<(f64, f64)> = index::sample(&mut rng, width * height, n)
            .into_iter()
            .map(|p| ((p % width) as f64, (p / width) as f64))
            .collect();
        let labels = (0..width * height)
            .map(|p| {
                let (x, y) = ((p % width) as f64, (p / width) as f64);
                let mut best = (f64::INFINITY, 0);
                for (i, (sx, sy)) in sites.iter().enumerate() {
                    let d = (x - sx).powi(2) + (y - sy).powi(2);
                    if d < best.0 {
                        best = (d, i);
                    }
                }
                best.1
            })
            .collect();
        Self::new(width, height, labels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn label(&self, index: usize) -> usize {
        self.labels[index]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Pixel indices of each region, ascending.
    pub fn regions(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n];
        for (p, &l) in self.labels.iter().enumerate() {
            out[l].push(p);
        }
        out
    }
}

/// The six channel orders, indexed as drawn by [`shuffle_illuminant`].
pub const PERMUTATIONS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

pub fn permute(base: &Illuminant, perm: [usize; 3]) -> Illuminant {
    let rgb = base.rgb();
    Illuminant::new([rgb[perm[0]], rgb[perm[1]], rgb[perm[2]]]).expect("permutation keeps a valid illuminant valid")
}

/// Uniformly chosen channel permutation of `base`, deterministic per seed.
pub fn shuffle_illuminant(base: &Illuminant, rng_seed: u64) -> Illuminant {
    permute(base, PERMUTATIONS[permutation_index(rng_seed)])
}

fn permutation_index(rng_seed: u64) -> usize {
    ChaCha8Rng::seed_from_u64(rng_seed).random_range(0..PERMUTATIONS.len())
}

/// Per-pixel convex weights over `n` illuminants.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureWeights {
    pub width: usize,
    pub height: usize,
    pub n: usize,
    /// Pixel-interleaved: `data[p * n + i]`.
    pub data: Vec<f64>,
}

impl MixtureWeights {
    pub fn weights(&self, p: usize) -> &[f64] {
        &self.data[p * self.n..(p + 1) * self.n]
    }
}

/// Blend region colors with Gaussian-feathered region indicators.
/// `feather_sigma = 0` gives hard boundaries.
pub fn build_illumination_map(
    segments: &SegmentMap,
    colors: &[Illuminant],
    feather_sigma: f64,
) -> Result<(IlluminationMap, MixtureWeights)> {
    let n = segments.n();
    if colors.len() != n {
        return Err(Error::Config(format!("{} colors for {n} segments", colors.len())));
    }
    if !(feather_sigma >= 0.0 && feather_sigma.is_finite()) {
        return Err(Error::Config(format!("feather sigma {feather_sigma} must be >= 0")));
    }
    let (w, h) = (segments.width, segments.height);
    let len = w * h;
    let mut data = vec![0.0; len * n];
    if feather_sigma == 0.0 {
        for (p, &l) in segments.labels.iter().enumerate() {
            data[p * n + l] = 1.0;
        }
    } else {
        let k = gaussian_kernel(feather_sigma, 0);
        for i in 0..n {
            let indicator: Vec<f64> = segments.labels.iter().map(|&l| (l == i) as u8 as f64).collect();
            let blurred = convolve_separable(&indicator, w, h, &k, &k);
            for (p, v) in blurred.into_iter().enumerate() {
                data[p * n + i] = v.max(0.0);
            }
        }
        for px in data.chunks_exact_mut(n) {
            let s: f64 = px.iter().sum();
            px.iter_mut().for_each(|v| *v /= s);
        }
    }
    let rgb: Vec<[f64; 3]> = colors.iter().map(|c| c.rgb()).collect();
    let mut map = Vec::with_capacity(len * 3);
    for px in data.chunks_exact(n) {
        for c in 0..3 {
            map.push(px.iter().zip(&rgb).map(|(wt, col)| wt * col[c]).sum::<f64>());
        }
    }
    Ok((IlluminationMap::new(w, h, map)?, MixtureWeights { width: w, height: h, n, data }))
}

/// Named illuminant in an augmentation pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub id: String,
    pub rgb: Illuminant,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PoolItem {
    Bare(Illuminant),
    Named(PoolEntry),
}

/// Parse a pool from JSON: either a list of `[r, g, b]` triples (ids are
/// list positions) or a list of `{"id": .., "rgb": [..]}` objects. Colors
/// are normalized.
pub fn parse_pool(json: &str) -> Result<Vec<PoolEntry>> {
    let items: Vec<PoolItem> = serde_json::from_str(json)?;
    if items.is_empty() {
        return Err(Error::Config("illuminant pool is empty".into()));
    }
    Ok(items
        .into_iter()
        .enumerate()
        .map(|(i, item)| match item {
            PoolItem::Bare(rgb) => PoolEntry { id: i.to_string(), rgb: rgb.normalized() },
            PoolItem::Named(e) => PoolEntry { id: e.id, rgb: e.rgb.normalized() },
        })
        .collect())
}

/// Extract one normalized illuminant per segment from a ground-truth map
/// (per-channel median over the segment).
pub fn pool_from_gt_map(gt: &IlluminationMap, segments: &SegmentMap) -> Result<Vec<Illuminant>> {
    check_dims(gt.dims(), (segments.width, segments.height))?;
    segments
        .regions()
        .iter()
        .map(|px| {
            let rgb = std::array::from_fn(|c| median(&px.iter().map(|&p| gt.pixel(p)[c]).collect::<Vec<_>>()));
            Ok(Illuminant::new(rgb)?.normalized())
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub n: usize,
    pub k: usize,
    pub feather_sigma: f64,
    pub rng_seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { n: 4, k: DEFAULT_SEEDS_PER_ILLUMINANT, feather_sigma: DEFAULT_FEATHER_SIGMA, rng_seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source_id: String,
    pub rng_seed: u64,
    pub pool_ids: Vec<String>,
    /// Channel order applied to each drawn pool illuminant.
    pub permutations: Vec<[usize; 3]>,
    pub feather_sigma: f64,
    pub k: usize,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSample {
    pub biased: LinearImage,
    pub corrected: LinearImage,
    pub illum_map: IlluminationMap,
    pub weights: MixtureWeights,
    pub illuminant_colors: Vec<Illuminant>,
    /// Seed masks are `seeds.mask(i)`; seed colors equal `illuminant_colors`.
    pub seeds: SeedSet,
    pub provenance: Provenance,
}

impl AugmentedSample {
    /// N color images, N seed masks, the biased and the corrected image.
    pub fn artifact_count(&self) -> usize {
        self.illuminant_colors.len() * 2 + 2
    }

    pub fn seed_masks(&self) -> Vec<Vec<bool>> {
        (0..self.seeds.n_illuminants()).map(|i| self.seeds.mask(i)).collect()
    }
}

/// Relight `corrected` with `cfg.n` shuffled pool illuminants over
/// `segments` and sample `cfg.k` seeds per region.
pub fn augment(
    source_id: &str,
    corrected: &LinearImage,
    segments: &SegmentMap,
    pool: &[PoolEntry],
    cfg: &AugmentConfig,
) -> Result<AugmentedSample> {
    check_dims(corrected.dims(), (segments.width, segments.height))?;
    if segments.n() != cfg.n {
        return Err(Error::Config(format!("segment map has {} labels, expected {}", segments.n(), cfg.n)));
    }
    if pool.is_empty() {
        return Err(Error::Config("illuminant pool is empty".into()));
    }
    if cfg.k == 0 {
        return Err(Error::Config("at least one seed per illuminant is required".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let drawn: Vec<usize> = if pool.len() >= cfg.n {
        index::sample(&mut rng, pool.len(), cfg.n).into_vec()
    } else {
        (0..cfg.n).map(|_| rng.random_range(0..pool.len())).collect()
    };
    let permutations: Vec<[usize; 3]> = drawn.iter().map(|_| PERMUTATIONS[permutation_index(rng.next_u64())]).collect();
    let colors: Vec<Illuminant> = drawn
        .iter()
        .zip(&permutations)
        .map(|(&i, &perm)| permute(&pool[i].rgb, perm).normalized())
        .collect();

    let (illum_map, weights) = build_illumination_map(segments, &colors, cfg.feather_sigma)?;
    let biased = apply_illumination(corrected, &illum_map)?;
    let points = sample_pure_points(segments, &weights, cfg.k, &mut rng)?;
    let seeds = SeedSet::new(
        segments.width,
        segments.height,
        colors.iter().zip(points).map(|(&color, points)| IlluminantSeeds { color, points }).collect(),
    )?;

    Ok(AugmentedSample {
        biased,
        corrected: corrected.clone(),
        illum_map,
        weights,
        illuminant_colors: colors,
        seeds,
        provenance: Provenance {
            source_id: source_id.to_string(),
            rng_seed: cfg.rng_seed,
            pool_ids: drawn.iter().map(|&i| pool[i].id.clone()).collect(),
            permutations,
            feather_sigma: cfg.feather_sigma,
            k: cfg.k,
            n: cfg.n,
        },
    })
}

/// Pure-weight threshold for seed candidates.
const PURE_WEIGHT: f64 = 1.0 - 1e-9;

/// `k` seeds per region, drawn where the region's own illuminant is pure so
/// the ground-truth map equals the seed color there. Regions with fewer than
/// `k` pure pixels fall back to their `k` highest-weight pixels.
fn sample_pure_points(
    segments: &SegmentMap,
    weights: &MixtureWeights,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<(usize, usize)>>> {
    let w = segments.width;
    segments
        .regions()
        .into_iter()
        .enumerate()
        .map(|(label, pixels)| {
            if pixels.len() < k {
                return Err(Error::InsufficientRegion { label, available: pixels.len(), requested: k });
            }
            let own = |p: usize| weights.weights(p)[label];
            let pure: Vec<usize> = pixels.iter().copied().filter(|&p| own(p) >= PURE_WEIGHT).collect();
            let mut picked: Vec<usize> = if pure.len() >= k {
                index::sample(rng, pure.len(), k).into_iter().map(|i| pure[i]).collect()
            } else {
                let mut ranked = pixels;
                ranked.sort_by(|&a, &b| own(b).total_cmp(&own(a)).then(a.cmp(&b)));
                ranked.truncate(k);
                ranked
            };
            picked.sort_unstable();
            Ok(picked.into_iter().map(|p| (p % w, p / w)).collect())
        })
        .collect()
}

/// Deterministic train/test split; the train part has `floor(f * n)` ids.
/// Both parts are returned in input order.
pub fn split_dataset<T: Clone>(ids: &[T], train_fraction: f64, rng_seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if ids.is_empty() {
        return Err(Error::EmptyDomain("cannot split an empty id list".into()));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!("train fraction {train_fraction} not in (0, 1)")));
    }
    let n_train = (train_fraction * ids.len() as f64 + 1e-9).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut in_train = vec![false; ids.len()];
    for i in index::sample(&mut rng, ids.len(), n_train) {
        in_train[i] = true;
    }
    let (train, test): (Vec<_>, Vec<_>) = ids.iter().zip(&in_train).partition(|(_, t)| **t);
    Ok((train.into_iter().map(|(id, _)| id.clone()).collect(), test.into_iter().map(|(id, _)| id.clone()).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::color::von_kries_correct;
    use std::collections::HashSet;

    fn pool() -> Vec<PoolEntry> {
        parse_pool(r#"[[0.8,0.6,0.4],[0.3,0.5,0.9],[0.6,0.6,0.5],{"id":"tungsten","rgb":[1.0,0.55,0.2]},[0.5,0.9,0.6]]"#).unwrap()
    }

    fn canonical(w: usize, h: usize) -> LinearImage {
        LinearImage::from_fn(w, h, |x, y| {
            let t = ((x * 13 + y * 7) % 17) as f64 / 17.0;
            [0.1 + 0.8 * t, 0.9 - 0.7 * t, 0.3 + 0.4 * ((x + y) % 2) as f64]
        })
        .unwrap()
    }

    #[test]
    fn shuffle_examples() {
        let gray = Illuminant::new([0.5, 0.5, 0.5]).unwrap();
        for s in 0..20 {
            assert_eq!(shuffle_illuminant(&gray, s), gray);
        }
        let base = Illuminant::new([0.8, 0.6, 0.4]).unwrap();
        let all: HashSet<[u64; 3]> = PERMUTATIONS.iter().map(|p| permute(&base, *p).rgb().map(f64::to_bits)).collect();
        let mut seen = HashSet::new();
        for s in 0..200 {
            let out = shuffle_illuminant(&base, s).rgb().map(f64::to_bits);
            assert!(all.contains(&out));
            seen.insert(out);
            assert_eq!(shuffle_illuminant(&base, s), shuffle_illuminant(&base, s));
        }
        assert_eq!(seen.len(), 6);
    }

    #[test]
    fn hard_map_matches_labels() {
        let seg = SegmentMap::voronoi(24, 24, 4, 3).unwrap();
        let colors: Vec<Illuminant> = pool().iter().take(4).map(|e| e.rgb).collect();
        let (map, wts) = build_illumination_map(&seg, &colors, 0.0).unwrap();
        for p in 0..map.len() {
            assert_eq!(map.pixel(p), colors[seg.label(p)].rgb());
            assert_eq!(wts.weights(p).iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn feathered_map_properties() {
        // two vertical halves
        let (w, h) = (80, 8);
        let seg = SegmentMap::new(w, h, (0..w * h).map(|p| (p % w >= 40) as usize).collect()).unwrap();
        let colors = [Illuminant::new([0.9, 0.4, 0.2]).unwrap(), Illuminant::new([0.2, 0.5, 0.9]).unwrap()];
        let sigma = 3.0;
        let (map, wts) = build_illumination_map(&seg, &colors, sigma).unwrap();
        for p in 0..map.len() {
            assert!((wts.weights(p).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let x = p % w;
            let dist = if x < 40 { 40 - x } else { x - 39 } as f64;
            if dist >= 4.0 * sigma {
                let own = colors[seg.label(p)].rgb();
                for c in 0..3 {
                    assert!((map.pixel(p)[c] - own[c]).abs() < 1e-4);
                }
            }
        }
        // boundary pixels are genuinely mixed
        assert!(wts.weights(39)[1] > 0.3);

        let same = [colors[0], colors[0]];
        let (map, _) = build_illumination_map(&seg, &same, sigma).unwrap();
        for p in 0..map.len() {
            for c in 0..3 {
                assert!((map.pixel(p)[c] - colors[0].rgb()[c]).abs() < 1e-12);
            }
        }
        assert!(build_illumination_map(&seg, &colors[..1], sigma).is_err());
    }

    #[test]
    fn augment_contract() {
        let img = canonical(48, 40);
        let seg = SegmentMap::voronoi(48, 40, 4, 11).unwrap();
        let cfg = AugmentConfig { n: 4, k: 10, feather_sigma: 4.0, rng_seed: 99 };
        let s = augment("img0", &img, &seg, &pool(), &cfg).unwrap();
        assert_eq!(s.artifact_count(), 10);
        assert_eq!(s.seed_masks().len(), 4);
        assert_eq!(s.seeds.total_points(), 40);
        let back = von_kries_correct(&s.biased, &s.illum_map).unwrap();
        for (a, b) in back.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-6);
        }
        for (i, pts) in s.seeds.illuminants().iter().enumerate() {
            assert!(pts.points.iter().all(|&(x, y)| seg.label(y * 48 + x) == i));
            assert_eq!(pts.color, s.illuminant_colors[i]);
        }
        let distinct: HashSet<&String> = s.provenance.pool_ids.iter().collect();
        assert_eq!(distinct.len(), 4);
        assert_eq!(s, augment("img0", &img, &seg, &pool(), &cfg).unwrap());
        assert_ne!(s.biased, augment("img0", &img, &seg, &pool(), &AugmentConfig { rng_seed: 100, ..cfg }).unwrap().biased);
    }

    #[test]
    fn seeds_avoid_feathered_borders() {
        // two halves 60 px wide; the pure core starts 16 px from the border
        let img = canonical(120, 20);
        let seg = SegmentMap::new(120, 20, (0..2400).map(|p| (p % 120 >= 60) as usize).collect()).unwrap();
        let cfg = AugmentConfig { n: 2, k: 12, feather_sigma: 4.0, rng_seed: 5 };
        let s = augment("a", &img, &seg, &pool(), &cfg).unwrap();
        assert!(crate::mixture::mask_loss(&s.illum_map, &s.seeds).unwrap() < 1e-9);

        // a heavy feather leaves no pure pixels: the most confident ones are used
        let s = augment("a", &img, &seg, &pool(), &AugmentConfig { feather_sigma: 30.0, ..cfg }).unwrap();
        let xs: Vec<usize> = s.seeds.illuminants()[0].points.iter().map(|p| p.0).collect();
        assert!(xs.iter().all(|&x| x == 0), "{xs:?}");
    }

    #[test]
    fn augment_errors() {
        let img = canonical(16, 16);
        let seg = SegmentMap::voronoi(16, 16, 3, 1).unwrap();
        let cfg = AugmentConfig { n: 4, k: 2, feather_sigma: 0.0, rng_seed: 0 };
        assert!(matches!(augment("a", &img, &seg, &pool(), &cfg), Err(Error::Config(_))));
        let cfg = AugmentConfig { n: 3, k: 1000, ..cfg };
        assert!(matches!(augment("a", &img, &seg, &pool(), &cfg), Err(Error::InsufficientRegion { .. })));
        assert!(augment("a", &img, &seg, &[], &AugmentConfig { n: 3, ..cfg }).is_err());
    }

    #[test]
    fn single_illuminant_degenerates() {
        let img = canonical(16, 16);
        let seg = SegmentMap::new(16, 16, vec![0; 256]).unwrap();
        let cfg = AugmentConfig { n: 1, k: 5, feather_sigma: 8.0, rng_seed: 4 };
        let s = augment("a", &img, &seg, &pool(), &cfg).unwrap();
        let c = s.illuminant_colors[0];
        for p in 0..s.illum_map.len() {
            for ch in 0..3 {
                assert!((s.illum_map.pixel(p)[ch] - c.rgb()[ch]).abs() < 1e-12);
            }
        }
        let e = crate::color::apparent_illumination(&s.biased, &s.corrected).unwrap();
        assert!(crate::metrics::angular_error(&e, &c).to_radians() < 1e-6);
    }

    #[test]
    fn pool_parsing_and_extraction() {
        let p = pool();
        assert_eq!(p.len(), 5);
        assert_eq!(p[3].id, "tungsten");
        assert_eq!(p[1].id, "1");
        assert!(p.iter().all(|e| e.rgb.is_normalized()));
        assert!(parse_pool("[]").is_err());
        assert!(parse_pool("[[0,0,0]]").is_err());

        let seg = SegmentMap::new(4, 1, vec![0, 0, 1, 1]).unwrap();
        let gt = IlluminationMap::new(4, 1, vec![2.0, 1.0, 1.0, 2.0, 1.0, 1.0, 0.1, 0.1, 0.3, 0.1, 0.1, 0.3]).unwrap();
        let ex = pool_from_gt_map(&gt, &seg).unwrap();
        assert_eq!(ex[0], Illuminant::new([2.0, 1.0, 1.0]).unwrap().normalized());
    }

    #[test]
    fn segment_map_validation() {
        assert!(SegmentMap::new(2, 2, vec![0, 2, 2, 0]).is_err());
        assert!(SegmentMap::new(2, 2, vec![0, 1, 1]).is_err());
        let v = SegmentMap::voronoi(10, 10, 6, 0).unwrap();
        assert_eq!(v.n(), 6);
        assert!(v.regions().iter().all(|r| !r.is_empty()));
        assert_eq!(v, SegmentMap::voronoi(10, 10, 6, 0).unwrap());
    }

    #[test]
    fn split_examples() {
        let ids: Vec<usize> = (0..5000).collect();
        let (train, test) = split_dataset(&ids, 0.8, 1).unwrap();
        assert_eq!((train.len(), test.len()), (4000, 1000));
        let (a, b) = split_dataset(&["a", "b", "c", "d", "e"], 0.8, 2).unwrap();
        assert_eq!((a.len(), b.len()), (4, 1));
        let union: HashSet<usize> = train.iter().chain(&test).copied().collect();
        assert_eq!(union.len(), 5000);
        assert_eq!(split_dataset(&ids, 0.8, 1).unwrap().0, train);
        assert!(split_dataset::<u8>(&[], 0.8, 1).is_err());
        assert!(split_dataset(&ids, 1.0, 1).is_err());
    }
}
