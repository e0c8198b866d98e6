//! Gray-pixel scoring, gray-pixel clustering and seed sampling.
//!
//! The grayness score compares local contrasts of the log channels. Under
//! the diagonal model a locally uniform illuminant adds a constant to each
//! log channel, which the Laplacian removes, so an achromatic surface has
//! identical log contrast in R, G and B and scores zero regardless of the
//! light color or exposure.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::SegmentMap;
use crate::color::{check_dims, IlluminationMap, Illuminant, LinearImage, Raster};
use crate::error::{Error, Result};
use crate::numeric::{median, reflect};

/// Score given to pixels whose 3×3 neighborhood contains a zero channel.
pub const MAX_GRAYNESS: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct GraynessMap {
    pub width: usize,
    pub height: usize,
    /// Lower is grayer.
    pub score: Vec<f64>,
    /// Magnitude of the mean log-channel Laplacian; near zero in flat areas
    /// where the score carries no information.
    pub contrast: Vec<f64>,
}

const LAPLACIAN: [(i64, i64, f64); 5] = [(0, 0, -4.0), (-1, 0, 1.0), (1, 0, 1.0), (0, -1, 1.0), (0, 1, 1.0)];

pub fn grayness_map(img: &LinearImage) -> GraynessMap {
    let (w, h) = img.dims();
    let logs: Vec<Option<[f64; 3]>> = (0..img.len())
        .map(|p| {
            let v = img.pixel(p);
            v.iter().all(|c| *c > 0.0).then(|| v.map(f64::ln))
        })
        .collect();
    let (score, contrast): (Vec<f64>, Vec<f64>) = (0..img.len())
        .into_par_iter()
        .map(|p| {
            let (x, y) = ((p % w) as i64, (p / w) as i64);
            let mut lap = [0.0; 3];
            for (dx, dy, k) in LAPLACIAN {
                let q = reflect(y + dy, h) * w + reflect(x + dx, w);
                match logs[q] {
                    Some(l) => (0..3).for_each(|c| lap[c] += k * l[c]),
                    None => return (MAX_GRAYNESS, 0.0),
                }
            }
            let dr = lap[0] - lap[1];
            let db = lap[2] - lap[1];
            ((dr * dr + db * db).sqrt(), ((lap[0] + lap[1] + lap[2]) / 3.0).abs())
        })
        .unzip();
    GraynessMap { width: w, height: h, score, contrast }
}

/// Seed points and colors for one illuminant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IlluminantSeeds {
    pub color: Illuminant,
    /// `(x, y)` pixel coordinates, sorted row-major.
    pub points: Vec<(usize, usize)>,
}

/// Per-illuminant seed points with disjoint masks and unit-norm colors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SeedSetRepr")]
pub struct SeedSet {
    width: usize,
    height: usize,
    illuminants: Vec<IlluminantSeeds>,
}

#[derive(Deserialize)]
struct SeedSetRepr {
    width: usize,
    height: usize,
    illuminants: Vec<IlluminantSeeds>,
}

impl TryFrom<SeedSetRepr> for SeedSet {
    type Error = Error;
    fn try_from(r: SeedSetRepr) -> Result<Self> {
        SeedSet::new(r.width, r.height, r.illuminants)
    }
}

impl SeedSet {
    /// Colors are normalized; points are sorted and must be in bounds,
    /// non-empty per illuminant and disjoint across illuminants.
    pub fn new(width: usize, height: usize, mut illuminants: Vec<IlluminantSeeds>) -> Result<Self> {
        if illuminants.is_empty() {
            return Err(Error::InvalidData("seed set has no illuminants".into()));
        }
        let mut owner = vec![usize::MAX; width * height];
        for (i, s) in illuminants.iter_mut().enumerate() {
            s.color = s.color.normalized();
            s.points.sort_by_key(|&(x, y)| (y, x));
            s.points.dedup();
            if s.points.is_empty() {
                return Err(Error::InvalidData(format!("illuminant {i} has no seed points")));
            }
            for &(x, y) in &s.points {
                if x >= width || y >= height {
                    return Err(Error::InvalidData(format!("seed ({x}, {y}) outside {width}x{height}")));
                }
                let slot = &mut owner[y * width + x];
                if *slot != usize::MAX {
                    return Err(Error::InvalidData(format!(
                        "seed ({x}, {y}) belongs to illuminants {} and {i}",
                        *slot
                    )));
                }
                *slot = i;
            }
        }
        Ok(Self { width, height, illuminants })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn n_illuminants(&self) -> usize {
        self.illuminants.len()
    }

    pub fn illuminants(&self) -> &[IlluminantSeeds] {
        &self.illuminants
    }

    pub fn colors(&self) -> Vec<Illuminant> {
        self.illuminants.iter().map(|s| s.color).collect()
    }

    pub fn total_points(&self) -> usize {
        self.illuminants.iter().map(|s| s.points.len()).sum()
    }

    /// Binary mask of illuminant `i`, row-major.
    pub fn mask(&self, i: usize) -> Vec<bool> {
        let mut m = vec![false; self.width * self.height];
        for &(x, y) in &self.illuminants[i].points {
            m[y * self.width + x] = true;
        }
        m
    }

    /// Per-pixel owning illuminant, if the pixel is a seed.
    pub fn owner_map(&self) -> Vec<Option<usize>> {
        let mut m = vec![None; self.width * self.height];
        for (i, s) in self.illuminants.iter().enumerate() {
            for &(x, y) in &s.points {
                m[y * self.width + x] = Some(i);
            }
        }
        m
    }

    /// Keep at most `k` points per illuminant, chosen uniformly.
    pub fn subsample(&self, k: usize, rng_seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let illuminants = self
            .illuminants
            .iter()
            .map(|s| {
                let points = if s.points.len() <= k {
                    s.points.clone()
                } else {
                    let mut picked: Vec<usize> = index::sample(&mut rng, s.points.len(), k).into_vec();
                    picked.sort_unstable();
                    picked.into_iter().map(|i| s.points[i]).collect()
                };
                IlluminantSeeds { color: s.color, points }
            })
            .collect();
        Self { width: self.width, height: self.height, illuminants }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    /// Fraction of valid pixels, grayest first, that enter clustering.
    pub gray_fraction: f64,
    /// Pixels with mean log contrast below this are not candidates.
    pub min_contrast: f64,
    pub rng_seed: u64,
    pub max_iterations: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self { gray_fraction: 0.005, min_contrast: 1e-3, rng_seed: 0, max_iterations: 100 }
    }
}

fn chroma(rgb: [f64; 3]) -> [f64; 2] {
    let s = rgb[0] + rgb[1] + rgb[2];
    [rgb[0] / s, rgb[1] / s]
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

fn nearest(p: [f64; 2], centers: &[[f64; 2]]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centers.iter().enumerate() {
        let d = dist2(p, *c);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

/// k-means with k-means++ seeding. Returns per-point assignments and the
/// centroids.
pub(crate) fn kmeans(points: &[[f64; 2]], k: usize, rng_seed: u64, max_iterations: usize) -> (Vec<usize>, Vec<[f64; 2]>) {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut centers = vec![points[rng.random_range(0..points.len())]];
    while centers.len() < k {
        let d: Vec<f64> = points.iter().map(|p| dist2(*p, centers[nearest(*p, &centers)])).collect();
        let total: f64 = d.iter().sum();
        let next = if total == 0.0 {
            // all points coincide with a center; fall back to first unused index
            points[centers.len().min(points.len() - 1)]
        } else {
            let mut target = rng.random_range(0.0..total);
            let mut pick = d.len() - 1;
            for (i, v) in d.iter().enumerate() {
                if target < *v {
                    pick = i;
                    break;
                }
                target -= v;
            }
            points[pick]
        };
        centers.push(next);
    }

    let mut assign = vec![usize::MAX; points.len()];
    for _ in 0..max_iterations {
        let new_assign: Vec<usize> = points.iter().map(|p| nearest(*p, &centers)).collect();
        let changed = new_assign != assign;
        assign = new_assign;
        let mut sums = vec![[0.0f64; 2]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assign) {
            sums[a][0] += p[0];
            sums[a][1] += p[1];
            counts[a] += 1;
        }
        for c in 0..k {
            if counts[c] == 0 {
                // re-seed an empty cluster at the point farthest from its center
                let far = (0..points.len())
                    .max_by(|&a, &b| {
                        dist2(points[a], centers[assign[a]])
                            .total_cmp(&dist2(points[b], centers[assign[b]]))
                            .then(b.cmp(&a))
                    })
                    .unwrap();
                centers[c] = points[far];
                assign[far] = c;
            } else {
                centers[c] = [sums[c][0] / counts[c] as f64, sums[c][1] / counts[c] as f64];
            }
        }
        if !changed {
            break;
        }
    }
    (assign, centers)
}

/// Cluster the grayest pixels into `m` illuminant groups by chromaticity.
/// Each cluster's centroid becomes its seed color and its members the seed
/// points. Clusters are ordered by centroid chromaticity.
pub fn cluster_gray_pixels(img: &LinearImage, gmap: &GraynessMap, m: usize, cfg: &ClusterConfig) -> Result<SeedSet> {
    check_dims(img.dims(), (gmap.width, gmap.height))?;
    if m == 0 {
        return Err(Error::Config("cluster count must be at least 1".into()));
    }
    if !(cfg.gray_fraction > 0.0 && cfg.gray_fraction <= 1.0) {
        return Err(Error::Config(format!("gray fraction {} not in (0, 1]", cfg.gray_fraction)));
    }
    let mut eligible: Vec<usize> = (0..img.len())
        .filter(|&p| {
            img.is_valid(p)
                && gmap.score[p] < MAX_GRAYNESS
                && gmap.contrast[p] >= cfg.min_contrast
                && img.pixel(p).iter().all(|v| *v > 0.0)
        })
        .collect();
    eligible.sort_by(|&a, &b| gmap.score[a].total_cmp(&gmap.score[b]).then(a.cmp(&b)));
    let wanted = ((cfg.gray_fraction * img.valid_count() as f64).ceil() as usize).max(m);
    eligible.truncate(wanted);
    if eligible.len() < m {
        return Err(Error::DegenerateClustering { candidates: eligible.len(), clusters: m });
    }
    eligible.sort_unstable();

    let features: Vec<[f64; 2]> = eligible.iter().map(|&p| chroma(img.pixel(p))).collect();
    let (assign, centers) = kmeans(&features, m, cfg.rng_seed, cfg.max_iterations);

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| centers[a][0].total_cmp(&centers[b][0]).then(centers[a][1].total_cmp(&centers[b][1])));
    let w = img.width();
    let illuminants = order
        .iter()
        .map(|&c| {
            let [r, g] = centers[c];
            let color = Illuminant::new([r, g, (1.0 - r - g).max(0.0)])?;
            let points = eligible
                .iter()
                .zip(&assign)
                .filter(|(_, a)| **a == c)
                .map(|(&p, _)| (p % w, p / w))
                .collect();
            Ok(IlluminantSeeds { color, points })
        })
        .collect::<Result<Vec<_>>>()?;
    SeedSet::new(img.width(), img.height(), illuminants)
}

/// Pick exactly `k` pixels uniformly without replacement from every label
/// region. Returned coordinates are sorted row-major per label.
fn sample_region_points(segments: &SegmentMap, k: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<(usize, usize)>>> {
    let w = segments.width();
    let regions = segments.regions();
    regions
        .iter()
        .enumerate()
        .map(|(label, pixels)| {
            if pixels.len() < k {
                return Err(Error::InsufficientRegion { label, available: pixels.len(), requested: k });
            }
            let mut picked = index::sample(rng, pixels.len(), k).into_vec();
            picked.sort_unstable();
            Ok(picked.into_iter().map(|i| (pixels[i] % w, pixels[i] / w)).collect())
        })
        .collect()
}

/// Training-time seeding: `k` random points per ground-truth region,
/// colored by the per-channel median of the ground-truth map over the
/// region.
pub fn sample_seeds_from_gt(gt: &IlluminationMap, segments: &SegmentMap, k: usize, rng_seed: u64) -> Result<SeedSet> {
    check_dims(gt.dims(), (segments.width(), segments.height()))?;
    if k == 0 {
        return Err(Error::Config("at least one seed per illuminant is required".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let points = sample_region_points(segments, k, &mut rng)?;
    let illuminants = segments
        .regions()
        .iter()
        .zip(points)
        .map(|(pixels, points)| {
            let color = std::array::from_fn(|c| median(&pixels.iter().map(|&p| gt.pixel(p)[c]).collect::<Vec<_>>()));
            Ok(IlluminantSeeds { color: Illuminant::new(color)?, points })
        })
        .collect::<Result<Vec<_>>>()?;
    SeedSet::new(gt.width(), gt.height(), illuminants)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::color::apply_illumination;
    use crate::metrics::angular_error;

    fn textured_gray(x: usize, y: usize) -> f64 {
        0.2 + 0.6 * (((x * 31 + y * 17) % 23) as f64 / 23.0)
    }

    #[test]
    fn uniform_gray_scores_zero() {
        let l = IlluminationMap::uniform(8, 8, Illuminant::new([0.9, 0.5, 0.2]).unwrap());
        let w = LinearImage::uniform(8, 8, [0.4; 3]).unwrap();
        let g = grayness_map(&apply_illumination(&w, &l).unwrap());
        assert!(g.score.iter().all(|s| *s < 1e-6));
    }

    #[test]
    fn gray_ramp_scores_zero_and_red_does_not() {
        let l = IlluminationMap::uniform(16, 8, Illuminant::new([0.9, 0.5, 0.2]).unwrap());
        let w = LinearImage::from_fn(16, 8, |x, y| {
            if x < 8 {
                let v = 0.1 + 0.05 * x as f64 + 0.02 * y as f64;
                [v, v, v]
            } else {
                // saturated red with channel-independent texture
                let t = ((x * 7 + y * 3) % 5) as f64;
                [0.8 - 0.05 * t, 0.02 + 0.01 * ((t as usize * 3) % 4) as f64, 0.03]
            }
        })
        .unwrap();
        let g = grayness_map(&apply_illumination(&w, &l).unwrap());
        let gray_max = (0..8).flat_map(|y| (0..7).map(move |x| y * 16 + x)).map(|p| g.score[p]).fold(0.0, f64::max);
        assert!(gray_max < 1e-6, "{gray_max}");
        let red_min = (0..8).flat_map(|y| (9..16).map(move |x| y * 16 + x)).map(|p| g.score[p]).fold(f64::INFINITY, f64::min);
        assert!(red_min >= 10.0 * gray_max.max(1e-12), "{red_min}");
        assert!(red_min > 1e-3);
    }

    #[test]
    fn zero_pixels_get_max_score() {
        let mut data = vec![0.5; 9 * 3];
        data[4 * 3] = 0.0;
        let g = grayness_map(&LinearImage::new(3, 3, data).unwrap());
        // the zero pixel and its 4-neighbours see it through the Laplacian
        for (p, s) in g.score.iter().enumerate() {
            let touched = [1, 3, 4, 5, 7].contains(&p);
            assert_eq!(*s == MAX_GRAYNESS, touched, "pixel {p}");
        }
    }

    #[test]
    fn exposure_invariance() {
        let img = LinearImage::from_fn(12, 12, |x, y| {
            let t = (x * 13 + y * 7) % 11;
            [0.1 + 0.05 * t as f64, 0.3 + 0.02 * (t % 3) as f64, 0.2 + 0.04 * (t % 5) as f64]
        })
        .unwrap();
        let a = grayness_map(&img);
        let b = grayness_map(&img.scaled(3.7).unwrap());
        for (x, y) in a.score.iter().zip(&b.score) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn single_cluster_recovers_uniform_illuminant() {
        let l = Illuminant::new([0.8, 0.55, 0.3]).unwrap();
        let w = LinearImage::from_fn(40, 40, |x, y| {
            if (10..20).contains(&x) && (10..30).contains(&y) {
                let v = textured_gray(x, y);
                [v, v, v]
            } else {
                let t = (x * 5 + y * 11) % 13;
                [0.1 + 0.06 * t as f64, 0.9 - 0.05 * ((t * 7) % 13) as f64, 0.2 + 0.05 * ((t * 3) % 13) as f64]
            }
        })
        .unwrap();
        let img = apply_illumination(&w, &IlluminationMap::uniform(40, 40, l)).unwrap();
        let g = grayness_map(&img);
        let seeds = cluster_gray_pixels(&img, &g, 1, &ClusterConfig { gray_fraction: 0.05, ..Default::default() }).unwrap();
        assert_eq!(seeds.n_illuminants(), 1);
        assert!(angular_error(&seeds.colors()[0], &l) < 1.0);
    }

    #[test]
    fn too_few_candidates() {
        let img = LinearImage::uniform(4, 4, [0.5; 3]).unwrap();
        let g = grayness_map(&img);
        // flat image: no pixel has enough contrast
        assert!(matches!(
            cluster_gray_pixels(&img, &g, 2, &ClusterConfig::default()),
            Err(Error::DegenerateClustering { candidates: 0, clusters: 2 })
        ));
    }

    #[test]
    fn seed_set_invariants() {
        let c = Illuminant::new([1.0, 1.0, 1.0]).unwrap();
        let ok = SeedSet::new(4, 4, vec![
            IlluminantSeeds { color: c, points: vec![(1, 1), (0, 0)] },
            IlluminantSeeds { color: c, points: vec![(3, 3)] },
        ])
        .unwrap();
        assert!(ok.colors().iter().all(|c| c.is_normalized()));
        assert_eq!(ok.illuminants()[0].points, vec![(0, 0), (1, 1)]);
        let m = ok.mask(0);
        assert_eq!(m.iter().filter(|v| **v).count(), 2);
        assert!(m[0] && m[5]);

        let overlap = SeedSet::new(4, 4, vec![
            IlluminantSeeds { color: c, points: vec![(1, 1)] },
            IlluminantSeeds { color: c, points: vec![(1, 1)] },
        ]);
        assert!(overlap.is_err());
        assert!(SeedSet::new(4, 4, vec![IlluminantSeeds { color: c, points: vec![] }]).is_err());
        assert!(SeedSet::new(4, 4, vec![IlluminantSeeds { color: c, points: vec![(4, 0)] }]).is_err());

        let json = serde_json::to_string(&ok).unwrap();
        let back: SeedSet = serde_json::from_str(&json).unwrap();
        assert_eq!(back, ok);
        let bad = json.replace("[3,3]", "[1,1]");
        assert!(serde_json::from_str::<SeedSet>(&bad).is_err());
    }

    fn four_segments(w: usize, h: usize) -> SegmentMap {
        SegmentMap::new(w, h, (0..w * h).map(|p| (p % w >= w / 2) as usize + 2 * (p / w >= h / 2) as usize).collect()).unwrap()
    }

    #[test]
    fn gt_sampling_contract() {
        let seg = four_segments(20, 20);
        let colors = [[1.0, 0.2, 0.2], [0.2, 1.0, 0.2], [0.2, 0.2, 1.0], [0.5, 0.5, 0.5]];
        let gt = IlluminationMap::from_fn(20, 20, |x, y| colors[seg.label(y * 20 + x)]).unwrap();
        let s = sample_seeds_from_gt(&gt, &seg, 10, 42).unwrap();
        assert_eq!(s.total_points(), 40);
        for (i, ill) in s.illuminants().iter().enumerate() {
            assert_eq!(ill.points.len(), 10);
            assert!(ill.points.iter().all(|&(x, y)| seg.label(y * 20 + x) == i));
            assert!(angular_error(&ill.color, &Illuminant::new(colors[i]).unwrap()) < 1e-9);
        }
        assert_eq!(s, sample_seeds_from_gt(&gt, &seg, 10, 42).unwrap());
        assert_ne!(s, sample_seeds_from_gt(&gt, &seg, 10, 43).unwrap());

        let all = sample_seeds_from_gt(&gt, &seg, 100, 1).unwrap();
        assert_eq!(all.total_points(), 400);
        assert!(matches!(
            sample_seeds_from_gt(&gt, &seg, 101, 1),
            Err(Error::InsufficientRegion { requested: 101, available: 100, .. })
        ));
    }

    #[test]
    fn subsample_keeps_membership() {
        let seg = four_segments(10, 10);
        let gt = IlluminationMap::uniform(10, 10, Illuminant::neutral());
        let s = sample_seeds_from_gt(&gt, &seg, 20, 5).unwrap();
        let sub = s.subsample(3, 9);
        for (a, b) in sub.illuminants().iter().zip(s.illuminants()) {
            assert_eq!(a.points.len(), 3);
            assert!(a.points.iter().all(|p| b.points.contains(p)));
        }
        assert_eq!(sub, s.subsample(3, 9));
    }

    #[test]
    fn kmeans_separates_two_blobs() {
        let mut pts = vec![];
        for i in 0..20 {
            pts.push([0.2 + 0.001 * i as f64, 0.3]);
            pts.push([0.5, 0.4 + 0.001 * i as f64]);
        }
        let (assign, centers) = kmeans(&pts, 2, 7, 50);
        assert_ne!(assign[0], assign[1]);
        assert!(assign.iter().step_by(2).all(|a| *a == assign[0]));
        let c = centers[assign[0]];
        assert!((c[0] - 0.2095).abs() < 1e-9);
    }
}
