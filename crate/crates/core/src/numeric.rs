//! Small numeric helpers shared across modules.
//!
//! Aggregates go through [`stable_sum`], which sorts before a Neumaier
//! compensated pass, so results do not depend on the order in which
//! parallel workers produced the inputs.

/// Order-independent compensated sum.
pub fn stable_sum(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    neumaier(&sorted)
}

/// Mean via [`stable_sum`], clamped to the sample range so a constant
/// sample returns that constant exactly.
pub fn stable_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    (stable_sum(values) / values.len() as f64).clamp(lo, hi)
}

fn neumaier(values: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Median of an unsorted slice; even lengths give the midpoint of the two
/// central values. Returns NaN for an empty slice.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    median_sorted(&sorted)
}

pub fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

pub fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// 1-D Gaussian kernel truncated at `ceil(4σ)`; `order` selects the
/// derivative (0, 1 or 2). Order 0 is normalized to unit sum.
pub fn gaussian_kernel(sigma: f64, order: u8) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil().max(1.0) as i64;
    let s2 = sigma * sigma;
    let g: Vec<f64> = (-radius..=radius)
        .map(|x| {
            let x = x as f64;
            (-x * x / (2.0 * s2)).exp()
        })
        .collect();
    let total: f64 = g.iter().sum();
    let g: Vec<f64> = g.iter().map(|v| v / total).collect();
    match order {
        0 => g,
        1 => (-radius..=radius)
            .zip(&g)
            .map(|(x, v)| -(x as f64) / s2 * v)
            .collect(),
        _ => (-radius..=radius)
            .zip(&g)
            .map(|(x, v)| {
                let x = x as f64;
                (x * x - s2) / (s2 * s2) * v
            })
            .collect(),
    }
}

/// Reflect an index into `[0, len)` (edge pixel not repeated: `-1 -> 1`).
pub fn reflect(index: i64, len: usize) -> usize {
    let n = len as i64;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut i = index.rem_euclid(period);
    if i >= n {
        i = period - i;
    }
    i as usize
}

/// Separable convolution of a single-channel plane with reflect padding.
pub fn convolve_separable(
    plane: &[f64],
    width: usize,
    height: usize,
    kx: &[f64],
    ky: &[f64],
) -> Vec<f64> {
    let rx = (kx.len() / 2) as i64;
    let ry = (ky.len() / 2) as i64;
    let mut tmp = vec![0.0; plane.len()];
    for y in 0..height {
        let row = &plane[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0.0;
            for (k, w) in kx.iter().enumerate() {
                // correlation with a flipped kernel
                let xi = reflect(x as i64 + rx - k as i64, width);
                acc += w * row[xi];
            }
            tmp[y * width + x] = acc;
        }
    }
    let mut out = vec![0.0; plane.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (k, w) in ky.iter().enumerate() {
                let yi = reflect(y as i64 + ry - k as i64, height);
                acc += w * tmp[yi * width + x];
            }
            out[y * width + x] = acc;
        }
    }
    out
}
