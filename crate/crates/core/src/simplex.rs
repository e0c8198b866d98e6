//! Least squares over the probability simplex:
//! `min ‖A p − b‖²  s.t.  p ≥ 0, Σ p = 1` for a 3×N matrix `A`.
//!
//! For small N the optimum is found exactly by enumerating supports: on each
//! candidate support the equality-constrained problem is solved through its
//! KKT system (pseudo-inverse, so rank-deficient color sets still get the
//! minimal-norm answer), infeasible solutions are discarded and the best
//! feasible one wins. The KKT pseudo-inverses depend only on `A`, so they
//! are computed once and reused for every pixel. Larger N falls back to
//! accelerated projected gradient.

use nalgebra::{DMatrix, DVector};

/// Supports are enumerated up to this many illuminants.
const MAX_ENUMERATED: usize = 10;
const FEASIBILITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
struct Face {
    support: Vec<usize>,
    /// Pseudo-inverse of the KKT matrix, `(s+1)×(s+1)`.
    kkt_pinv: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct SimplexLeastSquares {
    columns: Vec<[f64; 3]>,
    faces: Vec<Face>,
    degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexSolution {
    pub weights: Vec<f64>,
    /// `‖A p − b‖₂` at the solution.
    pub residual: f64,
}

impl SimplexLeastSquares {
    pub fn new(columns: &[[f64; 3]]) -> Self {
        let n = columns.len();
        assert!(n > 0, "at least one column is required");
        // affinely dependent columns make the minimizer non-unique
        let degenerate = {
            let mut m = DMatrix::zeros(4, n);
            for (j, c) in columns.iter().enumerate() {
                for r in 0..3 {
                    m[(r, j)] = c[r];
                }
                m[(3, j)] = 1.0;
            }
            m.rank(1e-9) < n
        };
        let faces = if n <= MAX_ENUMERATED {
            (1u32..(1 << n))
                .map(|bits| {
                    let support: Vec<usize> = (0..n).filter(|i| bits & (1 << i) != 0).collect();
                    let s = support.len();
                    let mut k = DMatrix::zeros(s + 1, s + 1);
                    for (a, &i) in support.iter().enumerate() {
                        for (b, &j) in support.iter().enumerate() {
                            k[(a, b)] = 2.0 * dot(columns[i], columns[j]);
                        }
                        k[(a, s)] = 1.0;
                        k[(s, a)] = 1.0;
                    }
                    let kkt_pinv = k.pseudo_inverse(1e-12).expect("pseudo-inverse with a valid epsilon");
                    Face { support, kkt_pinv }
                })
                .collect()
        } else {
            Vec::new()
        };
        Self { columns: columns.to_vec(), faces, degenerate }
    }

    /// True when the columns are affinely dependent, so the solution may
    /// not be unique.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn n(&self) -> usize {
        self.columns.len()
    }

    pub fn residual(&self, weights: &[f64], target: [f64; 3]) -> f64 {
        let mut r = [0.0; 3];
        for (w, col) in weights.iter().zip(&self.columns) {
            for c in 0..3 {
                r[c] += w * col[c];
            }
        }
        ((r[0] - target[0]).powi(2) + (r[1] - target[1]).powi(2) + (r[2] - target[2]).powi(2)).sqrt()
    }

    pub fn solve(&self, target: [f64; 3]) -> SimplexSolution {
        if self.faces.is_empty() {
            return self.solve_projected_gradient(target);
        }
        let n = self.n();
        let mut best: Option<SimplexSolution> = None;
        for face in &self.faces {
            let s = face.support.len();
            let mut rhs = DVector::zeros(s + 1);
            for (a, &i) in face.support.iter().enumerate() {
                rhs[a] = 2.0 * dot(self.columns[i], target);
            }
            rhs[s] = 1.0;
            let x = &face.kkt_pinv * rhs;
            if (0..s).any(|a| x[a] < -FEASIBILITY_TOL) {
                continue;
            }
            let mut weights = vec![0.0; n];
            for (a, &i) in face.support.iter().enumerate() {
                weights[i] = x[a].max(0.0);
            }
            let total: f64 = weights.iter().sum();
            if total.is_nan() || total <= 0.0 {
                continue;
            }
            weights.iter_mut().for_each(|w| *w /= total);
            let residual = self.residual(&weights, target);
            // strict improvement keeps the first (smallest-index) face on ties
            if best.as_ref().is_none_or(|b| residual < b.residual - 1e-15) {
                best = Some(SimplexSolution { weights, residual });
            }
        }
        best.unwrap_or_else(|| self.solve_projected_gradient(target))
    }

    fn solve_projected_gradient(&self, target: [f64; 3]) -> SimplexSolution {
        let n = self.n();
        let lipschitz = 2.0 * self.columns.iter().map(|c| dot(*c, *c)).sum::<f64>().max(1e-12);
        let step = 1.0 / lipschitz;
        let mut p = vec![1.0 / n as f64; n];
        let mut y = p.clone();
        let mut t = 1.0f64;
        for _ in 0..20_000 {
            let mut r = [-target[0], -target[1], -target[2]];
            for (w, col) in y.iter().zip(&self.columns) {
                for c in 0..3 {
                    r[c] += w * col[c];
                }
            }
            let grad: Vec<f64> = self.columns.iter().map(|col| 2.0 * dot(*col, r)).collect();
            let next = project_to_simplex(&y.iter().zip(&grad).map(|(v, g)| v - step * g).collect::<Vec<_>>());
            let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
            let delta: f64 = next.iter().zip(&p).map(|(a, b)| (a - b).abs()).sum();
            y = next.iter().zip(&p).map(|(a, b)| a + (t - 1.0) / t_next * (a - b)).collect();
            p = next;
            t = t_next;
            if delta < 1e-14 {
                break;
            }
        }
        let residual = self.residual(&p, target);
        SimplexSolution { weights: p, residual }
    }
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Euclidean projection onto the probability simplex (sort-based).
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (i, x) in u.iter().enumerate() {
        cumulative += x;
        let t = (cumulative - 1.0) / (i + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_lands_on_simplex() {
        let p = project_to_simplex(&[0.5, 2.0, -1.0]);
        assert_eq!(p, vec![0.0, 1.0, 0.0]);
        let p = project_to_simplex(&[0.3, 0.3, 0.3]);
        for v in &p {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_vertex_and_midpoint() {
        let cols = [[1.0, 0.2, 0.1], [0.1, 0.9, 0.2], [0.2, 0.1, 0.8]];
        let solver = SimplexLeastSquares::new(&cols);
        assert!(!solver.is_degenerate());
        let s = solver.solve(cols[1]);
        assert!((s.weights[1] - 1.0).abs() < 1e-12, "{:?}", s.weights);
        let mid = [0.55, 0.55, 0.15];
        let s = solver.solve(mid);
        assert!((s.weights[0] - 0.5).abs() < 1e-12 && (s.weights[1] - 0.5).abs() < 1e-12);
        assert!(s.residual < 1e-12);
    }

    #[test]
    fn outside_point_projects_to_face() {
        let cols = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let s = SimplexLeastSquares::new(&cols).solve([2.0, -1.0, 0.0]);
        assert_eq!(s.weights, vec![1.0, 0.0]);
    }

    #[test]
    fn degenerate_columns_flagged() {
        let cols = [[1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let solver = SimplexLeastSquares::new(&cols);
        assert!(solver.is_degenerate());
        let s = solver.solve([0.5, 0.5, 0.0]);
        assert!(s.residual < 1e-9);
        assert!((s.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_fallback_agrees_with_enumeration() {
        let cols = [[0.9, 0.3, 0.1], [0.2, 0.8, 0.3], [0.1, 0.3, 0.9], [0.5, 0.5, 0.5]];
        let exact = SimplexLeastSquares::new(&cols);
        let target = [0.3, 0.6, 0.45];
        let a = exact.solve(target);
        let b = exact.solve_projected_gradient(target);
        assert!((a.residual - b.residual).abs() < 1e-8);
    }
}
