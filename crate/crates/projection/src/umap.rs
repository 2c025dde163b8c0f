use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::ProjectionConfig;
use crate::error::{ProjectionError, Result};
use crate::pca::{check_rows, pca};
use crate::tsne::squared_distances;

const NEGATIVES_PER_EDGE: usize = 5;
const SPREAD: f64 = 1.0;
const GRAD_CLIP: f64 = 4.0;
const SIGMA_TOL: f64 = 1e-5;
const SIGMA_STEPS: usize = 64;

/// Fits `1 / (1 + a·x^{2b})` to the target membership curve
/// (`1` below `min_dist`, `exp(−(x − min_dist) / spread)` above) by
/// Levenberg–Marquardt least squares on 300 points of `[0, 3·spread]`.
pub fn fit_ab(min_dist: f64) -> (f64, f64) {
    let xs: Vec<f64> = (0..300).map(|i| 3.0 * SPREAD * i as f64 / 299.0).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| if x < min_dist { 1.0 } else { (-(x - min_dist) / SPREAD).exp() })
        .collect();
    let residuals = |a: f64, b: f64| -> f64 {
        xs.iter()
            .zip(&ys)
            .map(|(&x, &y)| (1.0 / (1.0 + a * x.powf(2.0 * b)) - y).powi(2))
            .sum()
    };
    let (mut a, mut b) = (1.0, 1.0);
    let mut lambda = 1e-3;
    let mut cost = residuals(a, b);
    for _ in 0..500 {
        // normal equations J^T J δ = −J^T r
        let (mut jtj, mut jtr) = ([[0.0; 2]; 2], [0.0; 2]);
        for (&x, &y) in xs.iter().zip(&ys) {
            if x == 0.0 {
                continue;
            }
            let x2b = x.powf(2.0 * b);
            let den = 1.0 + a * x2b;
            let f = 1.0 / den;
            let r = f - y;
            let da = -x2b / (den * den);
            let db = -a * x2b * 2.0 * x.ln() / (den * den);
            let j = [da, db];
            for p in 0..2 {
                jtr[p] += j[p] * r;
                for q in 0..2 {
                    jtj[p][q] += j[p] * j[q];
                }
            }
        }
        let m = [[jtj[0][0] * (1.0 + lambda), jtj[0][1]], [jtj[1][0], jtj[1][1] * (1.0 + lambda)]];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        if det.abs() < 1e-300 {
            break;
        }
        let da = -(m[1][1] * jtr[0] - m[0][1] * jtr[1]) / det;
        let db = -(-m[1][0] * jtr[0] + m[0][0] * jtr[1]) / det;
        let (na, nb) = (a + da, b + db);
        let nc = if na > 0.0 && nb > 0.0 { residuals(na, nb) } else { f64::INFINITY };
        if nc < cost {
            let done = (cost - nc) < 1e-15 * cost.max(1e-300);
            a = na;
            b = nb;
            cost = nc;
            lambda *= 0.3;
            if done {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
    }
    (a, b)
}

/// Fuzzy simplicial set membership weights as a symmetric sparse edge
/// list `(i, j, w)` with `i < j`.
pub fn fuzzy_graph(rows: &[Vec<f64>], k: usize) -> Vec<(usize, usize, f64)> {
    let n = rows.len();
    let dist2 = squared_distances(rows);
    let target = (k as f64).log2();
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        let mut nbrs: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (dist2[i * n + j].sqrt(), j))
            .collect();
        nbrs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        nbrs.truncate(k);
        let rho = nbrs.iter().map(|x| x.0).find(|&d| d > 0.0).unwrap_or(0.0);
        let mass = |sigma: f64| -> f64 {
            nbrs.iter().map(|&(d, _)| (-(d - rho).max(0.0) / sigma).exp()).sum()
        };
        let (mut lo, mut hi, mut sigma) = (0.0, f64::INFINITY, 1.0);
        for _ in 0..SIGMA_STEPS {
            let m = mass(sigma);
            if (m - target).abs() < SIGMA_TOL {
                break;
            }
            if m > target {
                hi = sigma;
                sigma = 0.5 * (lo + hi);
            } else {
                lo = sigma;
                sigma = if hi.is_finite() { 0.5 * (lo + hi) } else { sigma * 2.0 };
            }
        }
        for &(d, j) in &nbrs {
            w[i * n + j] = (-(d - rho).max(0.0) / sigma).exp();
        }
    }
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (w[i * n + j], w[j * n + i]);
            let s = a + b - a * b;
            if s > 0.0 {
                edges.push((i, j, s));
            }
        }
    }
    edges
}

/// UMAP layout by negative-sampling SGD, initialized from PCA scaled to
/// a maximum absolute coordinate of 10.
pub fn umap(rows: &[Vec<f64>], cfg: &ProjectionConfig) -> Result<Vec<[f64; 2]>> {
    let n = rows.len();
    cfg.validate()?;
    if n <= cfg.n_neighbors {
        return Err(ProjectionError::TooFewPoints {
            needed: cfg.n_neighbors + 1,
            got: n,
        });
    }
    check_rows(rows)?;
    let scores = if rows[0].len() >= 2 {
        pca(rows, 2)?.scores
    } else {
        pca(rows, 1)?.scores.into_iter().map(|s| vec![s[0], 0.0]).collect()
    };
    let max_abs = scores.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let mut y: Vec<[f64; 2]> = scores.iter().map(|s| [10.0 * s[0] / max_abs, 10.0 * s[1] / max_abs]).collect();

    let (a, b) = fit_ab(cfg.min_dist);
    let mut edges = fuzzy_graph(rows, cfg.n_neighbors);
    let w_max = edges.iter().map(|e| e.2).fold(0.0, f64::max);
    edges.retain(|e| e.2 >= w_max / cfg.n_epochs as f64);
    let period: Vec<f64> = edges.iter().map(|e| w_max / e.2).collect();
    let mut next = period.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    for epoch in 0..cfg.n_epochs {
        let alpha = 1.0 - epoch as f64 / cfg.n_epochs as f64;
        for (e, &(i, j, _)) in edges.iter().enumerate() {
            if next[e] > (epoch + 1) as f64 {
                continue;
            }
            next[e] += period[e];
            // each undirected edge is applied in both directions
            for (head, tail) in [(i, j), (j, i)] {
                let d2 = dist2(&y[head], &y[tail]);
                if d2 > 0.0 {
                    let coeff = -2.0 * a * b * d2.powf(b - 1.0) / (1.0 + a * d2.powf(b));
                    for k in 0..2 {
                        let g = (coeff * (y[head][k] - y[tail][k])).clamp(-GRAD_CLIP, GRAD_CLIP);
                        y[head][k] += alpha * g;
                        y[tail][k] -= alpha * g;
                    }
                }
                for _ in 0..NEGATIVES_PER_EDGE {
                    let other = rng.random_range(0..n);
                    if other == head {
                        continue;
                    }
                    let d2 = dist2(&y[head], &y[other]);
                    let coeff = if d2 > 0.0 {
                        2.0 * b / ((0.001 + d2) * (1.0 + a * d2.powf(b)))
                    } else {
                        0.0
                    };
                    for k in 0..2 {
                        let g = if coeff > 0.0 {
                            (coeff * (y[head][k] - y[other][k])).clamp(-GRAD_CLIP, GRAD_CLIP)
                        } else {
                            GRAD_CLIP
                        };
                        y[head][k] += alpha * g;
                    }
                }
            }
        }
    }
    if y.iter().any(|v| !v[0].is_finite() || !v[1].is_finite()) {
        return Err(ProjectionError::InvalidInput);
    }
    Ok(y)
}

fn dist2(p: &[f64; 2], q: &[f64; 2]) -> f64 {
    (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)
}
