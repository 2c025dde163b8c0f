use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::{Init, ProjectionConfig};
use crate::error::{ProjectionError, Result};
use crate::pca::{check_rows, pca};

pub const ENTROPY_TOL: f64 = 1e-5;
pub const MAX_SEARCH_STEPS: usize = 50;
const EXAGGERATION: f64 = 12.0;
const EXAGGERATION_ITERS: usize = 250;
const MIN_GAIN: f64 = 0.01;

#[derive(Clone, Debug, PartialEq)]
pub struct TsneResult {
    pub coords: Vec<[f64; 2]>,
    /// KL(P‖Q) against the unexaggerated P after each iteration
    pub kl_trace: Vec<f64>,
    pub perplexity: f64,
}

pub(crate) fn squared_distances(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| (a - b).powi(2)).sum();
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    d
}

/// Row-conditional affinities `p_{j|i}`, with each row's Gaussian
/// precision found by bisection so that its entropy (nats) equals
/// `ln(perplexity)`. Returns the row-major matrix and the row entropies.
pub fn conditional_affinities(dist2: &[f64], n: usize, perplexity: f64) -> (Vec<f64>, Vec<f64>) {
    let target = perplexity.ln();
    let mut p = vec![0.0; n * n];
    let mut entropies = vec![0.0; n];
    for i in 0..n {
        let row = &dist2[i * n..(i + 1) * n];
        let (mut beta, mut lo, mut hi) = (1.0, f64::NEG_INFINITY, f64::INFINITY);
        // shifting by the nearest distance keeps exp() from underflowing
        let dmin = (0..n).filter(|&j| j != i).map(|j| row[j]).fold(f64::INFINITY, f64::min);
        let mut h = 0.0;
        let mut probs = vec![0.0; n];
        for _ in 0..MAX_SEARCH_STEPS {
            let mut sum = 0.0;
            for j in 0..n {
                probs[j] = if j == i { 0.0 } else { (-(row[j] - dmin) * beta).exp() };
                sum += probs[j];
            }
            let mut weighted = 0.0;
            for j in 0..n {
                probs[j] /= sum;
                weighted += probs[j] * (row[j] - dmin);
            }
            h = sum.ln() + beta * weighted;
            let diff = h - target;
            if diff.abs() < ENTROPY_TOL {
                break;
            }
            if diff > 0.0 {
                lo = beta;
                beta = if hi.is_finite() { 0.5 * (beta + hi) } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = if lo.is_finite() { 0.5 * (beta + lo) } else { beta * 0.5 };
            }
        }
        entropies[i] = h;
        p[i * n..(i + 1) * n].copy_from_slice(&probs);
    }
    (p, entropies)
}

/// Largest valid perplexity for `n` points is strictly below `(n − 1) / 3`.
pub fn perplexity_limit(n: usize) -> f64 {
    (n as f64 - 1.0) / 3.0
}

pub fn resolve_perplexity(cfg: &ProjectionConfig, n: usize) -> Result<f64> {
    let limit = perplexity_limit(n);
    match cfg.perplexity {
        Some(p) if !(p > 0.0 && p.is_finite()) => {
            Err(ProjectionError::InvalidConfig(format!("perplexity must be positive, got {p}")))
        }
        Some(p) if p >= limit => Err(ProjectionError::PerplexityTooLarge { perplexity: p, n, limit }),
        Some(p) => Ok(p),
        None if limit <= 1.0 => Err(ProjectionError::TooFewPoints { needed: 5, got: n }),
        None => Ok(30f64.min(0.99 * limit)),
    }
}

/// Exact t-SNE with early exaggeration, momentum switching and
/// per-coordinate adaptive gains.
pub fn tsne(rows: &[Vec<f64>], cfg: &ProjectionConfig) -> Result<TsneResult> {
    let n = rows.len();
    if n < 3 {
        return Err(ProjectionError::TooFewPoints { needed: 3, got: n });
    }
    check_rows(rows)?;
    cfg.validate()?;
    let perplexity = resolve_perplexity(cfg, n)?;
    let dist2 = squared_distances(rows);
    if dist2.iter().all(|&v| v == 0.0) {
        return Err(ProjectionError::Degenerate);
    }
    let (cond, _) = conditional_affinities(&dist2, n, perplexity);
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[i * n + j] = ((cond[i * n + j] + cond[j * n + i]) / (2.0 * n as f64)).max(1e-12);
            }
        }
    }

    let mut y = initial_layout(rows, cfg)?;
    let mut update = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut num = vec![0.0; n * n];
    let mut grad = vec![[0.0; 2]; n];
    let mut trace = Vec::with_capacity(cfg.n_iter);
    for iter in 0..cfg.n_iter {
        let exaggeration = if iter < EXAGGERATION_ITERS { EXAGGERATION } else { 1.0 };
        let momentum = if iter < EXAGGERATION_ITERS { 0.5 } else { 0.8 };
        let mut z = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let d = (y[i][0] - y[j][0]).powi(2) + (y[i][1] - y[j][1]).powi(2);
                let q = 1.0 / (1.0 + d);
                num[i * n + j] = q;
                num[j * n + i] = q;
                z += 2.0 * q;
            }
        }
        for i in 0..n {
            let mut g = [0.0; 2];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let w = num[i * n + j];
                let m = (exaggeration * p[i * n + j] - w / z) * w;
                g[0] += m * (y[i][0] - y[j][0]);
                g[1] += m * (y[i][1] - y[j][1]);
            }
            grad[i] = [4.0 * g[0], 4.0 * g[1]];
        }
        for i in 0..n {
            for k in 0..2 {
                let same = (grad[i][k] > 0.0) == (update[i][k] > 0.0);
                gains[i][k] = if same { gains[i][k] * 0.8 } else { gains[i][k] + 0.2 };
                gains[i][k] = gains[i][k].max(MIN_GAIN);
                update[i][k] = momentum * update[i][k] - cfg.learning_rate * gains[i][k] * grad[i][k];
                y[i][k] += update[i][k];
            }
        }
        // recentre
        for k in 0..2 {
            let mean = y.iter().map(|v| v[k]).sum::<f64>() / n as f64;
            y.iter_mut().for_each(|v| v[k] -= mean);
        }
        trace.push(kl_divergence(&p, &y));
    }
    if y.iter().any(|v| !v[0].is_finite() || !v[1].is_finite()) {
        return Err(ProjectionError::InvalidInput);
    }
    Ok(TsneResult {
        coords: y,
        kl_trace: trace,
        perplexity,
    })
}

/// `KL(P‖Q)` for a joint `P` and the Student-t affinities of `y`.
pub fn kl_divergence(p: &[f64], y: &[[f64; 2]]) -> f64 {
    let n = y.len();
    let mut z = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                z += 1.0 / (1.0 + (y[i][0] - y[j][0]).powi(2) + (y[i][1] - y[j][1]).powi(2));
            }
        }
    }
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            let pij = p[i * n + j];
            if i != j && pij > 0.0 {
                let q = 1.0 / (1.0 + (y[i][0] - y[j][0]).powi(2) + (y[i][1] - y[j][1]).powi(2)) / z;
                kl += pij * (pij / q.max(1e-300)).ln();
            }
        }
    }
    kl
}

/// PCA scores rescaled so the first axis has standard deviation `1e-4`,
/// or seeded `N(0, 1e-4²)` draws.
fn initial_layout(rows: &[Vec<f64>], cfg: &ProjectionConfig) -> Result<Vec<[f64; 2]>> {
    let n = rows.len();
    match cfg.init {
        Init::Pca => {
            let scores = if rows[0].len() >= 2 {
                pca(rows, 2)?.scores
            } else {
                pca(rows, 1)?.scores.into_iter().map(|s| vec![s[0], 0.0]).collect()
            };
            let mean = scores.iter().map(|s| s[0]).sum::<f64>() / n as f64;
            let sd = (scores.iter().map(|s| (s[0] - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
            let f = 1e-4 / sd.max(1e-300);
            Ok(scores.iter().map(|s| [s[0] * f, s[1] * f]).collect())
        }
        Init::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let normal = Normal::new(0.0, 1e-4).expect("valid normal");
            Ok((0..n).map(|_| [normal.sample(&mut rng), normal.sample(&mut rng)]).collect())
        }
    }
}
