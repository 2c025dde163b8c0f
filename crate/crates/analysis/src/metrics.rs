use serde::{Deserialize, Serialize};

use crate::cluster::{dist, Point, NOISE};
use crate::error::{AnalysisError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub silhouette: f64,
    pub calinski_harabasz: f64,
    pub davies_bouldin: f64,
    pub n_clusters: usize,
    pub n_noise: usize,
}

struct Groups {
    points: Vec<Point>,
    /// dense cluster index per kept point
    member: Vec<usize>,
    sizes: Vec<usize>,
    n_noise: usize,
}

fn group(points: &[Point], labels: &[i64]) -> Result<Groups> {
    if points.len() != labels.len() {
        return Err(AnalysisError::IdMismatch(format!(
            "{} labels for {} points",
            labels.len(),
            points.len()
        )));
    }
    if points.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(AnalysisError::NonFinite);
    }
    let mut distinct: Vec<i64> = labels.iter().copied().filter(|&l| l != NOISE).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(AnalysisError::TooFewClusters(distinct.len()));
    }
    let mut g = Groups {
        points: Vec::new(),
        member: Vec::new(),
        sizes: vec![0; distinct.len()],
        n_noise: 0,
    };
    for (p, &l) in points.iter().zip(labels) {
        if l == NOISE {
            g.n_noise += 1;
            continue;
        }
        let c = distinct.binary_search(&l).expect("label collected above");
        g.points.push(*p);
        g.member.push(c);
        g.sizes[c] += 1;
    }
    Ok(g)
}

fn centroids(g: &Groups) -> Vec<Point> {
    let mut c = vec![[0.0; 2]; g.sizes.len()];
    for (p, &m) in g.points.iter().zip(&g.member) {
        c[m][0] += p[0];
        c[m][1] += p[1];
    }
    for (ci, &s) in c.iter_mut().zip(&g.sizes) {
        ci[0] /= s as f64;
        ci[1] /= s as f64;
    }
    c
}

/// Silhouette, Calinski–Harabasz and Davies–Bouldin over the non-noise
/// points.
pub fn internal_validation(points: &[Point], labels: &[i64]) -> Result<ValidationReport> {
    let g = group(points, labels)?;
    Ok(ValidationReport {
        silhouette: silhouette_of(&g),
        calinski_harabasz: calinski_harabasz_of(&g),
        davies_bouldin: davies_bouldin_of(&g),
        n_clusters: g.sizes.len(),
        n_noise: g.n_noise,
    })
}

pub fn silhouette(points: &[Point], labels: &[i64]) -> Result<f64> {
    Ok(silhouette_of(&group(points, labels)?))
}

pub fn calinski_harabasz(points: &[Point], labels: &[i64]) -> Result<f64> {
    Ok(calinski_harabasz_of(&group(points, labels)?))
}

pub fn davies_bouldin(points: &[Point], labels: &[i64]) -> Result<f64> {
    Ok(davies_bouldin_of(&group(points, labels)?))
}

/// Mean of `(b − a) / max(a, b)`; a point alone in its cluster scores 0.
fn silhouette_of(g: &Groups) -> f64 {
    let n = g.points.len();
    let k = g.sizes.len();
    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for i in 0..n {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if i != j {
                sums[g.member[j]] += dist(&g.points[i], &g.points[j]);
            }
        }
        let own = g.member[i];
        if g.sizes[own] < 2 {
            continue;
        }
        let a = sums[own] / (g.sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own)
            .map(|c| sums[c] / g.sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    total / n as f64
}

/// `[B / (k − 1)] / [W / (n − k)]`; defined as 1 when `W = 0`.
fn calinski_harabasz_of(g: &Groups) -> f64 {
    let n = g.points.len() as f64;
    let k = g.sizes.len() as f64;
    let c = centroids(g);
    let mean = [
        g.points.iter().map(|p| p[0]).sum::<f64>() / n,
        g.points.iter().map(|p| p[1]).sum::<f64>() / n,
    ];
    let between: f64 = c
        .iter()
        .zip(&g.sizes)
        .map(|(ci, &s)| s as f64 * dist(ci, &mean).powi(2))
        .sum();
    let within: f64 = g
        .points
        .iter()
        .zip(&g.member)
        .map(|(p, &m)| dist(p, &c[m]).powi(2))
        .sum();
    if within == 0.0 {
        1.0
    } else {
        between * (n - k) / (within * (k - 1.0))
    }
}

/// Mean over clusters of the worst `(σᵢ + σⱼ) / d(cᵢ, cⱼ)`. Pairs with
/// coincident centroids are skipped, and the score is 0 when every
/// scatter or every centroid distance is 0.
fn davies_bouldin_of(g: &Groups) -> f64 {
    let k = g.sizes.len();
    let c = centroids(g);
    let mut sigma = vec![0.0; k];
    for (p, &m) in g.points.iter().zip(&g.member) {
        sigma[m] += dist(p, &c[m]);
    }
    for (s, &n) in sigma.iter_mut().zip(&g.sizes) {
        *s /= n as f64;
    }
    let all_zero_sigma = sigma.iter().all(|&s| s == 0.0);
    let all_zero_dist = (0..k).all(|i| (0..k).all(|j| i == j || dist(&c[i], &c[j]) == 0.0));
    if all_zero_sigma || all_zero_dist {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..k {
        let mut worst: f64 = 0.0;
        for j in 0..k {
            let d = dist(&c[i], &c[j]);
            if i != j && d > 0.0 {
                worst = worst.max((sigma[i] + sigma[j]) / d);
            }
        }
        total += worst;
    }
    total / k as f64
}
