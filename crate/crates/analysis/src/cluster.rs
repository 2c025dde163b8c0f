use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AnalysisError, Result};

pub type Point = [f64; 2];

pub const NOISE: i64 = -1;

pub(crate) fn dist(a: &Point, b: &Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterMethod {
    Dbscan,
    Gmm,
    Ahc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Linkage {
    Single,
    Average,
    Complete,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterParams {
    pub method: ClusterMethod,
    /// dbscan radius; `None` takes the knee of the k-distance curve
    pub eps: Option<f64>,
    pub min_pts: usize,
    /// gmm components or ahc cut
    pub k: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
    pub linkage: Linkage,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            method: ClusterMethod::Dbscan,
            eps: None,
            min_pts: 10,
            k: 3,
            max_iter: 200,
            tol: 1e-6,
            seed: 0,
            linkage: Linkage::Average,
        }
    }
}

impl ClusterParams {
    pub fn dbscan(eps: Option<f64>, min_pts: usize) -> Self {
        Self {
            eps,
            min_pts,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(AnalysisError::InvalidParams(m));
        match self.method {
            ClusterMethod::Dbscan => {
                if let Some(e) = self.eps {
                    if !(e > 0.0 && e.is_finite()) {
                        return bad(format!("eps must be positive, got {e}"));
                    }
                }
                if self.min_pts == 0 {
                    return bad("min_pts must be at least 1".into());
                }
            }
            ClusterMethod::Gmm => {
                if self.k == 0 || self.max_iter == 0 || !(self.tol >= 0.0) {
                    return bad("gmm needs k ≥ 1, max_iter ≥ 1 and tol ≥ 0".into());
                }
            }
            ClusterMethod::Ahc => {
                if self.k == 0 {
                    return bad("ahc needs k ≥ 1".into());
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub segment_ids: Vec<String>,
    /// cluster per point, `-1` for DBSCAN noise
    pub labels: Vec<i64>,
    pub params: ClusterParams,
    /// radius actually used by DBSCAN
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_used: Option<f64>,
}

impl ClusterAssignment {
    pub fn n_clusters(&self) -> usize {
        count_clusters(&self.labels)
    }

    pub fn n_noise(&self) -> usize {
        self.labels.iter().filter(|&&l| l == NOISE).count()
    }
}

pub(crate) fn count_clusters(labels: &[i64]) -> usize {
    let mut seen: Vec<i64> = labels.iter().copied().filter(|&l| l != NOISE).collect();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

pub fn cluster(segment_ids: Vec<String>, points: &[Point], params: &ClusterParams) -> Result<ClusterAssignment> {
    params.validate()?;
    if points.is_empty() {
        return Err(AnalysisError::TooFewPoints { needed: 1, got: 0 });
    }
    if segment_ids.len() != points.len() {
        return Err(AnalysisError::IdMismatch(format!(
            "{} ids for {} points",
            segment_ids.len(),
            points.len()
        )));
    }
    if points.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(AnalysisError::NonFinite);
    }
    let (labels, eps_used) = match params.method {
        ClusterMethod::Dbscan => {
            let eps = match params.eps {
                Some(e) => e,
                None => knee_eps(points, params.min_pts)?,
            };
            (dbscan(points, eps, params.min_pts), Some(eps))
        }
        ClusterMethod::Gmm => (gmm(points, params.k, params.max_iter, params.tol, params.seed)?, None),
        ClusterMethod::Ahc => (ahc(points, params.k, params.linkage)?, None),
    };
    Ok(ClusterAssignment {
        segment_ids,
        labels,
        params: params.clone(),
        eps_used,
    })
}

/// Textbook DBSCAN. A point's neighborhood includes itself; points with
/// at least `min_pts` neighbors are core. Clusters are discovered from
/// core points in index order and grown breadth-first, so a border point
/// joins the first cluster that reaches it.
pub fn dbscan(points: &[Point], eps: f64, min_pts: usize) -> Vec<i64> {
    let n = points.len();
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| dist(&points[i], &points[j]) <= eps).collect())
        .collect();
    let core: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= min_pts).collect();
    let mut labels = vec![NOISE; n];
    let mut next = 0;
    for i in 0..n {
        if labels[i] != NOISE || !core[i] {
            continue;
        }
        labels[i] = next;
        let mut queue = VecDeque::from([i]);
        while let Some(p) = queue.pop_front() {
            for &q in &neighbors[p] {
                if labels[q] == NOISE {
                    labels[q] = next;
                    if core[q] {
                        queue.push_back(q);
                    }
                }
            }
        }
        next += 1;
    }
    labels
}

/// Sorted distances from each point to its `k`-th nearest other point.
pub fn k_distances(points: &[Point], k: usize) -> Vec<f64> {
    let n = points.len();
    let mut out: Vec<f64> = (0..n)
        .map(|i| {
            let mut d: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| dist(&points[i], &points[j])).collect();
            d.sort_by(f64::total_cmp);
            d[k.min(d.len()) - 1]
        })
        .collect();
    out.sort_by(f64::total_cmp);
    out
}

/// Knee of the ascending k-distance curve: after scaling both axes to
/// `[0, 1]`, the point lying farthest below the chord joining the ends.
pub fn knee_eps(points: &[Point], k: usize) -> Result<f64> {
    if points.len() < 3 {
        return Err(AnalysisError::TooFewPoints {
            needed: 3,
            got: points.len(),
        });
    }
    let kd = k_distances(points, k.max(1));
    let (lo, hi) = (kd[0], kd[kd.len() - 1]);
    if hi <= lo {
        return Ok(hi.max(f64::MIN_POSITIVE));
    }
    let m = (kd.len() - 1) as f64;
    let mut best = (f64::NEG_INFINITY, kd.len() - 1);
    for (i, &v) in kd.iter().enumerate() {
        let gap = i as f64 / m - (v - lo) / (hi - lo);
        if gap > best.0 {
            best = (gap, i);
        }
    }
    Ok(kd[best.1].max(f64::MIN_POSITIVE))
}

/// Gaussian mixture fitted by EM with k-means++ seeding and full
/// covariances; each point takes its most responsible component.
pub fn gmm(points: &[Point], k: usize, max_iter: usize, tol: f64, seed: u64) -> Result<Vec<i64>> {
    let n = points.len();
    if k > n {
        return Err(AnalysisError::InvalidK { k, n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<Point> = vec![points[rng.random_range(0..n)]];
    while means.len() < k {
        let d2: Vec<f64> = points
            .iter()
            .map(|p| means.iter().map(|m| dist(p, m).powi(2)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut r = rng.random_range(0.0..total);
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if r < w {
                    pick = i;
                    break;
                }
                r -= w;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        means.push(points[idx]);
    }
    let reg = 1e-6;
    let (mx, my) = mean_of(points.iter());
    let var = points.iter().map(|p| (p[0] - mx).powi(2) + (p[1] - my).powi(2)).sum::<f64>() / (2.0 * n as f64);
    let mut covs = vec![[var + reg, 0.0, var + reg]; k];
    let mut weights = vec![1.0 / k as f64; k];
    let mut resp = vec![0.0; n * k];
    let mut prev_ll = f64::NEG_INFINITY;
    for _ in 0..max_iter {
        // E step in log space
        let mut ll = 0.0;
        for (i, p) in points.iter().enumerate() {
            let logs: Vec<f64> = (0..k).map(|c| weights[c].ln() + log_normal(p, &means[c], &covs[c])).collect();
            let mx = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = logs.iter().map(|l| (l - mx).exp()).sum();
            let lse = mx + s.ln();
            ll += lse;
            for c in 0..k {
                resp[i * k + c] = (logs[c] - lse).exp();
            }
        }
        // M step
        for c in 0..k {
            let nk: f64 = (0..n).map(|i| resp[i * k + c]).sum::<f64>().max(1e-12);
            let m = [
                (0..n).map(|i| resp[i * k + c] * points[i][0]).sum::<f64>() / nk,
                (0..n).map(|i| resp[i * k + c] * points[i][1]).sum::<f64>() / nk,
            ];
            let mut cov = [0.0; 3];
            for (i, p) in points.iter().enumerate() {
                let (dx, dy) = (p[0] - m[0], p[1] - m[1]);
                let r = resp[i * k + c];
                cov[0] += r * dx * dx;
                cov[1] += r * dx * dy;
                cov[2] += r * dy * dy;
            }
            covs[c] = [cov[0] / nk + reg, cov[1] / nk, cov[2] / nk + reg];
            means[c] = m;
            weights[c] = nk / n as f64;
        }
        if (ll - prev_ll).abs() <= tol * ll.abs().max(1.0) {
            break;
        }
        prev_ll = ll;
    }
    Ok((0..n)
        .map(|i| {
            (0..k).fold(0, |best, c| if resp[i * k + c] > resp[i * k + best] { c } else { best }) as i64
        })
        .collect())
}

fn mean_of<'a>(pts: impl Iterator<Item = &'a Point>) -> (f64, f64) {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
    for p in pts {
        sx += p[0];
        sy += p[1];
        n += 1.0;
    }
    (sx / n, sy / n)
}

/// Log density of a 2-D normal with covariance `[a, b; b, c]`.
fn log_normal(p: &Point, m: &Point, cov: &[f64; 3]) -> f64 {
    let [a, b, c] = *cov;
    let det = (a * c - b * b).max(1e-300);
    let (dx, dy) = (p[0] - m[0], p[1] - m[1]);
    let maha = (c * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det;
    -0.5 * maha - 0.5 * det.ln() - (2.0 * std::f64::consts::PI).ln()
}

/// Agglomerative clustering with Lance–Williams updates, cut at `k`
/// clusters. Ties merge the lowest index pair first; labels are numbered
/// by first appearance.
pub fn ahc(points: &[Point], k: usize, linkage: Linkage) -> Result<Vec<i64>> {
    let n = points.len();
    if k > n {
        return Err(AnalysisError::InvalidK { k, n });
    }
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            d[i * n + j] = dist(&points[i], &points[j]);
        }
    }
    let mut active: Vec<bool> = vec![true; n];
    let mut size = vec![1usize; n];
    let mut owner: Vec<usize> = (0..n).collect();
    let mut clusters = n;
    while clusters > k {
        let mut best = (f64::INFINITY, 0, 0);
        for i in 0..n {
            if !active[i] {
                continue;
            }
            for j in i + 1..n {
                if active[j] && d[i * n + j] < best.0 {
                    best = (d[i * n + j], i, j);
                }
            }
        }
        let (_, a, b) = best;
        for x in 0..n {
            if !active[x] || x == a || x == b {
                continue;
            }
            let (da, db) = (d[a * n + x], d[b * n + x]);
            let v = match linkage {
                Linkage::Single => da.min(db),
                Linkage::Complete => da.max(db),
                Linkage::Average => (size[a] as f64 * da + size[b] as f64 * db) / (size[a] + size[b]) as f64,
            };
            d[a * n + x] = v;
            d[x * n + a] = v;
        }
        size[a] += size[b];
        active[b] = false;
        owner.iter_mut().filter(|o| **o == b).for_each(|o| *o = a);
        clusters -= 1;
    }
    let mut map: Vec<Option<i64>> = vec![None; n];
    let mut next = 0;
    Ok(owner
        .iter()
        .map(|&o| {
            *map[o].get_or_insert_with(|| {
                next += 1;
                next - 1
            })
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_close_points_one_cluster() {
        let pts = [[0.0, 0.0], [0.1, 0.0], [0.0, 0.1]];
        assert_eq!(dbscan(&pts, 0.5, 3), vec![0, 0, 0]);
    }

    #[test]
    fn isolated_point_is_noise() {
        let pts = [[0.0, 0.0], [0.1, 0.0], [0.0, 0.1], [50.0, 50.0]];
        assert_eq!(dbscan(&pts, 0.5, 3), vec![0, 0, 0, NOISE]);
    }

    #[test]
    fn knee_separates_blobs_from_gap() {
        let mut pts = Vec::new();
        for c in 0..3 {
            for i in 0..20 {
                let a = i as f64 * 0.3;
                pts.push([100.0 * c as f64 + a.cos(), a.sin()]);
            }
        }
        let eps = knee_eps(&pts, 4).unwrap();
        assert!(eps < 10.0, "{eps}");
        let labels = dbscan(&pts, eps, 4);
        assert_eq!(count_clusters(&labels), 3);
    }

    #[test]
    fn gmm_and_ahc_split_blobs() {
        let pts: Vec<Point> = (0..30)
            .map(|i| {
                let off = if i < 15 { 0.0 } else { 20.0 };
                [off + (i % 5) as f64 * 0.1, (i % 3) as f64 * 0.1]
            })
            .collect();
        let g = gmm(&pts, 2, 100, 1e-8, 3).unwrap();
        assert!(g[..15].iter().all(|&l| l == g[0]) && g[15..].iter().all(|&l| l == g[15]) && g[0] != g[15]);
        for link in [Linkage::Single, Linkage::Average, Linkage::Complete] {
            let a = ahc(&pts, 2, link).unwrap();
            assert!(a[..15].iter().all(|&l| l == 0) && a[15..].iter().all(|&l| l == 1));
        }
    }

    #[test]
    fn invalid_params() {
        let p = ClusterParams {
            eps: Some(-1.0),
            ..ClusterParams::default()
        };
        assert!(cluster(vec!["a".into()], &[[0.0, 0.0]], &p).is_err());
        assert!(ahc(&[[0.0, 0.0]], 2, Linkage::Single).is_err());
    }
}
