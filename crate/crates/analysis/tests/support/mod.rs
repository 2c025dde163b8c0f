//! Brute-force references for the validation metrics and DBSCAN.

#![allow(dead_code)]

use latscape_analysis::{Point, NOISE};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn d(a: &Point, b: &Point) -> f64 {
    ((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1])).sqrt()
}

pub fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<Point>, Vec<i64>) {
    let n = rng.random_range(10..=200);
    let k = rng.random_range(2..=5i64);
    let centers: Vec<Point> = (0..k).map(|_| [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)]).collect();
    let mut pts = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n {
        // every label appears at least once
        let l = if (i as i64) < k { i as i64 } else { rng.random_range(0..k) };
        let c = centers[l as usize];
        pts.push([c[0] + rng.random_range(-3.0..3.0), c[1] + rng.random_range(-3.0..3.0)]);
        labels.push(l);
    }
    (pts, labels)
}

pub fn oracle_silhouette(pts: &[Point], labels: &[i64]) -> f64 {
    let mut total = 0.0;
    for i in 0..pts.len() {
        let mut own_sum = 0.0;
        let mut own_n = 0usize;
        let mut best_other = f64::INFINITY;
        let mut others: Vec<i64> = labels.to_vec();
        others.sort();
        others.dedup();
        for &l in &others {
            let mut s = 0.0;
            let mut c = 0usize;
            for j in 0..pts.len() {
                if labels[j] == l && j != i {
                    s += d(&pts[i], &pts[j]);
                    c += 1;
                }
            }
            if l == labels[i] {
                own_sum = s;
                own_n = c;
            } else if s / (c as f64) < best_other {
                best_other = s / c as f64;
            }
        }
        if own_n == 0 {
            continue;
        }
        let a = own_sum / own_n as f64;
        total += (best_other - a) / a.max(best_other);
    }
    total / pts.len() as f64
}

pub fn cluster_means(pts: &[Point], labels: &[i64]) -> Vec<(i64, Point, usize)> {
    let mut ls: Vec<i64> = labels.to_vec();
    ls.sort();
    ls.dedup();
    ls.into_iter()
        .map(|l| {
            let mut m = [0.0, 0.0];
            let mut c = 0;
            for (p, &q) in pts.iter().zip(labels) {
                if q == l {
                    m[0] += p[0];
                    m[1] += p[1];
                    c += 1;
                }
            }
            (l, [m[0] / c as f64, m[1] / c as f64], c)
        })
        .collect()
}

/// Within-cluster scatter from pairwise distances, total scatter about
/// the grand mean, and between = total − within.
pub fn oracle_ch(pts: &[Point], labels: &[i64]) -> f64 {
    let n = pts.len() as f64;
    let groups = cluster_means(pts, labels);
    let k = groups.len() as f64;
    let mut within = 0.0;
    for (l, _, c) in &groups {
        let mut s = 0.0;
        for i in 0..pts.len() {
            for j in 0..pts.len() {
                if labels[i] == *l && labels[j] == *l {
                    s += d(&pts[i], &pts[j]).powi(2);
                }
            }
        }
        within += s / (2.0 * *c as f64);
    }
    let mut total = 0.0;
    for i in 0..pts.len() {
        for j in 0..pts.len() {
            total += d(&pts[i], &pts[j]).powi(2);
        }
    }
    total /= 2.0 * n;
    let between = total - within;
    between * (n - k) / (within * (k - 1.0))
}

pub fn oracle_db(pts: &[Point], labels: &[i64]) -> f64 {
    let groups = cluster_means(pts, labels);
    let scatter: Vec<f64> = groups
        .iter()
        .map(|(l, m, c)| {
            let mut s = 0.0;
            for (p, q) in pts.iter().zip(labels) {
                if q == l {
                    s += d(p, m);
                }
            }
            s / *c as f64
        })
        .collect();
    let mut sum = 0.0;
    for i in 0..groups.len() {
        let mut worst = 0.0f64;
        for j in 0..groups.len() {
            if i != j {
                worst = worst.max((scatter[i] + scatter[j]) / d(&groups[i].1, &groups[j].1));
            }
        }
        sum += worst;
    }
    sum / groups.len() as f64
}

/// Core points joined into components by union-find; components are
/// numbered by their smallest core index and each border point takes the
/// lowest-numbered component with a core point in range.
pub fn oracle_dbscan(pts: &[Point], eps: f64, min_pts: usize) -> Vec<i64> {
    let n = pts.len();
    let near = |i: usize, j: usize| d(&pts[i], &pts[j]) <= eps;
    let core: Vec<bool> = (0..n).map(|i| (0..n).filter(|&j| near(i, j)).count() >= min_pts).collect();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut Vec<usize>, x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        p[x] = r;
        r
    }
    for i in 0..n {
        for j in 0..n {
            if core[i] && core[j] && near(i, j) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut comp_id = vec![-1i64; n];
    let mut next = 0;
    let mut root_label = std::collections::HashMap::new();
    for i in 0..n {
        if core[i] {
            let r = find(&mut parent, i);
            let l = *root_label.entry(r).or_insert_with(|| {
                next += 1;
                next - 1
            });
            comp_id[i] = l;
        }
    }
    (0..n)
        .map(|i| {
            if core[i] {
                comp_id[i]
            } else {
                (0..n)
                    .filter(|&j| core[j] && near(i, j))
                    .map(|j| comp_id[j])
                    .min()
                    .unwrap_or(NOISE)
            }
        })
        .collect()
}

pub fn random_dbscan_instance(rng: &mut ChaCha8Rng) -> (Vec<Point>, f64, usize) {
    let n = rng.random_range(5..=300);
    let blobs = rng.random_range(1..=4);
    let centers: Vec<Point> = (0..blobs).map(|_| [rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0)]).collect();
    let pts: Vec<Point> = (0..n)
        .map(|_| {
            let c = centers[rng.random_range(0..blobs)];
            [c[0] + rng.random_range(-4.0..4.0), c[1] + rng.random_range(-4.0..4.0)]
        })
        .collect();
    let eps = rng.random_range(0.3..2.5);
    let min_pts = rng.random_range(1..=8);
    (pts, eps, min_pts)
}
