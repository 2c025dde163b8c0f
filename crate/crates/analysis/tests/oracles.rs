mod support;

use latscape_analysis::{
    calinski_harabasz, davies_bouldin, dbscan, internal_validation, label_cooccurrence, silhouette, Point, NOISE,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::*;

#[test]
fn metrics_match_scalar_loop_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..20 {
        let (pts, labels) = random_instance(&mut rng);
        let s = silhouette(&pts, &labels).unwrap();
        let ch = calinski_harabasz(&pts, &labels).unwrap();
        let db = davies_bouldin(&pts, &labels).unwrap();
        let (os, och, odb) = (oracle_silhouette(&pts, &labels), oracle_ch(&pts, &labels), oracle_db(&pts, &labels));
        assert!((s - os).abs() < 1e-10, "silhouette {s} vs {os}");
        assert!((ch - och).abs() <= 1e-10 * och.max(1.0), "ch {ch} vs {och}");
        assert!((db - odb).abs() < 1e-10, "db {db} vs {odb}");
        assert!((-1.0..=1.0).contains(&s) && ch >= 0.0 && db >= 0.0);
    }
}

#[test]
fn random_fifty_three_labels() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let pts: Vec<Point> = (0..50).map(|_| [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]).collect();
    let labels: Vec<i64> = (0..50).map(|i| (i % 3) as i64).collect();
    let r = internal_validation(&pts, &labels).unwrap();
    assert!((r.silhouette - oracle_silhouette(&pts, &labels)).abs() < 1e-10);
    assert!((r.calinski_harabasz - oracle_ch(&pts, &labels)).abs() < 1e-10);
    assert!((r.davies_bouldin - oracle_db(&pts, &labels)).abs() < 1e-10);
    assert_eq!((r.n_clusters, r.n_noise), (3, 0));
}

#[test]
fn dbscan_matches_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..20 {
        let (pts, eps, min_pts) = random_dbscan_instance(&mut rng);
        assert_eq!(dbscan(&pts, eps, min_pts), oracle_dbscan(&pts, eps, min_pts));
    }
}

#[test]
fn three_blobs_of_sixty() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pts: Vec<Point> = (0..60)
        .map(|i| {
            let c = [[0.0, 0.0], [8.0, 0.0], [4.0, 7.0]][i % 3];
            [c[0] + rng.random_range(-1.0..1.0), c[1] + rng.random_range(-1.0..1.0)]
        })
        .collect();
    let eps = latscape_analysis::knee_eps(&pts, 4).unwrap();
    let got = dbscan(&pts, eps, 4);
    assert_eq!(got, oracle_dbscan(&pts, eps, 4));
    let mut clusters: Vec<i64> = got.iter().copied().filter(|&l| l != NOISE).collect();
    clusters.sort();
    clusters.dedup();
    assert_eq!(clusters.len(), 3);
}

#[test]
fn cooccurrence_matches_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let codes: Vec<String> = (0..7).map(|i| format!("C{i}")).collect();
    let sets: Vec<Vec<u8>> = (0..120).map(|_| (0..7).map(|_| rng.random_range(0..2u8)).collect()).collect();
    let c = label_cooccurrence(&codes, &sets).unwrap();
    for i in 0..7 {
        for j in 0..7 {
            let mut n = 0;
            for s in &sets {
                if s[i] == 1 && s[j] == 1 {
                    n += 1;
                }
            }
            assert_eq!(c.counts[i][j], n);
            assert_eq!(c.counts[i][j], c.counts[j][i]);
        }
    }
}
