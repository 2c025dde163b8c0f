use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::cluster::{dist, Point, NOISE};
use crate::error::{AnalysisError, Result};

pub const DEFAULT_K: usize = 10;

/// One side of a comparison: a projection plus its cluster labels.
#[derive(Clone, Copy, Debug)]
pub struct LabeledMap<'a> {
    pub ids: &'a [String],
    pub points: &'a [Point],
    pub labels: &'a [i64],
}

impl LabeledMap<'_> {
    fn check(&self) -> Result<()> {
        if self.ids.len() != self.points.len() || self.ids.len() != self.labels.len() {
            return Err(AnalysisError::IdMismatch(format!(
                "{} ids, {} points, {} labels",
                self.ids.len(),
                self.points.len(),
                self.labels.len()
            )));
        }
        if self.points.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(AnalysisError::NonFinite);
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub k: usize,
    pub ids: Vec<String>,
    pub per_point_agreement: Vec<f64>,
    pub mean_percent: f64,
    #[serde(default)]
    pub config_a: serde_json::Value,
    #[serde(default)]
    pub config_b: serde_json::Value,
}

/// Same-cluster neighbor sets: the `k` nearest other points (ties by
/// ascending id), then restricted to the point's own label. Noise points
/// get empty sets. Entries are indices into `order`.
fn neighbor_sets(side: &LabeledMap, order: &[usize], k: usize) -> Vec<Vec<usize>> {
    let n = order.len();
    (0..n)
        .map(|a| {
            let i = order[a];
            if side.labels[i] == NOISE {
                return Vec::new();
            }
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&b| b != a)
                .map(|b| (dist(&side.points[i], &side.points[order[b]]), b))
                .collect();
            // `order` is sorted by id, so the index breaks ties by id
            cand.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
            let mut set: Vec<usize> = cand[..k]
                .iter()
                .map(|&(_, b)| b)
                .filter(|&b| side.labels[order[b]] == side.labels[i])
                .collect();
            set.sort_unstable();
            set
        })
        .collect()
}

fn id_order(ids: &[String]) -> Result<Vec<usize>> {
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| ids[a].cmp(&ids[b]));
    if order.windows(2).any(|w| ids[w[0]] == ids[w[1]]) {
        return Err(AnalysisError::IdMismatch("duplicate segment id".into()));
    }
    Ok(order)
}

/// Cluster-constrained kNN agreement between two labeled maps over the
/// same ids. Per point: `|N_A ∩ N_B| / max(|N_A|, |N_B|)`, or 1 when both
/// sets are empty. Ids in the report are sorted.
pub fn cluster_agreement(a: &LabeledMap, b: &LabeledMap, k: usize) -> Result<AgreementReport> {
    a.check()?;
    b.check()?;
    let n = a.ids.len();
    if b.ids.len() != n {
        return Err(AnalysisError::IdMismatch(format!("{n} ids against {}", b.ids.len())));
    }
    if k == 0 || k >= n {
        return Err(AnalysisError::InvalidK { k, n });
    }
    let order_a = id_order(a.ids)?;
    let order_b = id_order(b.ids)?;
    for (&ia, &ib) in order_a.iter().zip(&order_b) {
        if a.ids[ia] != b.ids[ib] {
            return Err(AnalysisError::IdMismatch(format!(
                "id {} has no counterpart",
                (&a.ids[ia]).min(&b.ids[ib])
            )));
        }
    }
    let na = neighbor_sets(a, &order_a, k);
    let nb = neighbor_sets(b, &order_b, k);
    let per_point: Vec<f64> = na
        .iter()
        .zip(&nb)
        .map(|(sa, sb)| {
            let denom = sa.len().max(sb.len());
            if denom == 0 {
                1.0
            } else {
                let shared = sa.iter().filter(|x| sb.binary_search(x).is_ok()).count();
                shared as f64 / denom as f64
            }
        })
        .collect();
    let mean_percent = 100.0 * per_point.iter().sum::<f64>() / n as f64;
    Ok(AgreementReport {
        k,
        ids: order_a.iter().map(|&i| a.ids[i].clone()).collect(),
        per_point_agreement: per_point,
        mean_percent,
        config_a: serde_json::Value::Null,
        config_b: serde_json::Value::Null,
    })
}

/// Reorders `values` from `ids` order into `target` order.
pub fn align_by_id<T: Clone>(ids: &[String], values: &[T], target: &[String]) -> Result<Vec<T>> {
    let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    target
        .iter()
        .map(|id| {
            index
                .get(id.as_str())
                .map(|&i| values[i].clone())
                .ok_or_else(|| AnalysisError::IdMismatch(format!("missing id {id}")))
        })
        .collect()
}
