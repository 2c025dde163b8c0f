use nalgebra::DMatrix;

use crate::error::{ProjectionError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct PcaResult {
    /// `n × out_dims` scores
    pub scores: Vec<Vec<f64>>,
    /// `out_dims` unit loading vectors of length `D`
    pub components: Vec<Vec<f64>>,
    /// fraction of total variance captured by each kept component
    pub explained_variance_ratio: Vec<f64>,
}

pub(crate) fn check_rows(rows: &[Vec<f64>]) -> Result<usize> {
    let d = rows.first().map_or(0, Vec::len);
    if d == 0 || rows.iter().any(|r| r.len() != d || r.iter().any(|v| !v.is_finite())) {
        return Err(ProjectionError::InvalidInput);
    }
    Ok(d)
}

/// Principal component scores via SVD of the column-centered matrix.
///
/// Each component is signed so that its largest-magnitude loading is
/// positive.
pub fn pca(rows: &[Vec<f64>], out_dims: usize) -> Result<PcaResult> {
    let n = rows.len();
    if n < 2 {
        return Err(ProjectionError::TooFewPoints { needed: 2, got: n });
    }
    let d = check_rows(rows)?;
    if d < out_dims || out_dims == 0 {
        return Err(ProjectionError::TooFewDims { dims: d, out_dims });
    }
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let x = DMatrix::from_fn(n, d, |i, j| rows[i][j] - mean[j]);
    let total: f64 = x.iter().map(|v| v * v).sum();
    if total == 0.0 {
        return Err(ProjectionError::Degenerate);
    }
    let svd = x.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let sv = svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]).then(a.cmp(&b)));

    let mut components = Vec::with_capacity(out_dims);
    let mut ratios = Vec::with_capacity(out_dims);
    for k in 0..out_dims {
        let (mut comp, s) = match order.get(k) {
            Some(&idx) => (v_t.row(idx).iter().copied().collect::<Vec<f64>>(), sv[idx]),
            // fewer samples than requested components: no variance left
            None => (orthogonal_fill(&components, d), 0.0),
        };
        let pivot = comp
            .iter()
            .enumerate()
            .fold(0, |best, (j, v)| if v.abs() > comp[best].abs() { j } else { best });
        if comp[pivot] < 0.0 {
            comp.iter_mut().for_each(|v| *v = -*v);
        }
        components.push(comp);
        ratios.push(s * s / total);
    }
    let scores = (0..n)
        .map(|i| {
            components
                .iter()
                .map(|c| (0..d).map(|j| x[(i, j)] * c[j]).sum())
                .collect()
        })
        .collect();
    Ok(PcaResult {
        scores,
        components,
        explained_variance_ratio: ratios,
    })
}

/// A unit vector orthogonal to `basis`, by Gram–Schmidt over the
/// standard basis.
fn orthogonal_fill(basis: &[Vec<f64>], d: usize) -> Vec<f64> {
    for e in 0..d {
        let mut v = vec![0.0; d];
        v[e] = 1.0;
        for b in basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
    vec![0.0; d]
}
