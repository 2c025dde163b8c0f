use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::cluster::Point;
use crate::error::{AnalysisError, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    #[default]
    None,
    Procrustes,
}

/// Similarity transform `x ↦ scale·R(θ)·x + translation`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Similarity {
    pub rotation_rad: f64,
    pub scale: f64,
    pub translation: [f64; 2],
}

impl Similarity {
    pub const IDENTITY: Self = Self {
        rotation_rad: 0.0,
        scale: 1.0,
        translation: [0.0, 0.0],
    };

    pub fn apply(&self, p: &Point) -> Point {
        let (s, c) = self.rotation_rad.sin_cos();
        [
            self.scale * (c * p[0] - s * p[1]) + self.translation[0],
            self.scale * (s * p[0] + c * p[1]) + self.translation[1],
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisplacementSummary {
    pub mean_len: f64,
    pub median_len: f64,
    pub p95_len: f64,
    /// length of the mean unit displacement, in `[0, 1]`
    pub mean_direction_resultant: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceReport {
    pub ids: Vec<String>,
    pub a: Vec<Point>,
    /// B after alignment
    pub b: Vec<Point>,
    /// `a − b` per pair
    pub displacements: Vec<[f64; 2]>,
    pub summary: DisplacementSummary,
    pub alignment: Alignment,
    pub transform: Similarity,
}

/// Least-squares similarity (no reflection) mapping `b` onto `a`.
pub fn procrustes(a: &[Point], b: &[Point]) -> Similarity {
    let n = a.len() as f64;
    let ma = [a.iter().map(|p| p[0]).sum::<f64>() / n, a.iter().map(|p| p[1]).sum::<f64>() / n];
    let mb = [b.iter().map(|p| p[0]).sum::<f64>() / n, b.iter().map(|p| p[1]).sum::<f64>() / n];
    let (mut dot, mut cross, mut norm_b) = (0.0, 0.0, 0.0);
    for (p, q) in a.iter().zip(b) {
        let (ax, ay) = (p[0] - ma[0], p[1] - ma[1]);
        let (bx, by) = (q[0] - mb[0], q[1] - mb[1]);
        dot += ax * bx + ay * by;
        cross += bx * ay - by * ax;
        norm_b += bx * bx + by * by;
    }
    let theta = cross.atan2(dot);
    let scale = if norm_b > 0.0 { (dot * dot + cross * cross).sqrt() / norm_b } else { 0.0 };
    let rotated = Similarity {
        rotation_rad: theta,
        scale,
        translation: [0.0, 0.0],
    }
    .apply(&mb);
    Similarity {
        rotation_rad: theta,
        scale,
        translation: [ma[0] - rotated[0], ma[1] - rotated[1]],
    }
}

/// Linear-interpolation quantile of ascending `sorted`.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Pairs same-id points of two projections, optionally aligns B onto A,
/// and summarizes the displacements `A − B'`. Pairs follow A's order.
pub fn correspondence(
    ids_a: &[String],
    a: &[Point],
    ids_b: &[String],
    b: &[Point],
    alignment: Alignment,
) -> Result<CorrespondenceReport> {
    if ids_a.len() != a.len() || ids_b.len() != b.len() {
        return Err(AnalysisError::IdMismatch("ids and points differ in length".into()));
    }
    let index_b: HashMap<&str, usize> = ids_b.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut ids = Vec::new();
    let mut pa = Vec::new();
    let mut pb = Vec::new();
    for (i, id) in ids_a.iter().enumerate() {
        if let Some(&j) = index_b.get(id.as_str()) {
            ids.push(id.clone());
            pa.push(a[i]);
            pb.push(b[j]);
        }
    }
    let needed = match alignment {
        Alignment::None => 1,
        Alignment::Procrustes => 3,
    };
    if ids.len() < needed {
        return Err(AnalysisError::TooFewPoints { needed, got: ids.len() });
    }
    if pa.iter().chain(&pb).any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(AnalysisError::NonFinite);
    }
    let transform = match alignment {
        Alignment::None => Similarity::IDENTITY,
        Alignment::Procrustes => procrustes(&pa, &pb),
    };
    let pb: Vec<Point> = pb.iter().map(|p| transform.apply(p)).collect();
    let displacements: Vec<[f64; 2]> = pa.iter().zip(&pb).map(|(p, q)| [p[0] - q[0], p[1] - q[1]]).collect();
    let summary = summarize(&displacements);
    Ok(CorrespondenceReport {
        ids,
        a: pa,
        b: pb,
        displacements,
        summary,
        alignment,
        transform,
    })
}

fn summarize(displacements: &[[f64; 2]]) -> DisplacementSummary {
    let n = displacements.len() as f64;
    let mut lens: Vec<f64> = displacements.iter().map(|d| d[0].hypot(d[1])).collect();
    let mut unit = [0.0, 0.0];
    for (d, &l) in displacements.iter().zip(&lens) {
        if l > 0.0 {
            unit[0] += d[0] / l;
            unit[1] += d[1] / l;
        }
    }
    let mean_len = lens.iter().sum::<f64>() / n;
    lens.sort_by(f64::total_cmp);
    DisplacementSummary {
        mean_len,
        median_len: quantile(&lens, 0.5),
        p95_len: quantile(&lens, 0.95),
        mean_direction_resultant: (unit[0].hypot(unit[1]) / n).min(1.0),
    }
}
