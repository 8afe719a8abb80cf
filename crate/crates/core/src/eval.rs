//! Depth-map and point-cloud metrics.
//!
//! Reports are written as flat `key=value` lines and as JSON with the same
//! keys, e.g. `{"valid_pixels": 76800, "within_0.02": 0.97}` for depth
//! and `{"tau": 0.03, "accuracy": ..., "completeness": ..., "f1": ...}` for
//! clouds.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::Vector3;
use serde::Serialize;

use crate::dataset::DepthMap;
use crate::error::{Error, Result};
use crate::fusion::PointCloud;
use crate::io_util::write_atomic;

/// Fraction of GT-valid pixels with absolute error below each threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DepthMetrics {
    pub thresholds: Vec<f64>,
    pub fractions: Vec<f64>,
    pub valid_pixels: usize,
}

impl DepthMetrics {
    pub fn key_values(&self) -> Vec<(String, f64)> {
        let mut out = vec![("valid_pixels".to_string(), self.valid_pixels as f64)];
        for (t, f) in self.thresholds.iter().zip(&self.fractions) {
            out.push((format!("within_{t}"), *f));
        }
        out
    }
}

fn check_dims(est: &DepthMap, gt: &DepthMap) -> Result<()> {
    if (est.width, est.height) != (gt.width, gt.height) {
        return Err(Error::InvalidArgument(format!(
            "estimate is {}x{} but ground truth is {}x{}",
            est.width, est.height, gt.width, gt.height
        )));
    }
    Ok(())
}

/// Absolute error of an estimate, infinite when the estimate is missing.
#[inline]
fn abs_error(est: f32, gt: f32) -> f64 {
    if est > 0.0 && est.is_finite() {
        (est as f64 - gt as f64).abs()
    } else {
        f64::INFINITY
    }
}

/// Counts only pixels with valid ground truth; invalid estimates count as
/// errors.
pub fn depth_metrics(est: &DepthMap, gt: &DepthMap, thresholds: &[f64]) -> Result<DepthMetrics> {
    check_dims(est, gt)?;
    let mut hits = vec![0usize; thresholds.len()];
    let mut valid = 0usize;
    for (&e, &g) in est.values.iter().zip(&gt.values) {
        if !(g > 0.0 && g.is_finite()) {
            continue;
        }
        valid += 1;
        let err = abs_error(e, g);
        for (h, &t) in hits.iter_mut().zip(thresholds) {
            if err < t {
                *h += 1;
            }
        }
    }
    if valid == 0 {
        return Err(Error::EmptyGroundTruth);
    }
    Ok(DepthMetrics {
        thresholds: thresholds.to_vec(),
        fractions: hits.iter().map(|&h| h as f64 / valid as f64).collect(),
        valid_pixels: valid,
    })
}

/// Fraction of GT-valid pixels (restricted to `mask` when given) whose
/// relative depth error is below `rel_tol`.
pub fn relative_accuracy(est: &DepthMap, gt: &DepthMap, rel_tol: f64, mask: Option<&[bool]>) -> Result<f64> {
    check_dims(est, gt)?;
    if mask.is_some_and(|m| m.len() != gt.values.len()) {
        return Err(Error::InvalidArgument("mask size does not match the depth map".into()));
    }
    let (mut valid, mut hits) = (0usize, 0usize);
    for (i, (&e, &g)) in est.values.iter().zip(&gt.values).enumerate() {
        if !(g > 0.0 && g.is_finite()) || mask.is_some_and(|m| !m[i]) {
            continue;
        }
        valid += 1;
        if abs_error(e, g) / (g as f64) < rel_tol {
            hits += 1;
        }
    }
    if valid == 0 {
        return Err(Error::EmptyGroundTruth);
    }
    Ok(hits as f64 / valid as f64)
}

/// Bidirectional nearest-neighbor agreement between two clouds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CloudMetrics {
    pub tau: f64,
    pub accuracy: f64,
    pub completeness: f64,
    pub f1: f64,
}

impl CloudMetrics {
    pub fn key_values(&self) -> Vec<(String, f64)> {
        vec![
            ("tau".into(), self.tau),
            ("accuracy".into(), self.accuracy),
            ("completeness".into(), self.completeness),
            ("f1".into(), self.f1),
        ]
    }
}

/// Uniform hash grid with cell size `tau` for exact radius queries.
struct Grid<'a> {
    cell: f64,
    points: &'a [Vector3<f64>],
    cells: HashMap<[i64; 3], Vec<usize>>,
}

impl<'a> Grid<'a> {
    fn new(points: &'a [Vector3<f64>], cell: f64) -> Self {
        let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, cell)).or_default().push(i);
        }
        Grid { cell, points, cells }
    }

    fn key(p: &Vector3<f64>, cell: f64) -> [i64; 3] {
        [
            (p.x / cell).floor() as i64,
            (p.y / cell).floor() as i64,
            (p.z / cell).floor() as i64,
        ]
    }

    /// Any point within distance `cell` (inclusive) of `q`.
    fn has_neighbor(&self, q: &Vector3<f64>) -> bool {
        let k = Self::key(q, self.cell);
        let r2 = self.cell * self.cell;
        for dz in -1..=1 {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    if let Some(ids) = self.cells.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        if ids.iter().any(|&i| (self.points[i] - q).norm_squared() <= r2) {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }
}

/// Fraction of `from` points with a `to` point within `tau`.
pub fn fraction_within(from: &[Vector3<f64>], to: &[Vector3<f64>], tau: f64) -> f64 {
    let grid = Grid::new(to, tau);
    let hits = from.iter().filter(|q| grid.has_neighbor(q)).count();
    hits as f64 / from.len().max(1) as f64
}

pub fn f1_score(accuracy: f64, completeness: f64) -> f64 {
    if accuracy + completeness == 0.0 {
        0.0
    } else {
        2.0 * accuracy * completeness / (accuracy + completeness)
    }
}

/// Accuracy (estimate points near ground truth), completeness (ground
/// truth points near the estimate) and their harmonic mean, at distance
/// `tau`.
pub fn cloud_metrics(est: &PointCloud, gt: &PointCloud, tau: f64) -> Result<CloudMetrics> {
    if est.is_empty() || gt.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!("tau must be positive, got {tau}")));
    }
    let accuracy = fraction_within(&est.positions, &gt.positions, tau);
    let completeness = fraction_within(&gt.positions, &est.positions, tau);
    Ok(CloudMetrics {
        tau,
        accuracy,
        completeness,
        f1: f1_score(accuracy, completeness),
    })
}

/// Writes `key=value` lines.
pub fn write_report(path: impl AsRef<Path>, values: &[(String, f64)]) -> Result<()> {
    write_atomic(path.as_ref(), |w| {
        for (k, v) in values {
            writeln!(w, "{k}={v}")?;
        }
        Ok(())
    })
}

/// Writes the same pairs as a flat JSON object.
pub fn write_json(path: impl AsRef<Path>, values: &[(String, f64)]) -> Result<()> {
    let map: serde_json::Map<String, serde_json::Value> =
        values.iter().map(|(k, v)| (k.clone(), serde_json::json!(v))).collect();
    let text = serde_json::to_string_pretty(&map).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    write_atomic(path.as_ref(), |w| writeln!(w, "{text}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(values: Vec<f32>) -> DepthMap {
        DepthMap {
            width: values.len(),
            height: 1,
            values,
        }
    }

    #[test]
    fn identical_maps_are_perfect() {
        let gt = map(vec![1.0, 2.0, 3.0, 0.0]);
        let m = depth_metrics(&gt, &gt, &[0.02, 0.1]).unwrap();
        assert_eq!(m.fractions, vec![1.0, 1.0]);
        assert_eq!(m.valid_pixels, 3);
    }

    #[test]
    fn half_and_half() {
        let gt = map(vec![1.0; 4]);
        let est = map(vec![1.01, 1.01, 1.05, 1.05]);
        let m = depth_metrics(&est, &gt, &[0.02]).unwrap();
        assert_eq!(m.fractions, vec![0.5]);
    }

    #[test]
    fn invalid_estimates_count_as_errors() {
        let gt = map(vec![1.0, 1.0]);
        let est = map(vec![0.0, 1.0]);
        assert_eq!(depth_metrics(&est, &gt, &[10.0]).unwrap().fractions, vec![0.5]);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            depth_metrics(&map(vec![1.0]), &map(vec![0.0]), &[0.1]),
            Err(Error::EmptyGroundTruth)
        ));
        assert!(matches!(
            depth_metrics(&map(vec![1.0]), &map(vec![1.0, 1.0]), &[0.1]),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            cloud_metrics(&PointCloud::default(), &PointCloud::default(), 0.1),
            Err(Error::EmptyCloud)
        ));
    }

    #[test]
    fn outlier_lowers_accuracy_only() {
        let pts: Vec<Vector3<f64>> = (0..10).map(|i| Vector3::new(i as f64 * 0.1, 0.0, 1.0)).collect();
        let gt = PointCloud {
            normals: vec![Vector3::z(); pts.len()],
            positions: pts.clone(),
            colors: None,
        };
        let mut est = gt.clone();
        est.positions.push(Vector3::new(50.0, 0.0, 0.0));
        est.normals.push(Vector3::z());
        let m = cloud_metrics(&est, &gt, 0.05).unwrap();
        assert_eq!(m.completeness, 1.0);
        assert_eq!(m.accuracy, 10.0 / 11.0);
        let same = cloud_metrics(&gt, &gt, 0.05).unwrap();
        assert_eq!((same.accuracy, same.completeness, same.f1), (1.0, 1.0, 1.0));
    }
}
