//! Multi-view geometric consistency cost.

use nalgebra::Vector2;

use crate::dataset::DepthMap;
use crate::error::{Error, Result};
use crate::geometry::{reprojection_error, CameraModel, PlaneHypothesis};
use crate::photometric::ViewWeights;

/// Source depth maps and constants of the geometric-consistency cost.
#[derive(Debug, Clone)]
pub struct GeomContext {
    pub source_depths: Vec<DepthMap>,
    pub source_cams: Vec<CameraModel>,
    pub lambda_geo: f64,
    pub tau_geo: f64,
}

impl GeomContext {
    pub fn new(source_depths: Vec<DepthMap>, source_cams: Vec<CameraModel>, lambda_geo: f64, tau_geo: f64) -> Result<Self> {
        if !(lambda_geo >= 0.0) || !(tau_geo > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "lambda_geo must be >= 0 and tau_geo > 0, got {lambda_geo} and {tau_geo}"
            )));
        }
        if source_depths.len() != source_cams.len() {
            return Err(Error::InvalidArgument(format!(
                "{} source depth maps for {} source cameras",
                source_depths.len(),
                source_cams.len()
            )));
        }
        for (d, c) in source_depths.iter().zip(&source_cams) {
            if (d.width, d.height) != (c.width, c.height) {
                return Err(Error::InvalidArgument(format!(
                    "source depth map is {}x{} but its camera is {}x{}",
                    d.width, d.height, c.width, c.height
                )));
            }
        }
        Ok(GeomContext {
            source_depths,
            source_cams,
            lambda_geo,
            tau_geo,
        })
    }

    pub fn n_sources(&self) -> usize {
        self.source_cams.len()
    }

    /// Forward-backward reprojection error of `theta` against every source.
    pub fn reprojection_errors(&self, theta: &PlaneHypothesis, pixel: Vector2<f64>, cam_ref: &CameraModel) -> Vec<f64> {
        self.source_cams
            .iter()
            .zip(&self.source_depths)
            .map(|(cam, depth)| reprojection_error(theta, pixel, cam_ref, cam, depth))
            .collect()
    }

    pub fn cost(
        &self,
        theta: &PlaneHypothesis,
        pixel: Vector2<f64>,
        cam_ref: &CameraModel,
        weights: &ViewWeights,
        costs: &[f64],
    ) -> Result<f64> {
        let errors = self.reprojection_errors(theta, pixel, cam_ref);
        c_geo(weights, costs, &errors, self.lambda_geo, self.tau_geo)
    }
}

/// `sum_j w_j (m_j + lambda_geo min(e_j, tau_geo)) / sum_j w_j`.
pub fn c_geo(weights: &ViewWeights, costs: &[f64], reproj_errors: &[f64], lambda_geo: f64, tau_geo: f64) -> Result<f64> {
    debug_assert_eq!(weights.weights.len(), costs.len());
    debug_assert_eq!(costs.len(), reproj_errors.len());
    let (mut num, mut den) = (0.0, 0.0);
    for ((w, m), e) in weights.weights.iter().zip(costs).zip(reproj_errors) {
        num += w * (m + lambda_geo * e.min(tau_geo));
        den += w;
    }
    if !(den > 0.0) {
        return Err(Error::UnreliablePixel);
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photometric::{c_photo, VisibilityMask};
    use approx::assert_relative_eq;

    fn weights(w: &[f64]) -> ViewWeights {
        ViewWeights {
            weights: w.to_vec(),
            visibility: VisibilityMask::all(w.len()),
        }
    }

    #[test]
    fn zero_error_reduces_to_photometric() {
        let w = weights(&[0.3, 1.0, 0.7]);
        let m = [0.2, 0.05, 0.9];
        assert_eq!(c_geo(&w, &m, &[0.0; 3], 0.1, 5.0).unwrap(), c_photo(&w, &m).unwrap());
    }

    #[test]
    fn truncated_single_view() {
        let v = c_geo(&weights(&[1.0]), &[0.3], &[10.0], 0.1, 5.0).unwrap();
        assert_relative_eq!(v, 0.8, epsilon = 1e-15);
        let inf = c_geo(&weights(&[1.0]), &[0.3], &[f64::INFINITY], 0.1, 5.0).unwrap();
        assert_eq!(v, inf);
    }

    #[test]
    fn two_views() {
        let v = c_geo(&weights(&[1.0, 1.0]), &[0.2, 0.4], &[1.0, 2.0], 0.1, 5.0).unwrap();
        assert_relative_eq!(v, 0.45, epsilon = 1e-15);
    }

    #[test]
    fn zero_weights_are_unreliable() {
        assert!(matches!(
            c_geo(&weights(&[0.0, 0.0]), &[0.2, 0.4], &[1.0, 2.0], 0.1, 5.0),
            Err(Error::UnreliablePixel)
        ));
    }
}
