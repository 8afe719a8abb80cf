//! Piecewise planar priors.
//!
//! Credible low-cost pixels of a photometric depth map are triangulated in
//! image space; every triangle's three vertices define a plane that becomes
//! the prior for all pixels it covers. The prior enters hypothesis updates
//! through [`prior_probability`] and the combined cost [`c_p_photo`].

use std::path::Path;

use nalgebra::{Vector2, Vector3};

use crate::dataset::{DepthMap, DepthRange, NormalMap};
use crate::delaunay::delaunay_triangulate;
use crate::error::{Error, Result};
use crate::geometry::{normal_angle, plane_from_points, ray_plane_depth, unproject, CameraModel, Plane3D, PlaneHypothesis};
use crate::io_util::write_atomic;
use crate::patchmatch::HypothesisMap;

/// A pixel whose final photometric cost marks it as a reliable estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CredibleEntry {
    pub pixel: (usize, usize),
    pub hypothesis: PlaneHypothesis,
    pub cost: f64,
}

pub type CredibleSet = Vec<CredibleEntry>;

/// All pixels with cost strictly below `epsilon`, in scanline order.
pub fn select_credible(map: &HypothesisMap, epsilon: f64) -> Result<CredibleSet> {
    let mut out = Vec::new();
    for y in 0..map.height {
        for x in 0..map.width {
            let cost = map.cost(x, y);
            if cost < epsilon {
                out.push(CredibleEntry {
                    pixel: (x, y),
                    hypothesis: *map.hypothesis(x, y),
                    cost,
                });
            }
        }
    }
    if out.len() < 3 {
        return Err(Error::InsufficientSupport(format!(
            "{} credible pixels below cost {epsilon}",
            out.len()
        )));
    }
    Ok(out)
}

/// Caps the density at one point per 2x2 cell when more than a quarter of
/// the image is credible, keeping the cheapest entry of each cell.
pub fn limit_density(set: CredibleSet, width: usize, height: usize) -> CredibleSet {
    if set.len() * 4 <= width * height {
        return set;
    }
    let cells_x = width.div_ceil(2);
    let mut best: Vec<Option<usize>> = vec![None; cells_x * height.div_ceil(2)];
    for (i, e) in set.iter().enumerate() {
        let cell = (e.pixel.1 / 2) * cells_x + e.pixel.0 / 2;
        match best[cell] {
            Some(j) if set[j].cost <= e.cost => {}
            _ => best[cell] = Some(i),
        }
    }
    let mut keep: Vec<usize> = best.into_iter().flatten().collect();
    keep.sort_unstable();
    keep.into_iter().map(|i| set[i]).collect()
}

/// Delaunay triangulation of credible pixels.
#[derive(Debug, Clone)]
pub struct Triangulation {
    pub vertices: CredibleSet,
    /// Counterclockwise (in pixel coordinates) index triples into `vertices`.
    pub triangles: Vec<[usize; 3]>,
}

impl Triangulation {
    pub fn build(vertices: CredibleSet) -> Result<Self> {
        let points: Vec<[f64; 2]> = vertices.iter().map(|e| [e.pixel.0 as f64, e.pixel.1 as f64]).collect();
        let triangles = delaunay_triangulate(&points)?;
        Ok(Triangulation { vertices, triangles })
    }

    pub fn points(&self) -> Vec<[f64; 2]> {
        self.vertices.iter().map(|e| [e.pixel.0 as f64, e.pixel.1 as f64]).collect()
    }

    /// OFF-style text dump: `OFF`, `nv nt 0`, one `x y depth` line per
    /// vertex, then one `3 i j k` line per triangle.
    pub fn save_off(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), |w| {
            writeln!(w, "OFF")?;
            writeln!(w, "{} {} 0", self.vertices.len(), self.triangles.len())?;
            for v in &self.vertices {
                writeln!(w, "{} {} {}", v.pixel.0, v.pixel.1, v.hypothesis.depth)?;
            }
            for t in &self.triangles {
                writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
            }
            Ok(())
        })
    }
}

/// Plane of every triangle in reference-camera coordinates, `None` for
/// triangles that are degenerate in 3D.
pub fn triangle_planes(tri: &Triangulation, cam: &CameraModel) -> Vec<Option<Plane3D>> {
    let lifted: Vec<Option<Vector3<f64>>> = tri
        .vertices
        .iter()
        .map(|e| {
            let p = Vector2::new(e.pixel.0 as f64, e.pixel.1 as f64);
            unproject(p, e.hypothesis.depth, cam).ok()
        })
        .collect();
    tri.triangles
        .iter()
        .map(|t| {
            let (a, b, c) = (lifted[t[0]]?, lifted[t[1]]?, lifted[t[2]]?);
            plane_from_points(&a, &b, &c).ok()
        })
        .collect()
}

#[inline]
fn edge_fn(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// Pixels owned by one counterclockwise triangle under the top-left rule:
/// centers strictly inside, plus centers on an edge `a -> b` with
/// `b.y < a.y`, or `b.y == a.y` and `b.x > a.x`.
///
/// Equivalent to testing the center nudged by an infinitesimal
/// `(e, e^2)`, so triangles of a triangulation never share a pixel.
pub fn triangle_pixels(a: [f64; 2], b: [f64; 2], c: [f64; 2], width: usize, height: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for_each_in_bbox(a, b, c, width, height, |x, y| {
        let p = [x as f64, y as f64];
        let owns = |u: [f64; 2], v: [f64; 2]| {
            let e = edge_fn(u, v, p);
            e > 0.0 || (e == 0.0 && (v[1] < u[1] || (v[1] == u[1] && v[0] > u[0])))
        };
        if owns(a, b) && owns(b, c) && owns(c, a) {
            out.push((x, y));
        }
    });
    out
}

fn for_each_in_bbox(a: [f64; 2], b: [f64; 2], c: [f64; 2], width: usize, height: usize, mut f: impl FnMut(usize, usize)) {
    let min_x = a[0].min(b[0]).min(c[0]).ceil().max(0.0);
    let max_x = a[0].max(b[0]).max(c[0]).floor().min(width as f64 - 1.0);
    let min_y = a[1].min(b[1]).min(c[1]).ceil().max(0.0);
    let max_y = a[1].max(b[1]).max(c[1]).floor().min(height as f64 - 1.0);
    if min_x > max_x || min_y > max_y {
        return;
    }
    for y in min_y as usize..=max_y as usize {
        for x in min_x as usize..=max_x as usize {
            f(x, y);
        }
    }
}

/// Owning triangle of every pixel. Top-left ownership first; pixel centers
/// on the hull boundary left unowned by that rule go to the lowest-index
/// triangle containing them.
pub fn rasterize_triangles(points: &[[f64; 2]], triangles: &[[usize; 3]], width: usize, height: usize) -> Vec<Option<u32>> {
    let mut owner = vec![None; width * height];
    for (ti, t) in triangles.iter().enumerate() {
        for (x, y) in triangle_pixels(points[t[0]], points[t[1]], points[t[2]], width, height) {
            owner[y * width + x] = Some(ti as u32);
        }
    }
    for (ti, t) in triangles.iter().enumerate() {
        let (a, b, c) = (points[t[0]], points[t[1]], points[t[2]]);
        for_each_in_bbox(a, b, c, width, height, |x, y| {
            let idx = y * width + x;
            if owner[idx].is_some() {
                return;
            }
            let p = [x as f64, y as f64];
            if edge_fn(a, b, p) >= 0.0 && edge_fn(b, c, p) >= 0.0 && edge_fn(c, a, p) >= 0.0 {
                owner[idx] = Some(ti as u32);
            }
        });
    }
    owner
}

/// Prior plane at one pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanePrior {
    pub depth: f64,
    pub normal: Vector3<f64>,
}

/// Per-pixel planar prior of one reference image.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorModel {
    pub width: usize,
    pub height: usize,
    pub priors: Vec<Option<PlanePrior>>,
}

impl PriorModel {
    pub fn empty(width: usize, height: usize) -> Self {
        PriorModel {
            width,
            height,
            priors: vec![None; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<&PlanePrior> {
        self.priors[y * self.width + x].as_ref()
    }

    pub fn coverage(&self) -> usize {
        self.priors.iter().filter(|p| p.is_some()).count()
    }

    pub fn depth_map(&self) -> DepthMap {
        DepthMap {
            width: self.width,
            height: self.height,
            values: self.priors.iter().map(|p| p.map_or(0.0, |p| p.depth as f32)).collect(),
        }
    }

    pub fn normal_map(&self) -> NormalMap {
        let mut map = NormalMap::new(self.width, self.height);
        for (i, p) in self.priors.iter().enumerate() {
            if let Some(p) = p {
                map.set(i % self.width, i / self.width, &p.normal);
            }
        }
        map
    }
}

/// Rasterizes per-triangle planes into a per-pixel prior; depths are the
/// exact ray-plane intersections clamped to `range`.
pub fn rasterize_prior(
    tri: &Triangulation,
    planes: &[Option<Plane3D>],
    cam: &CameraModel,
    range: &DepthRange,
) -> PriorModel {
    let (w, h) = (cam.width, cam.height);
    let owners = rasterize_triangles(&tri.points(), &tri.triangles, w, h);
    let mut model = PriorModel::empty(w, h);
    for (idx, owner) in owners.iter().enumerate() {
        let Some(plane) = owner.and_then(|t| planes[t as usize]) else {
            continue;
        };
        let pixel = Vector2::new((idx % w) as f64, (idx / w) as f64);
        if let Ok(depth) = ray_plane_depth(pixel, &plane, cam) {
            model.priors[idx] = Some(PlanePrior {
                depth: range.clamp(depth),
                normal: plane.normal,
            });
        }
    }
    model
}

pub fn build_prior_model(tri: &Triangulation, cam: &CameraModel, range: &DepthRange) -> PriorModel {
    rasterize_prior(tri, &triangle_planes(tri, cam), cam, range)
}

/// Constants of the planar-prior cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorParams {
    pub alpha: f64,
    pub gamma: f64,
    /// Depth bandwidth (squared depth units).
    pub lambda_d: f64,
    /// Normal bandwidth (radians, used unsquared).
    pub lambda_n: f64,
}

impl PriorParams {
    /// Defaults with the depth bandwidth set to `1/divisor` of the depth
    /// interval.
    pub fn for_range(range: &DepthRange, divisor: f64) -> Self {
        PriorParams {
            alpha: 0.18,
            gamma: 0.5,
            lambda_d: range.interval() / divisor,
            lambda_n: 5f64.to_radians(),
        }
    }
}

/// `gamma + exp(-(d - d_p)^2 / (2 lambda_d)) * exp(-angle(n, n_p)^2 / (2 lambda_n))`.
#[inline]
pub fn prior_probability(theta: &PlaneHypothesis, prior: &PlanePrior, params: &PriorParams) -> f64 {
    let dd = theta.depth - prior.depth;
    let angle = normal_angle(&theta.normal, &prior.normal);
    params.gamma + (-dd * dd / (2.0 * params.lambda_d)).exp() * (-angle * angle / (2.0 * params.lambda_n)).exp()
}

/// Planar-prior assisted cost `c^2 / alpha - ln P(theta | prior)`. Pixels
/// without a prior use the constant `1 + gamma`.
#[inline]
pub fn c_p_photo(theta: &PlaneHypothesis, c: f64, prior: Option<&PlanePrior>, params: &PriorParams) -> f64 {
    let p = match prior {
        Some(prior) => prior_probability(theta, prior, params),
        None => 1.0 + params.gamma,
    };
    c * c / params.alpha - p.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> PriorParams {
        PriorParams {
            alpha: 0.18,
            gamma: 0.5,
            lambda_d: 0.05,
            lambda_n: 5f64.to_radians(),
        }
    }

    fn fronto() -> PlanePrior {
        PlanePrior {
            depth: 2.0,
            normal: Vector3::new(0.0, 0.0, -1.0),
        }
    }

    #[test]
    fn prior_probability_cases() {
        let p = params();
        let at_prior = PlaneHypothesis::fronto(2.0);
        assert_relative_eq!(prior_probability(&at_prior, &fronto(), &p), 1.5, epsilon = 1e-15);
        let far = PlaneHypothesis::fronto(1e6);
        assert_eq!(prior_probability(&far, &fronto(), &p), 0.5);
        let one_sigma = PlaneHypothesis::fronto(2.0 + (2.0 * p.lambda_d).sqrt());
        assert_relative_eq!(prior_probability(&one_sigma, &fronto(), &p), 0.5 + (-1.0f64).exp(), epsilon = 1e-12);
        assert_relative_eq!(0.5 + (-1.0f64).exp(), 0.8679, epsilon = 1e-4);
    }

    #[test]
    fn c_p_photo_cases() {
        let p = params();
        let theta = PlaneHypothesis::fronto(2.0);
        assert_relative_eq!(c_p_photo(&theta, 0.0, Some(&fronto()), &p), -(1.5f64.ln()), epsilon = 1e-15);
        assert_relative_eq!(-(1.5f64.ln()), -0.4055, epsilon = 1e-4);
        let far = PlaneHypothesis::fronto(1e6);
        let v = c_p_photo(&far, 2.0, Some(&fronto()), &p);
        assert_relative_eq!(v, 4.0 / 0.18 - 0.5f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(v, 22.915, epsilon = 1e-3);
        assert!(c_p_photo(&theta, 0.3, Some(&fronto()), &p) > c_p_photo(&theta, 0.2, Some(&fronto()), &p));
    }

    #[test]
    fn missing_prior_uses_constant() {
        let p = params();
        let theta = PlaneHypothesis::fronto(3.0);
        assert_relative_eq!(c_p_photo(&theta, 0.4, None, &p), 0.16 / 0.18 - 1.5f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn limit_density_keeps_cheapest_per_cell() {
        let entry = |x, y, cost| CredibleEntry {
            pixel: (x, y),
            hypothesis: PlaneHypothesis::fronto(1.0),
            cost,
        };
        let set = vec![entry(0, 0, 0.05), entry(1, 0, 0.01), entry(0, 1, 0.02), entry(3, 1, 0.03)];
        let out = limit_density(set, 4, 2);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].pixel, (1, 0));
        assert_eq!(out[1].pixel, (3, 1));
    }

    #[test]
    fn fronto_vertices_give_fronto_prior() {
        let cam = CameraModel::identity(20.0, 20.0, 10.0, 10.0, 21, 21).unwrap();
        let entry = |x, y| CredibleEntry {
            pixel: (x, y),
            hypothesis: PlaneHypothesis::fronto(2.0),
            cost: 0.0,
        };
        let tri = Triangulation::build(vec![entry(2, 2), entry(18, 3), entry(9, 17)]).unwrap();
        let range = DepthRange::new(1.0, 3.0).unwrap();
        let model = build_prior_model(&tri, &cam, &range);
        assert!(model.coverage() > 50);
        for p in model.priors.iter().flatten() {
            assert_relative_eq!(p.depth, 2.0, epsilon = 1e-12);
            assert_relative_eq!(p.normal, Vector3::new(0.0, 0.0, -1.0), epsilon = 1e-12);
        }
        assert!(model.get(0, 20).is_none());
    }
}
