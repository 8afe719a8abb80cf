//! Projective geometry for calibrated pinhole cameras.
//!
//! Pixel coordinates are continuous with integer values at pixel centers, so
//! pixel `(u, v)` of a `width x height` image spans `[u - 0.5, u + 0.5)`.
//! Depth is always the z-coordinate in the camera frame: a pixel `p` at
//! depth `d` unprojects to `d * K^-1 [p, 1]`.

use nalgebra::{Matrix3, Vector2, Vector3};

use crate::dataset::DepthMap;
use crate::error::{Error, Result};

const ROTATION_TOL: f64 = 1e-9;

/// Calibrated pinhole camera with a world-to-camera pose `X_c = R X_w + t`.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub width: usize,
    pub height: usize,
}

impl CameraModel {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let cam = CameraModel {
            fx,
            fy,
            cx,
            cy,
            rotation,
            translation,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera at the world origin looking down +z.
    pub fn identity(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        Self::new(fx, fy, cx, cy, Matrix3::identity(), Vector3::zeros(), width, height)
    }

    /// Camera centered at `eye` looking at `target`, with image rows
    /// growing along the world direction closest to `down`.
    pub fn look_at(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        eye: Vector3<f64>,
        target: Vector3<f64>,
        down: Vector3<f64>,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let z = (target - eye)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidArgument("look_at: eye equals target".into()))?;
        let x = down
            .cross(&z)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidArgument("look_at: down is parallel to view".into()))?;
        let y = z.cross(&x);
        let rotation = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        let translation = -(rotation * eye);
        Self::new(fx, fy, cx, cy, rotation, translation, width, height)
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.rotation;
        let ortho = (r * r.transpose() - Matrix3::identity()).abs().max();
        if !ortho.is_finite() || ortho > ROTATION_TOL {
            return Err(Error::Validation(format!(
                "rotation is not orthonormal (max |R R^T - I| = {ortho:e})"
            )));
        }
        let det = r.determinant();
        if (det - 1.0).abs() > ROTATION_TOL {
            return Err(Error::Validation(format!(
                "rotation determinant is {det}, expected +1"
            )));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::Validation(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Validation("image extent must be non-zero".into()));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64 && self.cy >= 0.0 && self.cy < self.height as f64)
        {
            return Err(Error::Validation(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        if !self.translation.iter().all(|v| v.is_finite()) {
            return Err(Error::Validation("translation is not finite".into()));
        }
        Ok(())
    }

    pub fn intrinsics(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn inverse_intrinsics(&self) -> Matrix3<f64> {
        Matrix3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }

    /// Viewing ray through `pixel`, scaled so that its z-component is 1.
    #[inline]
    pub fn ray(&self, pixel: Vector2<f64>) -> Vector3<f64> {
        Vector3::new((pixel.x - self.cx) / self.fx, (pixel.y - self.cy) / self.fy, 1.0)
    }

    #[inline]
    pub fn unit_ray(&self, pixel: Vector2<f64>) -> Vector3<f64> {
        self.ray(pixel).normalize()
    }

    /// Projects a point in camera coordinates. `None` for points on or
    /// behind the image plane.
    #[inline]
    pub fn project(&self, point: &Vector3<f64>) -> Option<Vector2<f64>> {
        if point.z <= 0.0 {
            return None;
        }
        Some(Vector2::new(
            self.fx * point.x / point.z + self.cx,
            self.fy * point.y / point.z + self.cy,
        ))
    }

    #[inline]
    pub fn world_to_camera(&self, world: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * world + self.translation
    }

    #[inline]
    pub fn camera_to_world(&self, cam: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (cam - self.translation)
    }

    /// Rotates a direction from camera to world coordinates.
    #[inline]
    pub fn direction_to_world(&self, dir: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * dir
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// True when `pixel` lies inside the sampled pixel-center grid.
    #[inline]
    pub fn contains(&self, pixel: Vector2<f64>) -> bool {
        pixel.x >= 0.0
            && pixel.y >= 0.0
            && pixel.x <= (self.width - 1) as f64
            && pixel.y <= (self.height - 1) as f64
    }
}

/// Per-pixel local plane: depth at the anchor pixel and a camera-facing
/// unit normal, both in the reference camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneHypothesis {
    pub depth: f64,
    pub normal: Vector3<f64>,
}

impl PlaneHypothesis {
    pub fn new(depth: f64, normal: Vector3<f64>) -> Self {
        PlaneHypothesis { depth, normal }
    }

    /// Fronto-parallel hypothesis at `depth`.
    pub fn fronto(depth: f64) -> Self {
        PlaneHypothesis {
            depth,
            normal: Vector3::new(0.0, 0.0, -1.0),
        }
    }

    /// The 3D plane this hypothesis describes when anchored at `pixel`.
    #[inline]
    pub fn to_plane(&self, pixel: Vector2<f64>, cam: &CameraModel) -> Plane3D {
        let point = cam.ray(pixel) * self.depth;
        Plane3D {
            normal: self.normal,
            dist: -self.normal.dot(&point),
        }
    }
}

/// Plane `normal . X + dist = 0` in camera coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane3D {
    pub normal: Vector3<f64>,
    pub dist: f64,
}

impl Plane3D {
    /// Signed distance of `point` from the plane.
    #[inline]
    pub fn residual(&self, point: &Vector3<f64>) -> f64 {
        self.normal.dot(point) + self.dist
    }
}

/// Point in camera coordinates seen at `pixel` with z-depth `depth`.
pub fn unproject(pixel: Vector2<f64>, depth: f64, cam: &CameraModel) -> Result<Vector3<f64>> {
    if !(depth > 0.0) || !depth.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "unproject: depth must be positive, got {depth}"
        )));
    }
    Ok(cam.ray(pixel) * depth)
}

/// Plane through three points, normal oriented toward the camera origin.
pub fn plane_from_points(p0: &Vector3<f64>, p1: &Vector3<f64>, p2: &Vector3<f64>) -> Result<Plane3D> {
    let cross = (p1 - p0).cross(&(p2 - p0));
    let area = 0.5 * cross.norm();
    if !(area >= 1e-12) {
        return Err(Error::DegenerateTriangle { area });
    }
    let mut normal = cross / (2.0 * area);
    let centroid = (p0 + p1 + p2) / 3.0;
    if normal.dot(&centroid) > 0.0 {
        normal = -normal;
    }
    // Evaluate the offset at the centroid so the three residuals are balanced.
    let dist = -normal.dot(&centroid);
    Ok(Plane3D { normal, dist })
}

/// Depth at which the viewing ray through `pixel` meets `plane`.
pub fn ray_plane_depth(pixel: Vector2<f64>, plane: &Plane3D, cam: &CameraModel) -> Result<f64> {
    let ray = cam.ray(pixel);
    let denom = plane.normal.dot(&ray);
    if denom.abs() < 1e-12 * ray.norm() {
        return Err(Error::NoIntersection);
    }
    let depth = -plane.dist / denom;
    if !(depth > 0.0) || !depth.is_finite() {
        return Err(Error::NoIntersection);
    }
    Ok(depth)
}

/// Angle in radians between two vectors, accurate near 0 and pi.
#[inline]
pub fn normal_angle(n1: &Vector3<f64>, n2: &Vector3<f64>) -> f64 {
    n1.cross(n2).norm().atan2(n1.dot(n2))
}

/// Relative pose between a reference and a source camera, factored so that
/// plane-induced homographies cost one outer product each.
#[derive(Debug, Clone)]
pub struct ViewPair {
    /// `K_src R_rel K_ref^-1`
    rotation_part: Matrix3<f64>,
    /// `K_src t_rel`
    translation_part: Vector3<f64>,
    k_ref_inv_t: Matrix3<f64>,
    /// Source camera center in reference coordinates.
    src_center: Vector3<f64>,
}

impl ViewPair {
    pub fn new(cam_ref: &CameraModel, cam_src: &CameraModel) -> Self {
        let r_rel = cam_src.rotation * cam_ref.rotation.transpose();
        let t_rel = cam_src.translation - r_rel * cam_ref.translation;
        let k_ref_inv = cam_ref.inverse_intrinsics();
        let k_src = cam_src.intrinsics();
        ViewPair {
            rotation_part: k_src * r_rel * k_ref_inv,
            translation_part: k_src * t_rel,
            k_ref_inv_t: k_ref_inv.transpose(),
            src_center: -(r_rel.transpose() * t_rel),
        }
    }

    /// `H = K_src (R_rel - t_rel n^T / dist) K_ref^-1`.
    #[inline]
    pub fn homography(&self, plane: &Plane3D) -> Result<Matrix3<f64>> {
        let scale = plane.dist.abs().max(1.0);
        if plane.dist.abs() < 1e-12 || plane.residual(&self.src_center).abs() < 1e-12 * scale {
            return Err(Error::DegenerateHomography);
        }
        let c = self.k_ref_inv_t * plane.normal / plane.dist;
        Ok(self.rotation_part - self.translation_part * c.transpose())
    }
}

/// Homography mapping reference pixels on the hypothesis plane to their
/// projections in the source camera.
pub fn homography_from_hypothesis(
    theta: &PlaneHypothesis,
    pixel: Vector2<f64>,
    cam_ref: &CameraModel,
    cam_src: &CameraModel,
) -> Result<Matrix3<f64>> {
    let plane = theta.to_plane(pixel, cam_ref);
    ViewPair::new(cam_ref, cam_src).homography(&plane)
}

/// Applies a homography to a pixel, `None` when the result is at infinity
/// or behind the source camera.
#[inline]
pub fn apply_homography(h: &Matrix3<f64>, pixel: Vector2<f64>) -> Option<Vector2<f64>> {
    let q = h * Vector3::new(pixel.x, pixel.y, 1.0);
    if q.z <= 0.0 {
        return None;
    }
    Some(Vector2::new(q.x / q.z, q.y / q.z))
}

/// Forward-backward reprojection error in pixels: the point of `theta` at
/// `pixel` is projected into the source, lifted again with the source's
/// stored depth and projected back into the reference.
///
/// Returns `f64::INFINITY` when the point leaves the source image or the
/// source depth is unavailable there.
pub fn reprojection_error(
    theta: &PlaneHypothesis,
    pixel: Vector2<f64>,
    cam_ref: &CameraModel,
    cam_src: &CameraModel,
    depth_src: &DepthMap,
) -> f64 {
    if !(theta.depth > 0.0) {
        return f64::INFINITY;
    }
    let world = cam_ref.camera_to_world(&(cam_ref.ray(pixel) * theta.depth));
    let Some(landing) = cam_src.project(&cam_src.world_to_camera(&world)) else {
        return f64::INFINITY;
    };
    if !cam_src.contains(landing) {
        return f64::INFINITY;
    }
    let Some(src_depth) = depth_src.sample_inverse_bilinear(landing.x, landing.y) else {
        return f64::INFINITY;
    };
    let back_world = cam_src.camera_to_world(&(cam_src.ray(landing) * src_depth));
    match cam_ref.project(&cam_ref.world_to_camera(&back_world)) {
        Some(back) => (back - pixel).norm(),
        None => f64::INFINITY,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cam() -> CameraModel {
        CameraModel::identity(100.0, 100.0, 50.0, 40.0, 101, 81).unwrap()
    }

    #[test]
    fn principal_ray_unprojects_to_optical_axis() {
        let p = unproject(Vector2::new(50.0, 40.0), 1.0, &cam()).unwrap();
        assert_eq!(p, Vector3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn unproject_one_focal_length_off_axis() {
        let c = cam();
        let p = unproject(Vector2::new(c.cx + c.fx, c.cy), 2.0, &c).unwrap();
        assert_relative_eq!(p.x / p.z, 1.0, epsilon = 1e-15);
        assert_relative_eq!(p.z, 2.0);
    }

    #[test]
    fn unproject_rejects_non_positive_depth() {
        assert!(matches!(
            unproject(Vector2::new(1.0, 1.0), 0.0, &cam()),
            Err(Error::InvalidArgument(_))
        ));
        assert!(unproject(Vector2::new(1.0, 1.0), -1.0, &cam()).is_err());
    }

    #[test]
    fn fronto_parallel_plane_from_points() {
        let plane = plane_from_points(
            &Vector3::new(1.0, 0.0, 1.0),
            &Vector3::new(0.0, 1.0, 1.0),
            &Vector3::new(0.0, 0.0, 1.0),
        )
        .unwrap();
        assert_relative_eq!(plane.normal, Vector3::new(0.0, 0.0, -1.0), epsilon = 1e-15);
        assert_relative_eq!(plane.dist, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn collinear_points_are_degenerate() {
        let r = plane_from_points(
            &Vector3::new(0.0, 0.0, 1.0),
            &Vector3::new(1.0, 1.0, 2.0),
            &Vector3::new(2.0, 2.0, 3.0),
        );
        assert!(matches!(r, Err(Error::DegenerateTriangle { .. })));
        let p = Vector3::new(1.0, 2.0, 3.0);
        assert!(plane_from_points(&p, &p, &Vector3::new(0.0, 0.0, 1.0)).is_err());
    }

    #[test]
    fn ray_plane_depth_on_fronto_plane() {
        let plane = Plane3D {
            normal: Vector3::new(0.0, 0.0, -1.0),
            dist: 1.0,
        };
        let c = cam();
        assert_relative_eq!(ray_plane_depth(Vector2::new(50.0, 40.0), &plane, &c).unwrap(), 1.0);
        let d = ray_plane_depth(Vector2::new(3.0, 77.0), &plane, &c).unwrap();
        let x = unproject(Vector2::new(3.0, 77.0), d, &c).unwrap();
        assert_relative_eq!(x.z, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn ray_parallel_to_plane_has_no_intersection() {
        // Plane x = 1 contains direction of the principal ray.
        let plane = Plane3D {
            normal: Vector3::new(-1.0, 0.0, 0.0),
            dist: 1.0,
        };
        assert!(matches!(
            ray_plane_depth(Vector2::new(50.0, 40.0), &plane, &cam()),
            Err(Error::NoIntersection)
        ));
        // Plane behind the camera.
        let behind = Plane3D {
            normal: Vector3::new(0.0, 0.0, -1.0),
            dist: -1.0,
        };
        assert!(ray_plane_depth(Vector2::new(50.0, 40.0), &behind, &cam()).is_err());
    }

    #[test]
    fn homography_identity_for_same_camera() {
        let c = cam();
        let theta = PlaneHypothesis::new(2.0, Vector3::new(0.3, -0.2, -1.0).normalize());
        let h = homography_from_hypothesis(&theta, Vector2::new(20.0, 30.0), &c, &c).unwrap();
        let h = h / h[(2, 2)];
        assert_relative_eq!(h, Matrix3::identity(), epsilon = 1e-12);
    }

    #[test]
    fn homography_for_x_baseline_is_translation() {
        let c = cam();
        let baseline = 0.2;
        let mut src = c.clone();
        // Source center at x = +baseline.
        src.translation = Vector3::new(-baseline, 0.0, 0.0);
        let depth = 4.0;
        let h = homography_from_hypothesis(&PlaneHypothesis::fronto(depth), Vector2::new(10.0, 10.0), &c, &src)
            .unwrap();
        let shift = -c.fx * baseline / depth;
        for &(u, v) in &[(0.0, 0.0), (10.0, 70.0), (99.0, 5.0)] {
            let q = apply_homography(&h, Vector2::new(u, v)).unwrap();
            assert_relative_eq!(q.x, u + shift, epsilon = 1e-9);
            assert_relative_eq!(q.y, v, epsilon = 1e-9);
        }
    }

    #[test]
    fn plane_through_source_center_is_degenerate() {
        let c = cam();
        let mut src = c.clone();
        src.translation = Vector3::new(0.0, 0.0, -2.0); // center at z = 2
        let r = homography_from_hypothesis(&PlaneHypothesis::fronto(2.0), Vector2::new(50.0, 40.0), &c, &src);
        assert!(matches!(r, Err(Error::DegenerateHomography)));
    }

    #[test]
    fn normal_angle_cases() {
        let a = Vector3::new(0.0, 0.0, 1.0);
        assert_eq!(normal_angle(&a, &a), 0.0);
        assert_relative_eq!(normal_angle(&a, &Vector3::new(1.0, 0.0, 0.0)), std::f64::consts::FRAC_PI_2);
        let over = Vector3::new(0.0, 0.0, 1.0 + 1e-16);
        let angle = normal_angle(&a, &(over * (1.0 + 1e-15)));
        assert!(!angle.is_nan());
        assert_eq!(angle, 0.0);
    }

    #[test]
    fn look_at_is_proper_rotation() {
        let c = CameraModel::look_at(
            100.0,
            100.0,
            50.0,
            40.0,
            Vector3::new(0.4, -0.2, 0.0),
            Vector3::new(0.0, 0.0, 3.0),
            Vector3::new(0.0, 1.0, 0.0),
            101,
            81,
        )
        .unwrap();
        let target = c.world_to_camera(&Vector3::new(0.0, 0.0, 3.0));
        assert_relative_eq!(target.x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(target.y, 0.0, epsilon = 1e-12);
        assert_relative_eq!(c.center(), Vector3::new(0.4, -0.2, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn rejects_reflection() {
        let mut r = Matrix3::identity();
        r[(0, 0)] = -1.0;
        let res = CameraModel::new(1.0, 1.0, 0.5, 0.5, r, Vector3::zeros(), 2, 2);
        assert!(matches!(res, Err(Error::Validation(_))));
    }
}
