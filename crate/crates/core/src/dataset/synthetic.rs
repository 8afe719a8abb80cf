//! Ray-cast renderer for scenes made of planar rectangles.
//!
//! Every surface carries a procedural texture defined in its own plane
//! coordinates, so all views observe the same radiance and the ground-truth
//! depth is exact.

use nalgebra::{Vector2, Vector3};

use super::{view_name, DepthMap, DepthRange, Image, SceneDataset};
use crate::error::{Error, Result};
use crate::geometry::CameraModel;

/// Surface appearance.
#[derive(Debug, Clone, PartialEq)]
pub enum Material {
    /// Two-octave value noise; `cell_size` is the finest lattice spacing in
    /// scene units.
    Textured { cell_size: f64, contrast: f64 },
    /// Constant intensity plus optional view-consistent weak noise.
    Uniform { intensity: f64, noise: f64 },
}

/// Planar rectangle (or unbounded plane when `half_extent` is `None`).
#[derive(Debug, Clone, PartialEq)]
pub struct Surface {
    pub center: Vector3<f64>,
    /// Orthonormal in-plane axes.
    pub axis_u: Vector3<f64>,
    pub axis_v: Vector3<f64>,
    pub half_extent: Option<[f64; 2]>,
    pub material: Material,
}

impl Surface {
    pub fn rectangle(center: Vector3<f64>, axis_u: Vector3<f64>, axis_v: Vector3<f64>, half: [f64; 2], material: Material) -> Self {
        Surface {
            center,
            axis_u: axis_u.normalize(),
            axis_v: axis_v.normalize(),
            half_extent: Some(half),
            material,
        }
    }

    pub fn normal(&self) -> Vector3<f64> {
        self.axis_u.cross(&self.axis_v).normalize()
    }

    /// Ray parameter and in-plane coordinates of the hit, if any.
    fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<(f64, Vector2<f64>)> {
        let n = self.normal();
        let denom = n.dot(dir);
        if denom.abs() < 1e-12 {
            return None;
        }
        let t = n.dot(&(self.center - origin)) / denom;
        if !(t > 0.0) {
            return None;
        }
        let rel = origin + dir * t - self.center;
        let st = Vector2::new(rel.dot(&self.axis_u), rel.dot(&self.axis_v));
        if let Some([hu, hv]) = self.half_extent {
            if st.x.abs() > hu || st.y.abs() > hv {
                return None;
            }
        }
        Some((t, st))
    }
}

/// Everything needed to render a synthetic scene.
#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub cameras: Vec<CameraModel>,
    pub surfaces: Vec<Surface>,
    /// Intensity of rays that hit no surface.
    pub background: f64,
}

impl SceneSpec {
    /// One camera at the origin plus `views - 1` cameras on a ring of radius
    /// `baseline`, all looking at `(0, 0, target_depth)`.
    pub fn ring_rig(width: usize, height: usize, views: usize, baseline: f64, target_depth: f64) -> Vec<CameraModel> {
        let f = 0.875 * width as f64;
        let (cx, cy) = ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0);
        let target = Vector3::new(0.0, 0.0, target_depth);
        let down = Vector3::new(0.0, 1.0, 0.0);
        let ring = views.saturating_sub(1).max(1);
        (0..views)
            .map(|k| {
                let eye = if k == 0 {
                    Vector3::zeros()
                } else {
                    let a = std::f64::consts::TAU * (k - 1) as f64 / ring as f64;
                    Vector3::new(baseline * a.cos(), baseline * a.sin(), 0.0)
                };
                CameraModel::look_at(f, f, cx, cy, eye, target, down, width, height).expect("valid rig")
            })
            .collect()
    }

    /// Textured unbounded fronto-parallel plane at `depth`.
    pub fn fronto_plane(width: usize, height: usize, views: usize, depth: f64) -> Self {
        SceneSpec {
            cameras: Self::ring_rig(width, height, views, 0.1 * depth, depth),
            surfaces: vec![Surface {
                center: Vector3::new(0.0, 0.0, depth),
                axis_u: Vector3::x(),
                axis_v: Vector3::y(),
                half_extent: None,
                material: textured(depth, width),
            }],
            background: 0.0,
        }
    }

    /// Folded textured surface: a fronto-parallel sheet at depth 3 whose
    /// right part bends toward the cameras at 35 degrees. The two planes
    /// meet along a vertical crease, so depth is continuous, and together
    /// they fill every view of the rig.
    pub fn textured_planes(width: usize, height: usize, views: usize) -> Self {
        let angle = 35f64.to_radians();
        let crease_x = 0.2;
        let slant_len = 1.6;
        let dir = Vector3::new(angle.cos(), 0.0, -angle.sin());
        let crease = Vector3::new(crease_x, 0.0, 3.0);
        SceneSpec {
            cameras: Self::ring_rig(width, height, views, 0.3, 3.0),
            surfaces: vec![
                // Extends slightly past the crease; the overlap is hidden
                // behind the slanted part.
                Surface::rectangle(
                    Vector3::new((crease_x + 0.1 - 2.5) / 2.0, 0.0, 3.0),
                    Vector3::x(),
                    Vector3::y(),
                    [(crease_x + 0.1 + 2.5) / 2.0, 1.6],
                    textured(3.0, width),
                ),
                Surface::rectangle(
                    crease + dir * (slant_len / 2.0),
                    dir,
                    Vector3::y(),
                    [slant_len / 2.0, 1.6],
                    textured(2.6, width),
                ),
            ],
            background: 0.0,
        }
    }

    /// Textured wall at depth 3, filling every view, with a textureless
    /// panel hanging just in front of it that covers about 45% of the
    /// central view.
    pub fn low_texture_wall(width: usize, height: usize, views: usize) -> Self {
        SceneSpec {
            cameras: Self::ring_rig(width, height, views, 0.3, 3.0),
            surfaces: vec![
                Surface::rectangle(
                    Vector3::new(0.0, 0.0, 3.0),
                    Vector3::x(),
                    Vector3::y(),
                    [2.5, 1.9],
                    textured(3.0, width),
                ),
                Surface::rectangle(
                    Vector3::new(0.0, 0.0, 2.99),
                    Vector3::x(),
                    Vector3::y(),
                    [1.15, 0.86],
                    Material::Uniform {
                        intensity: 0.55,
                        noise: 0.0,
                    },
                ),
            ],
            background: 0.0,
        }
    }

    fn trace(&self, cam: &CameraModel, x: usize, y: usize) -> Option<(usize, f64, Vector2<f64>)> {
        let origin = cam.center();
        let dir = cam.direction_to_world(&cam.ray(Vector2::new(x as f64, y as f64)));
        let mut best: Option<(usize, f64, Vector2<f64>)> = None;
        for (i, s) in self.surfaces.iter().enumerate() {
            if let Some((t, st)) = s.intersect(&origin, &dir) {
                if best.is_none_or(|(_, bt, _)| t < bt) {
                    best = Some((i, t, st));
                }
            }
        }
        best
    }
}

/// Texture scaled so a lattice cell spans roughly three pixels at `depth`
/// for the rig's focal length.
fn textured(depth: f64, width: usize) -> Material {
    let f = 0.875 * width as f64;
    Material::Textured {
        cell_size: 3.0 * depth / f,
        contrast: 0.45,
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn lattice(key: u64, i: i64, j: i64) -> f64 {
    let h = splitmix(key ^ splitmix((i as u64).wrapping_mul(0x1000_0000_01B3) ^ splitmix(j as u64)));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Smoothstep-interpolated value noise in `[0, 1]`.
fn value_noise(key: u64, p: Vector2<f64>) -> f64 {
    let (fx, fy) = (p.x.floor(), p.y.floor());
    let (i, j) = (fx as i64, fy as i64);
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let (sx, sy) = (smooth(p.x - fx), smooth(p.y - fy));
    let a = lattice(key, i, j);
    let b = lattice(key, i + 1, j);
    let c = lattice(key, i, j + 1);
    let d = lattice(key, i + 1, j + 1);
    let top = a + sx * (b - a);
    let bottom = c + sx * (d - c);
    top + sy * (bottom - top)
}

fn shade(material: &Material, key: u64, st: Vector2<f64>) -> f64 {
    match *material {
        Material::Textured { cell_size, contrast } => {
            let fine = value_noise(key, st / cell_size);
            let coarse = value_noise(key ^ 0xA5A5_A5A5, st / (2.0 * cell_size));
            let v = 0.6 * fine + 0.4 * coarse;
            (0.5 + 2.0 * contrast * (v - 0.5)).clamp(0.0, 1.0)
        }
        Material::Uniform { intensity, noise } => {
            if noise == 0.0 {
                intensity
            } else {
                (intensity + 2.0 * noise * (value_noise(key, st / 0.05) - 0.5)).clamp(0.0, 1.0)
            }
        }
    }
}

/// Renders every view of `spec`. Ground-truth depth is the exact z-depth of
/// the nearest surface; depth ranges span the ground truth with a 10% margin.
pub fn render_synthetic_scene(spec: &SceneSpec, seed: u64) -> Result<SceneDataset> {
    if spec.cameras.len() < 2 {
        return Err(Error::Render(format!("need at least 2 cameras, got {}", spec.cameras.len())));
    }
    if spec.surfaces.is_empty() {
        return Err(Error::Render("scene has no surfaces".into()));
    }
    let keys: Vec<u64> = (0..spec.surfaces.len() as u64).map(|i| splitmix(seed ^ splitmix(i))).collect();
    let mut dataset = SceneDataset {
        names: Vec::new(),
        images: Vec::new(),
        colors: None,
        cameras: spec.cameras.clone(),
        depth_ranges: Vec::new(),
        gt_depth: Some(Vec::new()),
    };
    for (v, cam) in spec.cameras.iter().enumerate() {
        let mut image = Image::new(cam.width, cam.height);
        let mut depth = DepthMap::new(cam.width, cam.height);
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for y in 0..cam.height {
            for x in 0..cam.width {
                let idx = y * cam.width + x;
                match spec.trace(cam, x, y) {
                    Some((s, t, st)) => {
                        // The traced direction has unit z in camera coordinates,
                        // so the ray parameter is the z-depth.
                        image.data[idx] = shade(&spec.surfaces[s].material, keys[s], st);
                        depth.values[idx] = t as f32;
                        lo = lo.min(t);
                        hi = hi.max(t);
                    }
                    None => image.data[idx] = spec.background,
                }
            }
        }
        if hi == 0.0 {
            return Err(Error::Render(format!("camera {v} sees no surface")));
        }
        dataset.names.push(view_name(v));
        dataset.images.push(image);
        dataset.depth_ranges.push(DepthRange::new(0.9 * lo, 1.1 * hi)?);
        dataset.gt_depth.as_mut().unwrap().push(depth);
    }
    dataset.validate()?;
    Ok(dataset)
}

/// Index of the surface seen at every pixel of `view` (row-major).
pub fn surface_labels(spec: &SceneSpec, view: usize) -> Vec<Option<usize>> {
    let cam = &spec.cameras[view];
    let mut out = Vec::with_capacity(cam.width * cam.height);
    for y in 0..cam.height {
        for x in 0..cam.width {
            out.push(spec.trace(cam, x, y).map(|(s, _, _)| s));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fronto_plane_from_identity_camera_has_constant_depth() {
        let spec = SceneSpec {
            cameras: vec![
                CameraModel::identity(40.0, 40.0, 15.5, 11.5, 32, 24).unwrap(),
                CameraModel::identity(40.0, 40.0, 15.5, 11.5, 32, 24).unwrap(),
            ],
            surfaces: vec![Surface {
                center: Vector3::new(0.0, 0.0, 2.0),
                axis_u: Vector3::x(),
                axis_v: Vector3::y(),
                half_extent: None,
                material: Material::Uniform {
                    intensity: 0.5,
                    noise: 0.0,
                },
            }],
            background: 0.0,
        };
        let ds = render_synthetic_scene(&spec, 1).unwrap();
        assert!(ds.gt_depth.unwrap()[0].values.iter().all(|&d| d == 2.0));
    }

    #[test]
    fn rendering_is_deterministic() {
        let spec = SceneSpec::textured_planes(48, 36, 3);
        let a = render_synthetic_scene(&spec, 9).unwrap();
        let b = render_synthetic_scene(&spec, 9).unwrap();
        assert_eq!(a.images, b.images);
        let c = render_synthetic_scene(&spec, 10).unwrap();
        assert_ne!(a.images, c.images);
    }

    #[test]
    fn camera_seeing_nothing_is_an_error() {
        let mut spec = SceneSpec::textured_planes(32, 24, 2);
        // Move the second camera far off to the side, looking away.
        spec.cameras[1] = CameraModel::look_at(
            28.0,
            28.0,
            15.5,
            11.5,
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(0.0, 0.0, -1.0),
            Vector3::y(),
            32,
            24,
        )
        .unwrap();
        assert!(matches!(render_synthetic_scene(&spec, 0), Err(Error::Render(_))));
    }
}
