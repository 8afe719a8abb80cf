//! Depth-map fusion into a deduplicated point cloud, plus PLY I/O.
//!
//! PLY layout written by [`write_ply`]:
//!
//! ```text
//! ply
//! format binary_little_endian 1.0
//! element vertex N
//! property float x
//! property float y
//! property float z
//! property float nx
//! property float ny
//! property float nz
//! property uchar red
//! property uchar green
//! property uchar blue
//! end_header
//! ```
//!
//! followed by N records of 27 bytes.

use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use nalgebra::{Vector2, Vector3};

use crate::dataset::{DepthMap, NormalMap, RgbImage};
use crate::error::{Error, Result};
use crate::geometry::{normal_angle, CameraModel};
use crate::io_util::write_atomic;

/// Color written for points without color information.
pub const DEFAULT_COLOR: [u8; 3] = [128, 128, 128];

/// Fused points in world coordinates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub positions: Vec<Vector3<f64>>,
    pub normals: Vec<Vector3<f64>>,
    pub colors: Option<Vec<[u8; 3]>>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Back-projects every valid pixel of each depth map, one point per
    /// pixel; normals point toward the respective camera.
    pub fn from_depth_maps(depths: &[DepthMap], cams: &[CameraModel]) -> Self {
        let mut cloud = PointCloud::default();
        for (depth, cam) in depths.iter().zip(cams) {
            for y in 0..depth.height {
                for x in 0..depth.width {
                    if !depth.is_valid(x, y) {
                        continue;
                    }
                    let p = cam.ray(Vector2::new(x as f64, y as f64)) * depth.get(x, y) as f64;
                    cloud.positions.push(cam.camera_to_world(&p));
                    cloud.normals.push(cam.direction_to_world(&-p.normalize()));
                }
            }
        }
        cloud
    }
}

/// Thresholds deciding whether two estimates agree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionParams {
    pub max_rel_depth_diff: f64,
    /// Radians.
    pub max_normal_diff: f64,
    /// Pixels.
    pub max_reproj_err: f64,
    pub min_consistent: usize,
}

impl Default for FusionParams {
    fn default() -> Self {
        FusionParams {
            max_rel_depth_diff: 0.01,
            max_normal_diff: 10f64.to_radians(),
            max_reproj_err: 2.0,
            min_consistent: 2,
        }
    }
}

impl FusionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_rel_depth_diff > 0.0 && self.max_normal_diff > 0.0 && self.max_reproj_err > 0.0)
            || self.min_consistent == 0
        {
            return Err(Error::Validation(format!("fusion thresholds must be positive: {self:?}")));
        }
        Ok(())
    }

    /// All three differences strictly below their thresholds.
    pub fn accepts(&self, m: &ConsistencyMeasures) -> bool {
        m.rel_depth_diff < self.max_rel_depth_diff
            && m.normal_diff < self.max_normal_diff
            && m.reproj_err < self.max_reproj_err
    }
}

/// How far a reference estimate is from a source estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyMeasures {
    /// Source pixel the reference point lands on.
    pub landing: (usize, usize),
    pub rel_depth_diff: f64,
    pub normal_diff: f64,
    pub reproj_err: f64,
}

/// Per-view depth and normal maps with their camera.
#[derive(Debug, Clone, Copy)]
pub struct ViewMaps<'a> {
    pub depth: &'a DepthMap,
    pub normals: &'a NormalMap,
    pub cam: &'a CameraModel,
}

/// Projects the reference estimate at `pixel` into the source and compares
/// it with the source estimate at the nearest landing pixel. `None` if the
/// point leaves the source image or either estimate is missing.
pub fn consistency_measures(pixel: (usize, usize), reference: &ViewMaps, source: &ViewMaps) -> Option<ConsistencyMeasures> {
    if !reference.depth.is_valid(pixel.0, pixel.1) {
        return None;
    }
    let p = Vector2::new(pixel.0 as f64, pixel.1 as f64);
    let d_ref = reference.depth.get(pixel.0, pixel.1) as f64;
    let world = reference.cam.camera_to_world(&(reference.cam.ray(p) * d_ref));
    let in_src = source.cam.world_to_camera(&world);
    let proj = source.cam.project(&in_src)?;
    let (lx, ly) = (proj.x.round(), proj.y.round());
    if lx < 0.0 || ly < 0.0 || lx >= source.cam.width as f64 || ly >= source.cam.height as f64 {
        return None;
    }
    let landing = (lx as usize, ly as usize);
    if !source.depth.is_valid(landing.0, landing.1) {
        return None;
    }
    let d_src = source.depth.get(landing.0, landing.1) as f64;
    let rel_depth_diff = (in_src.z - d_src).abs() / d_src;

    let n_ref = reference.cam.direction_to_world(&reference.normals.get(pixel.0, pixel.1));
    let n_src = source.cam.direction_to_world(&source.normals.get(landing.0, landing.1));
    let normal_diff = normal_angle(&n_ref.normalize(), &n_src.normalize());

    let src_point = source.cam.ray(Vector2::new(lx, ly)) * d_src;
    let back = reference
        .cam
        .project(&reference.cam.world_to_camera(&source.cam.camera_to_world(&src_point)))?;
    Some(ConsistencyMeasures {
        landing,
        rel_depth_diff,
        normal_diff,
        reproj_err: (back - p).norm(),
    })
}

/// True iff the reference estimate at `pixel` agrees with the source's
/// estimate under `params`.
pub fn check_consistency(pixel: (usize, usize), reference: &ViewMaps, source: &ViewMaps, params: &FusionParams) -> bool {
    consistency_measures(pixel, reference, source).is_some_and(|m| params.accepts(&m))
}

/// Fuses all views. Views are visited in order, pixels in scanline order;
/// a pixel with at least `min_consistent` agreeing, not yet consumed
/// source estimates emits the mean of its own and their points, and every
/// contributing pixel is consumed.
pub fn fuse(views: &[ViewMaps], colors: Option<&[RgbImage]>, params: &FusionParams) -> Result<PointCloud> {
    params.validate()?;
    if let Some(c) = colors {
        if c.len() != views.len() {
            return Err(Error::InvalidArgument(format!("{} color images for {} views", c.len(), views.len())));
        }
    }
    for v in views {
        let (w, h) = (v.cam.width, v.cam.height);
        if (v.depth.width, v.depth.height) != (w, h) || (v.normals.width, v.normals.height) != (w, h) {
            return Err(Error::InvalidArgument("depth/normal map size does not match its camera".into()));
        }
    }
    let mut consumed: Vec<Vec<bool>> = views.iter().map(|v| vec![false; v.cam.width * v.cam.height]).collect();
    let mut cloud = PointCloud {
        colors: colors.map(|_| Vec::new()),
        ..PointCloud::default()
    };
    let mut support = Vec::with_capacity(views.len());
    for (r, reference) in views.iter().enumerate() {
        let w = reference.cam.width;
        for y in 0..reference.cam.height {
            for x in 0..w {
                if consumed[r][y * w + x] || !reference.depth.is_valid(x, y) {
                    continue;
                }
                support.clear();
                for (s, source) in views.iter().enumerate() {
                    if s == r {
                        continue;
                    }
                    if let Some(m) = consistency_measures((x, y), reference, source) {
                        let idx = m.landing.1 * source.cam.width + m.landing.0;
                        if params.accepts(&m) && !consumed[s][idx] {
                            support.push((s, m.landing));
                        }
                    }
                }
                if support.len() < params.min_consistent {
                    continue;
                }
                consumed[r][y * w + x] = true;
                let mut members = vec![(r, (x, y))];
                members.extend(support.iter().copied());
                let (mut pos, mut nrm, mut rgb) = (Vector3::zeros(), Vector3::zeros(), [0u32; 3]);
                for &(v, (px, py)) in &members {
                    let view = &views[v];
                    consumed[v][py * view.cam.width + px] = true;
                    let local = view.cam.ray(Vector2::new(px as f64, py as f64)) * view.depth.get(px, py) as f64;
                    pos += view.cam.camera_to_world(&local);
                    nrm += view.cam.direction_to_world(&view.normals.get(px, py)).normalize();
                    if let Some(c) = colors {
                        let col = c[v].get(px, py);
                        for k in 0..3 {
                            rgb[k] += col[k] as u32;
                        }
                    }
                }
                let n = members.len() as f64;
                let normal = if nrm.norm() > 1e-12 {
                    nrm.normalize()
                } else {
                    views[r].cam.direction_to_world(&views[r].normals.get(x, y)).normalize()
                };
                cloud.positions.push(pos / n);
                cloud.normals.push(normal);
                if let Some(cs) = &mut cloud.colors {
                    let k = members.len() as u32;
                    cs.push(rgb.map(|c| ((c + k / 2) / k) as u8));
                }
            }
        }
    }
    Ok(cloud)
}

/// Writes a binary little-endian PLY (see the module docs).
pub fn write_ply(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    if cloud.normals.len() != cloud.len() || cloud.colors.as_ref().is_some_and(|c| c.len() != cloud.len()) {
        return Err(Error::InvalidArgument("point cloud attribute lengths differ".into()));
    }
    write_atomic(path.as_ref(), |w| {
        write!(
            w,
            "ply\nformat binary_little_endian 1.0\nelement vertex {}\n\
             property float x\nproperty float y\nproperty float z\n\
             property float nx\nproperty float ny\nproperty float nz\n\
             property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
            cloud.len()
        )?;
        for i in 0..cloud.len() {
            let (p, n) = (cloud.positions[i], cloud.normals[i]);
            for v in [p.x, p.y, p.z, n.x, n.y, n.z] {
                w.write_all(&(v as f32).to_le_bytes())?;
            }
            let c = cloud.colors.as_ref().map_or(DEFAULT_COLOR, |c| c[i]);
            w.write_all(&c)?;
        }
        Ok(())
    })
}

/// Reads a PLY file in exactly the layout produced by [`write_ply`].
pub fn read_ply(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::load(path, e.to_string()))?;
    let mut reader = BufReader::new(file);
    let expected = [
        "ply",
        "format binary_little_endian 1.0",
        "",
        "property float x",
        "property float y",
        "property float z",
        "property float nx",
        "property float ny",
        "property float nz",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
        "end_header",
    ];
    let mut count = 0usize;
    for (i, want) in expected.iter().enumerate() {
        let mut line = String::new();
        reader.read_line(&mut line)?;
        let line = line.trim_end_matches(['\n', '\r']);
        if i == 2 {
            count = line
                .strip_prefix("element vertex ")
                .and_then(|n| n.parse().ok())
                .ok_or_else(|| Error::format(path, format!("bad vertex element line {line:?}")))?;
        } else if line != *want {
            return Err(Error::format(path, format!("expected {want:?}, found {line:?}")));
        }
    }
    let mut cloud = PointCloud {
        positions: Vec::with_capacity(count),
        normals: Vec::with_capacity(count),
        colors: Some(Vec::with_capacity(count)),
    };
    let mut record = [0u8; 27];
    for _ in 0..count {
        reader
            .read_exact(&mut record)
            .map_err(|_| Error::format(path, "truncated vertex data"))?;
        let f = |k: usize| f32::from_le_bytes(record[4 * k..4 * k + 4].try_into().unwrap()) as f64;
        cloud.positions.push(Vector3::new(f(0), f(1), f(2)));
        cloud.normals.push(Vector3::new(f(3), f(4), f(5)));
        cloud.colors.as_mut().unwrap().push([record[24], record[25], record[26]]);
    }
    Ok(cloud)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn measures(rel: f64, deg: f64, px: f64) -> ConsistencyMeasures {
        ConsistencyMeasures {
            landing: (0, 0),
            rel_depth_diff: rel,
            normal_diff: deg.to_radians(),
            reproj_err: px,
        }
    }

    #[test]
    fn default_thresholds() {
        let p = FusionParams::default();
        assert!(p.accepts(&measures(0.009, 8.0, 1.0)));
        assert!(!p.accepts(&measures(0.02, 8.0, 1.0)));
        assert!(!p.accepts(&measures(0.009, 12.0, 1.0)));
        assert!(!p.accepts(&measures(0.009, 8.0, 3.0)));
    }

    #[test]
    fn ply_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ply");
        let cloud = PointCloud {
            positions: vec![Vector3::new(1.0, -2.0, 3.5), Vector3::new(0.25, 0.5, 4.0)],
            normals: vec![Vector3::new(0.0, 0.0, -1.0), Vector3::new(0.0, 1.0, 0.0)],
            colors: Some(vec![[1, 2, 3], [250, 128, 0]]),
        };
        write_ply(&path, &cloud).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let header_len = bytes.windows(11).position(|w| w == b"end_header\n").unwrap() + 11;
        assert_eq!(bytes.len() - header_len, 2 * 27);
        assert_eq!(read_ply(&path).unwrap(), cloud);
    }

    #[test]
    fn truncated_ply_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ply");
        let cloud = PointCloud {
            positions: vec![Vector3::new(1.0, 2.0, 3.0)],
            normals: vec![Vector3::new(0.0, 0.0, 1.0)],
            colors: None,
        };
        write_ply(&path, &cloud).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(read_ply(&path), Err(Error::Format { .. })));
    }
}
