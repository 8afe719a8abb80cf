//! Scene input/output and the synthetic scene renderer.
//!
//! On-disk scene layout:
//!
//! ```text
//! scene/images/NNNN.pgm | NNNN.ppm
//! scene/cams/NNNN.txt
//! scene/gt/NNNN.dmap          (optional)
//! ```
//!
//! A camera file holds whitespace-separated numbers: the 9 entries of the
//! world-to-camera rotation (row-major), the 3 translation entries,
//! `fx fy cx cy`, and `depth_min depth_max`.

mod pnm;
mod raster;
pub mod synthetic;

use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};

pub use pnm::{read_pnm, write_pgm, write_ppm};
pub use raster::{DepthMap, Image, NormalMap, RgbImage};
pub use synthetic::{render_synthetic_scene, surface_labels, Material, SceneSpec, Surface};

use crate::error::{Error, Result};
use crate::geometry::CameraModel;
use crate::io_util::write_atomic;

/// Closed depth interval of a view, in scene units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthRange {
    pub min: f64,
    pub max: f64,
}

impl DepthRange {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min > 0.0 && min < max && max.is_finite()) {
            return Err(Error::Validation(format!("invalid depth range [{min}, {max}]")));
        }
        Ok(DepthRange { min, max })
    }

    #[inline]
    pub fn interval(&self) -> f64 {
        self.max - self.min
    }

    #[inline]
    pub fn clamp(&self, depth: f64) -> f64 {
        depth.clamp(self.min, self.max)
    }

    #[inline]
    pub fn contains(&self, depth: f64) -> bool {
        depth >= self.min && depth <= self.max
    }
}

/// Calibrated multi-view scene.
#[derive(Debug, Clone)]
pub struct SceneDataset {
    pub names: Vec<String>,
    pub images: Vec<Image>,
    pub colors: Option<Vec<RgbImage>>,
    pub cameras: Vec<CameraModel>,
    pub depth_ranges: Vec<DepthRange>,
    pub gt_depth: Option<Vec<DepthMap>>,
}

impl SceneDataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.images.len();
        if n < 2 {
            return Err(Error::Validation(format!("a scene needs at least 2 views, got {n}")));
        }
        if self.cameras.len() != n || self.depth_ranges.len() != n || self.names.len() != n {
            return Err(Error::Validation(format!(
                "{n} images but {} cameras, {} depth ranges, {} names",
                self.cameras.len(),
                self.depth_ranges.len(),
                self.names.len()
            )));
        }
        for (i, (img, cam)) in self.images.iter().zip(&self.cameras).enumerate() {
            cam.validate()
                .map_err(|e| Error::Validation(format!("view {}: {e}", self.names[i])))?;
            if (img.width, img.height) != (cam.width, cam.height) {
                return Err(Error::Validation(format!(
                    "view {}: image is {}x{} but camera is {}x{}",
                    self.names[i], img.width, img.height, cam.width, cam.height
                )));
            }
            if img.width < 2 || img.height < 2 {
                return Err(Error::Validation(format!("view {}: image too small", self.names[i])));
            }
            let r = &self.depth_ranges[i];
            DepthRange::new(r.min, r.max)
                .map_err(|e| Error::Validation(format!("view {}: {e}", self.names[i])))?;
        }
        if let Some(colors) = &self.colors {
            if colors.len() != n
                || colors.iter().zip(&self.images).any(|(c, i)| (c.width, c.height) != (i.width, i.height))
            {
                return Err(Error::Validation("color images do not match grayscale images".into()));
            }
        }
        if let Some(gt) = &self.gt_depth {
            if gt.len() != n || gt.iter().zip(&self.images).any(|(g, i)| (g.width, g.height) != (i.width, i.height))
            {
                return Err(Error::Validation("ground-truth depth maps do not match images".into()));
            }
        }
        Ok(())
    }

    /// Downsamples every view whose larger side exceeds `max_dim`, scaling
    /// intrinsics to match. Intensities are bilinearly resampled, colors and
    /// ground truth use nearest-neighbor lookup.
    pub fn resized(&self, max_dim: usize) -> Result<SceneDataset> {
        let mut out = self.clone();
        for i in 0..self.len() {
            let cam = &self.cameras[i];
            let largest = cam.width.max(cam.height);
            if largest <= max_dim {
                continue;
            }
            let s = max_dim as f64 / largest as f64;
            let w = ((cam.width as f64 * s).round() as usize).max(2);
            let h = ((cam.height as f64 * s).round() as usize).max(2);
            let sx = w as f64 / cam.width as f64;
            let sy = h as f64 / cam.height as f64;
            let src_x = |x: usize| ((x as f64 + 0.5) / sx - 0.5).clamp(0.0, (cam.width - 1) as f64);
            let src_y = |y: usize| ((y as f64 + 0.5) / sy - 0.5).clamp(0.0, (cam.height - 1) as f64);
            let img = &self.images[i];
            out.images[i] = Image::from_fn(w, h, |x, y| img.sample_bilinear(src_x(x), src_y(y)));
            if let Some(colors) = &mut out.colors {
                let c = &self.colors.as_ref().unwrap()[i];
                let mut data = Vec::with_capacity(w * h);
                for y in 0..h {
                    for x in 0..w {
                        data.push(c.get(src_x(x).round() as usize, src_y(y).round() as usize));
                    }
                }
                colors[i] = RgbImage { width: w, height: h, data };
            }
            if let Some(gt) = &mut out.gt_depth {
                let g = &self.gt_depth.as_ref().unwrap()[i];
                let mut m = DepthMap::new(w, h);
                for y in 0..h {
                    for x in 0..w {
                        m.set(x, y, g.get(src_x(x).round() as usize, src_y(y).round() as usize));
                    }
                }
                gt[i] = m;
            }
            let mut c = cam.clone();
            c.fx *= sx;
            c.fy *= sy;
            c.cx = ((cam.cx + 0.5) * sx - 0.5).clamp(0.0, w as f64 - 1e-9);
            c.cy = ((cam.cy + 0.5) * sy - 0.5).clamp(0.0, h as f64 - 1e-9);
            c.width = w;
            c.height = h;
            out.cameras[i] = c;
        }
        out.validate()?;
        Ok(out)
    }
}

/// Reads a camera file; returns the camera and its depth range.
pub fn read_camera_file(path: &Path, width: usize, height: usize) -> Result<(CameraModel, DepthRange)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::load(path, e.to_string()))?;
    let values: Vec<f64> = text
        .split_whitespace()
        .map(str::parse::<f64>)
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::format(path, e.to_string()))?;
    if values.len() != 18 {
        return Err(Error::format(path, format!("expected 18 numbers, found {}", values.len())));
    }
    let rotation = Matrix3::from_row_slice(&values[0..9]);
    let translation = Vector3::new(values[9], values[10], values[11]);
    let cam = CameraModel::new(values[12], values[13], values[14], values[15], rotation, translation, width, height)
        .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
    let range =
        DepthRange::new(values[16], values[17]).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
    Ok((cam, range))
}

pub fn write_camera_file(path: &Path, cam: &CameraModel, range: &DepthRange) -> Result<()> {
    write_atomic(path, |w| {
        for r in 0..3 {
            let row = cam.rotation.row(r);
            writeln!(w, "{} {} {}", row[0], row[1], row[2])?;
        }
        let t = &cam.translation;
        writeln!(w, "{} {} {}", t.x, t.y, t.z)?;
        writeln!(w, "{} {} {} {}", cam.fx, cam.fy, cam.cx, cam.cy)?;
        writeln!(w, "{} {}", range.min, range.max)
    })
}

fn sorted_entries(dir: &Path, extensions: &[&str]) -> Result<Vec<(String, PathBuf)>> {
    let read = std::fs::read_dir(dir).map_err(|e| Error::load(dir, e.to_string()))?;
    let mut entries = Vec::new();
    for entry in read {
        let path = entry?.path();
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        if !path.is_file() || !extensions.contains(&ext) {
            continue;
        }
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::load(&path, "non UTF-8 file name"))?
            .to_string();
        entries.push((stem, path));
    }
    entries.sort();
    Ok(entries)
}

/// Loads a scene directory, ordering views by file name.
pub fn load_scene(dir: impl AsRef<Path>) -> Result<SceneDataset> {
    let dir = dir.as_ref();
    let images = sorted_entries(&dir.join("images"), &["pgm", "ppm"])?;
    let cams = sorted_entries(&dir.join("cams"), &["txt"])?;
    if images.len() != cams.len() {
        return Err(Error::load(
            dir,
            format!("{} images but {} camera files", images.len(), cams.len()),
        ));
    }
    for ((img_name, img_path), (cam_name, _)) in images.iter().zip(&cams) {
        if img_name != cam_name {
            return Err(Error::load(img_path, format!("no camera file named {img_name}.txt")));
        }
    }
    for pair in images.windows(2) {
        if pair[0].0 == pair[1].0 {
            return Err(Error::load(&pair[1].1, "duplicate view name"));
        }
    }

    let mut dataset = SceneDataset {
        names: Vec::new(),
        images: Vec::new(),
        colors: None,
        cameras: Vec::new(),
        depth_ranges: Vec::new(),
        gt_depth: None,
    };
    let mut colors = Vec::new();
    for ((name, img_path), (_, cam_path)) in images.iter().zip(&cams) {
        let decoded = read_pnm(img_path)?;
        let (cam, range) = read_camera_file(cam_path, decoded.gray.width, decoded.gray.height)?;
        colors.push(decoded.rgb);
        dataset.names.push(name.clone());
        dataset.images.push(decoded.gray);
        dataset.cameras.push(cam);
        dataset.depth_ranges.push(range);
    }
    if !colors.is_empty() && colors.iter().all(Option::is_some) {
        dataset.colors = Some(colors.into_iter().flatten().collect());
    }

    let gt_dir = dir.join("gt");
    if gt_dir.is_dir() {
        let mut gt = Vec::with_capacity(dataset.len());
        for name in &dataset.names {
            let path = gt_dir.join(format!("{name}.dmap"));
            if !path.is_file() {
                return Err(Error::load(&path, "missing ground-truth depth map"));
            }
            gt.push(DepthMap::load(&path)?);
        }
        dataset.gt_depth = Some(gt);
    }
    dataset.validate()?;
    Ok(dataset)
}

/// Writes a scene in the layout read by [`load_scene`]. Intensities are
/// quantized to 8 bits.
pub fn save_scene(dataset: &SceneDataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    dataset.validate()?;
    for i in 0..dataset.len() {
        let name = &dataset.names[i];
        match &dataset.colors {
            Some(colors) => write_ppm(&dir.join("images").join(format!("{name}.ppm")), &colors[i])?,
            None => write_pgm(&dir.join("images").join(format!("{name}.pgm")), &dataset.images[i])?,
        }
        write_camera_file(
            &dir.join("cams").join(format!("{name}.txt")),
            &dataset.cameras[i],
            &dataset.depth_ranges[i],
        )?;
        if let Some(gt) = &dataset.gt_depth {
            gt[i].save(dir.join("gt").join(format!("{name}.dmap")))?;
        }
    }
    Ok(())
}

/// Conventional zero-padded view name.
pub fn view_name(index: usize) -> String {
    format!("{index:04}")
}
