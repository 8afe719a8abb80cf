//! Raster containers and the DMAP1/NMAP1 binary map formats.
//!
//! Both formats are an ASCII magic line, an ASCII `width height` line, and a
//! row-major little-endian `f32` payload (one value per pixel for DMAP1,
//! three for NMAP1).

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::io_util::write_atomic;

const DMAP_MAGIC: &str = "DMAP1";
const NMAP_MAGIC: &str = "NMAP1";

/// Grayscale image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Image {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Image { width, height, data }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Bilinear sample; the caller guarantees `0 <= x <= w-1`, `0 <= y <= h-1`.
    #[inline]
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let x0 = (x.floor() as usize).min(self.width.saturating_sub(2));
        let y0 = (y.floor() as usize).min(self.height.saturating_sub(2));
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let i = y0 * self.width + x0;
        let (a, b) = (self.data[i], self.data[i + 1]);
        let (c, d) = (self.data[i + self.width], self.data[i + self.width + 1]);
        let top = a + fx * (b - a);
        let bottom = c + fx * (d - c);
        top + fy * (bottom - top)
    }
}

/// 8-bit RGB image used for point colors.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<[u8; 3]>,
}

impl RgbImage {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.data[y * self.width + x]
    }
}

/// Per-pixel z-depth; `0` marks an invalid pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f32>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize) -> Self {
        DepthMap {
            width,
            height,
            values: vec![0.0; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.values[y * self.width + x] = v;
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.get(x, y) > 0.0
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|&&v| v > 0.0).count()
    }

    /// Depth at a continuous position, interpolating inverse depth
    /// bilinearly (exact on planar surfaces). `None` outside the grid or
    /// when any of the four neighbors is invalid.
    pub fn sample_inverse_bilinear(&self, x: f64, y: f64) -> Option<f64> {
        if !(x >= 0.0 && y >= 0.0 && x <= (self.width - 1) as f64 && y <= (self.height - 1) as f64) {
            return None;
        }
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let mut inv = [0.0f64; 4];
        for (slot, &(px, py)) in inv.iter_mut().zip(&[(x0, y0), (x1, y0), (x0, y1), (x1, y1)]) {
            let d = self.get(px, py);
            if !(d > 0.0) {
                return None;
            }
            *slot = 1.0 / d as f64;
        }
        let top = inv[0] + fx * (inv[1] - inv[0]);
        let bottom = inv[2] + fx * (inv[3] - inv[2]);
        Some(1.0 / (top + fy * (bottom - top)))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), |w| write_map(w, DMAP_MAGIC, self.width, self.height, &self.values))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let (width, height, values) = read_map(path, DMAP_MAGIC, 1)?;
        Ok(DepthMap { width, height, values })
    }
}

/// Per-pixel unit normal in camera coordinates; the zero vector marks an
/// invalid pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMap {
    pub width: usize,
    pub height: usize,
    pub normals: Vec<[f32; 3]>,
}

impl NormalMap {
    pub fn new(width: usize, height: usize) -> Self {
        NormalMap {
            width,
            height,
            normals: vec![[0.0; 3]; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Vector3<f64> {
        let n = self.normals[y * self.width + x];
        Vector3::new(n[0] as f64, n[1] as f64, n[2] as f64)
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, n: &Vector3<f64>) {
        self.normals[y * self.width + x] = [n.x as f32, n.y as f32, n.z as f32];
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let flat: Vec<f32> = self.normals.iter().flatten().copied().collect();
        write_atomic(path.as_ref(), |w| write_map(w, NMAP_MAGIC, self.width, self.height, &flat))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (width, height, flat) = read_map(path.as_ref(), NMAP_MAGIC, 3)?;
        let normals = flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        Ok(NormalMap { width, height, normals })
    }
}

fn write_map(w: &mut dyn Write, magic: &str, width: usize, height: usize, values: &[f32]) -> std::io::Result<()> {
    write!(w, "{magic}\n{width} {height}\n")?;
    let mut buf = Vec::with_capacity(values.len() * 4);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
}

fn read_map(path: &Path, magic: &str, channels: usize) -> Result<(usize, usize, Vec<f32>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::load(path, e.to_string()))?;
    let mut reader = BufReader::new(file);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    if line != format!("{magic}\n") {
        return Err(Error::format(path, format!("expected magic {magic:?}")));
    }
    line.clear();
    reader.read_line(&mut line)?;
    let dims: Vec<usize> = line
        .trim_end_matches('\n')
        .split(' ')
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::format(path, format!("bad header line {line:?}")))?;
    let [width, height] = dims[..] else {
        return Err(Error::format(path, format!("bad header line {line:?}")));
    };
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels * 4))
        .ok_or_else(|| Error::format(path, "dimensions overflow"))?;
    let mut payload = Vec::with_capacity(expected);
    reader.read_to_end(&mut payload)?;
    if payload.len() != expected {
        return Err(Error::format(
            path,
            format!("payload has {} bytes, expected {expected}", payload.len()),
        ));
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((width, height, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn dmap_round_trip_is_bit_exact(w in 1usize..12, h in 1usize..12, seed in any::<u64>()) {
            let dir = tempfile::tempdir().unwrap();
            let mut state = seed;
            let values = (0..w * h)
                .map(|_| {
                    state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    f32::from_bits((state >> 32) as u32)
                })
                .collect();
            let map = DepthMap { width: w, height: h, values };
            let path = dir.path().join("m.dmap");
            map.save(&path).unwrap();
            let back = DepthMap::load(&path).unwrap();
            let a: Vec<u32> = map.values.iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = back.values.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!((back.width, back.height), (w, h));
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn all_invalid_map_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let map = DepthMap::new(7, 3);
        let path = dir.path().join("zero.dmap");
        map.save(&path).unwrap();
        assert_eq!(DepthMap::load(&path).unwrap(), map);
    }

    #[test]
    fn header_layout_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let map = DepthMap {
            width: 2,
            height: 1,
            values: vec![1.5, 0.0],
        };
        let path = dir.path().join("h.dmap");
        map.save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let mut expected = b"DMAP1\n2 1\n".to_vec();
        expected.extend_from_slice(&1.5f32.to_le_bytes());
        expected.extend_from_slice(&0.0f32.to_le_bytes());
        assert_eq!(bytes, expected);
    }

    #[test]
    fn truncated_payload_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.dmap");
        let map = DepthMap {
            width: 4,
            height: 4,
            values: vec![2.0; 16],
        };
        map.save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(DepthMap::load(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn wrong_magic_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.dmap");
        std::fs::write(&path, b"DMAP2\n1 1\n\0\0\0\0").unwrap();
        assert!(matches!(DepthMap::load(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn normal_map_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut map = NormalMap::new(3, 2);
        map.set(1, 1, &Vector3::new(0.0, 0.6, -0.8));
        let path = dir.path().join("n.nmap");
        map.save(&path).unwrap();
        assert_eq!(NormalMap::load(&path).unwrap(), map);
    }

    #[test]
    fn inverse_bilinear_is_exact_on_planes() {
        // Inverse depth affine in pixel coordinates.
        let map = DepthMap {
            width: 3,
            height: 3,
            values: (0..9)
                .map(|i| {
                    let (x, y) = ((i % 3) as f64, (i / 3) as f64);
                    (1.0 / (0.5 + 0.01 * x - 0.02 * y)) as f32
                })
                .collect(),
        };
        let d = map.sample_inverse_bilinear(1.25, 0.5).unwrap();
        let expected = 1.0 / (0.5 + 0.0125 - 0.01);
        assert!((d - expected).abs() < 1e-5);
        assert!(map.sample_inverse_bilinear(2.5, 0.0).is_none());
    }
}
