//! Minimal 8-bit PGM/PPM codec (P2, P3, P5, P6).

use std::path::Path;

use super::raster::{Image, RgbImage};
use crate::error::{Error, Result};
use crate::io_util::write_atomic;

/// Decoded image: grayscale intensities always, RGB only for color files.
pub struct Decoded {
    pub gray: Image,
    pub rgb: Option<RgbImage>,
}

pub fn read_pnm(path: &Path) -> Result<Decoded> {
    let bytes = std::fs::read(path).map_err(|e| Error::load(path, e.to_string()))?;
    decode(&bytes).map_err(|reason| Error::format(path, reason))
}

fn decode(bytes: &[u8]) -> std::result::Result<Decoded, String> {
    let mut pos = 0usize;
    let magic = header_token(bytes, &mut pos).ok_or("missing magic")?;
    let (channels, binary) = match magic.as_str() {
        "P2" => (1, false),
        "P5" => (1, true),
        "P3" => (3, false),
        "P6" => (3, true),
        other => return Err(format!("unsupported magic {other:?}")),
    };
    let next_num = |pos: &mut usize| -> std::result::Result<usize, String> {
        header_token(bytes, pos)
            .ok_or("truncated header")?
            .parse::<usize>()
            .map_err(|e| e.to_string())
    };
    let width = next_num(&mut pos)?;
    let height = next_num(&mut pos)?;
    let maxval = next_num(&mut pos)?;
    if width == 0 || height == 0 {
        return Err("zero image extent".into());
    }
    if maxval == 0 || maxval > 255 {
        return Err(format!("only 8-bit images are supported (maxval {maxval})"));
    }
    let count = width * height * channels;
    let samples: Vec<u8> = if binary {
        // Exactly one whitespace byte separates the header from the raster.
        pos += 1;
        let raster = bytes.get(pos..pos + count).ok_or("truncated raster")?;
        raster.to_vec()
    } else {
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let v = next_num(&mut pos)?;
            if v > maxval {
                return Err(format!("sample {v} exceeds maxval {maxval}"));
            }
            out.push(v as u8);
        }
        out
    };
    let scale = 255.0 / maxval as f64;
    if channels == 1 {
        let data = samples.iter().map(|&v| v as f64 * scale / 255.0).collect();
        return Ok(Decoded {
            gray: Image { width, height, data },
            rgb: None,
        });
    }
    let rgb: Vec<[u8; 3]> = samples
        .chunks_exact(3)
        .map(|c| {
            let s = |v: u8| (v as f64 * scale).round().min(255.0) as u8;
            [s(c[0]), s(c[1]), s(c[2])]
        })
        .collect();
    let data = samples
        .chunks_exact(3)
        .map(|c| (0.299 * c[0] as f64 + 0.587 * c[1] as f64 + 0.114 * c[2] as f64) * scale / 255.0)
        .collect();
    Ok(Decoded {
        gray: Image { width, height, data },
        rgb: Some(RgbImage { width, height, data: rgb }),
    })
}

fn header_token(bytes: &[u8], pos: &mut usize) -> Option<String> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

/// Quantizes `[0, 1]` intensities to 8 bits.
pub fn write_pgm(path: &Path, image: &Image) -> Result<()> {
    write_atomic(path, |w| {
        write!(w, "P5\n{} {}\n255\n", image.width, image.height)?;
        let raster: Vec<u8> = image.data.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
        w.write_all(&raster)
    })
}

pub fn write_ppm(path: &Path, image: &RgbImage) -> Result<()> {
    write_atomic(path, |w| {
        write!(w, "P6\n{} {}\n255\n", image.width, image.height)?;
        let raster: Vec<u8> = image.data.iter().flatten().copied().collect();
        w.write_all(&raster)
    })
}
