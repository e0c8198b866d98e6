//! Raster file I/O.
//!
//! PNG files (8 or 16 bit) are treated as sRGB-encoded and linearized on
//! load; PFM files are taken as linear. Masks are single-channel PNGs where
//! zero marks an invalid pixel.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma, Rgb};

use crate::augment::SegmentMap;
use crate::color::{linear_to_srgb, srgb_to_linear, IlluminationMap, LinearImage, Raster, SrgbImage};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RasterFormat {
    /// 16-bit sRGB-encoded PNG.
    Png16,
    /// Linear 32-bit float map.
    Pfm,
}

impl RasterFormat {
    pub fn extension(self) -> &'static str {
        match self {
            RasterFormat::Png16 => "png",
            RasterFormat::Pfm => "pfm",
        }
    }
}

impl std::str::FromStr for RasterFormat {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "png16" | "png" => Ok(RasterFormat::Png16),
            "pfm" => Ok(RasterFormat::Pfm),
            _ => Err(format!("unknown raster format {s:?} (expected png16 or pfm)")),
        }
    }
}

fn is_pfm(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pfm"))
}

fn open_image(path: &Path) -> Result<DynamicImage> {
    let reader = image::ImageReader::open(path).map_err(|e| Error::io(path, e))?;
    let reader = reader.with_guessed_format().map_err(|e| Error::io(path, e))?;
    reader.decode().map_err(|source| Error::Codec { path: path.to_path_buf(), source })
}

/// Load a PNG (linearized) or PFM (as-is) image.
pub fn read_image(path: &Path) -> Result<LinearImage> {
    if is_pfm(path) {
        let (w, h, data) = read_pfm(path)?;
        return LinearImage::new(w, h, data).map_err(|e| Error::format(path, e.to_string()));
    }
    let img = open_image(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = match &img {
        DynamicImage::ImageLuma8(_) | DynamicImage::ImageLumaA8(_) | DynamicImage::ImageRgb8(_) | DynamicImage::ImageRgba8(_) => {
            img.to_rgb8().into_raw().into_iter().map(|v| v as f64 / 255.0).collect()
        }
        _ => img.to_rgb16().into_raw().into_iter().map(|v| v as f64 / 65535.0).collect(),
    };
    srgb_to_linear(&SrgbImage { width: w, height: h, data, clipped: false })
}

/// Read an image plus an optional validity-mask PNG.
pub fn read_image_with_mask(path: &Path, mask: Option<&Path>) -> Result<LinearImage> {
    let img = read_image(path)?;
    match mask {
        None => Ok(img),
        Some(m) => {
            let (w, h, bits) = read_mask(m)?;
            if (w, h) != img.dims() {
                return Err(Error::shape(format!("{}x{} mask", img.width(), img.height()), format!("{w}x{h}")));
            }
            img.with_mask(bits)
        }
    }
}

/// Encode as sRGB and write a 16-bit PNG. Values above 1 are clipped.
pub fn write_png16(path: &Path, img: &LinearImage) -> Result<bool> {
    let srgb = linear_to_srgb(img);
    let raw: Vec<u16> = srgb.data.iter().map(|v| (v * 65535.0).round() as u16).collect();
    let buf: ImageBuffer<Rgb<u16>, Vec<u16>> =
        ImageBuffer::from_raw(img.width() as u32, img.height() as u32, raw).expect("buffer size matches dimensions");
    save(path, |w| buf.write_to(w, ImageFormat::Png))?;
    Ok(srgb.clipped)
}

/// Gamma-adjusted 8-bit PNG for viewing.
pub fn write_png8(path: &Path, img: &LinearImage) -> Result<bool> {
    let srgb = linear_to_srgb(img);
    let raw: Vec<u8> = srgb.data.iter().map(|v| (v * 255.0).round() as u8).collect();
    let buf: ImageBuffer<Rgb<u8>, Vec<u8>> =
        ImageBuffer::from_raw(img.width() as u32, img.height() as u32, raw).expect("buffer size matches dimensions");
    save(path, |w| buf.write_to(w, ImageFormat::Png))?;
    Ok(srgb.clipped)
}

pub fn write_image(path: &Path, img: &LinearImage, format: RasterFormat) -> Result<()> {
    match format {
        RasterFormat::Png16 => write_png16(path, img).map(|_| ()),
        RasterFormat::Pfm => write_pfm(path, img.width(), img.height(), img.data()),
    }
}

fn save(path: &Path, f: impl FnOnce(&mut std::io::Cursor<Vec<u8>>) -> image::ImageResult<()>) -> Result<()> {
    let mut cursor = std::io::Cursor::new(Vec::new());
    f(&mut cursor).map_err(|source| Error::Codec { path: path.to_path_buf(), source })?;
    fs::write(path, cursor.into_inner()).map_err(|e| Error::io(path, e))
}

/// Write a three-channel little-endian PFM (rows stored bottom to top).
pub fn write_pfm(path: &Path, width: usize, height: usize, rgb: &[f64]) -> Result<()> {
    assert_eq!(rgb.len(), width * height * 3);
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut body = Vec::with_capacity(rgb.len() * 4 + 32);
    write!(body, "PF\n{width} {height}\n-1.0\n").unwrap();
    for y in (0..height).rev() {
        for v in &rgb[y * width * 3..(y + 1) * width * 3] {
            body.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out.write_all(&body).and_then(|_| out.flush()).map_err(|e| Error::io(path, e))
}

/// Read a PFM file; single-channel (`Pf`) data is replicated to RGB.
pub fn read_pfm(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pfm(&bytes).map_err(|m| Error::format(path, m))
}

fn parse_pfm(bytes: &[u8]) -> std::result::Result<(usize, usize, Vec<f64>), String> {
    // header: three whitespace-separated tokens after the magic
    let mut tokens = Vec::new();
    let mut pos = 0;
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated PFM header".into());
        }
        tokens.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| "non-ASCII PFM header")?.to_string());
    }
    pos += 1; // single whitespace byte before the raster
    let channels = match tokens[0].as_str() {
        "PF" => 3,
        "Pf" => 1,
        other => return Err(format!("bad PFM magic {other:?}")),
    };
    let width: usize = tokens[1].parse().map_err(|_| "bad PFM width")?;
    let height: usize = tokens[2].parse().map_err(|_| "bad PFM height")?;
    let scale: f64 = tokens[3].parse().map_err(|_| "bad PFM scale")?;
    let little = scale < 0.0;
    let need = width * height * channels * 4;
    if bytes.len() < pos || bytes.len() - pos != need {
        return Err(format!("PFM raster has {} bytes, expected {need}", bytes.len().saturating_sub(pos)));
    }
    let values: Vec<f64> = bytes[pos..]
        .chunks_exact(4)
        .map(|b| {
            let b: [u8; 4] = b.try_into().unwrap();
            (if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) }) as f64
        })
        .collect();
    let mut out = Vec::with_capacity(width * height * 3);
    for y in 0..height {
        let row = height - 1 - y;
        let slice = &values[row * width * channels..(row + 1) * width * channels];
        if channels == 3 {
            out.extend_from_slice(slice);
        } else {
            out.extend(slice.iter().flat_map(|v| [*v; 3]));
        }
    }
    Ok((width, height, out))
}

pub fn write_illumination_map(path: &Path, map: &IlluminationMap) -> Result<()> {
    write_pfm(path, map.width(), map.height(), map.data())
}

pub fn read_illumination_map(path: &Path) -> Result<IlluminationMap> {
    let (w, h, data) = if is_pfm(path) {
        read_pfm(path)?
    } else {
        let img = read_image(path)?;
        (img.width(), img.height(), img.data().to_vec())
    };
    IlluminationMap::new(w, h, data).map_err(|e| Error::format(path, e.to_string()))
}

/// Read a single-channel mask; zero is `false`.
pub fn read_mask(path: &Path) -> Result<(usize, usize, Vec<bool>)> {
    let img = open_image(path)?.to_luma16();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok((w, h, img.into_raw().into_iter().map(|v| v != 0).collect()))
}

/// Write a binary mask as an 8-bit PNG with values 0 and 255.
pub fn write_mask(path: &Path, width: usize, height: usize, mask: &[bool]) -> Result<()> {
    let raw: Vec<u8> = mask.iter().map(|&b| if b { 255 } else { 0 }).collect();
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
        ImageBuffer::from_raw(width as u32, height as u32, raw).expect("buffer size matches dimensions");
    save(path, |w| buf.write_to(w, ImageFormat::Png))
}

/// Single-channel plane in `[0, 1]` as a 16-bit grayscale PNG.
pub fn write_plane16(path: &Path, width: usize, height: usize, plane: &[f32]) -> Result<()> {
    let raw: Vec<u16> = plane.iter().map(|v| (v.clamp(0.0, 1.0) as f64 * 65535.0).round() as u16).collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(width as u32, height as u32, raw).expect("buffer size matches dimensions");
    save(path, |w| buf.write_to(w, ImageFormat::Png))
}

/// Label map from an 8- or 16-bit grayscale PNG; pixel value = label.
pub fn read_segments(path: &Path) -> Result<SegmentMap> {
    let img = open_image(path)?.to_luma16();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let labels = img.into_raw().into_iter().map(|v| v as usize).collect();
    SegmentMap::new(w, h, labels).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_segments(path: &Path, segments: &SegmentMap) -> Result<()> {
    let raw: Vec<u16> = segments.labels().iter().map(|&l| l as u16).collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(segments.width() as u32, segments.height() as u32, raw).expect("buffer size matches dimensions");
    save(path, |w| buf.write_to(w, ImageFormat::Png))
}

/// Write JSON with a trailing newline.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

/// Build a directory under a temporary name and move it into place, so a
/// reader never sees a partially written directory.
pub fn write_dir_atomically(target: &Path, fill: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let parent = target.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    let name = target.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let staging: PathBuf = parent.join(format!(".{name}.partial"));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    }
    fs::create_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    if let Err(e) = fill(&staging) {
        let _ = fs::remove_dir_all(&staging);
        return Err(e);
    }
    if target.exists() {
        fs::remove_dir_all(target).map_err(|e| Error::io(target, e))?;
    }
    fs::rename(&staging, target).map_err(|e| Error::io(target, e))
}

/// Write a file via a temporary sibling and rename.
pub fn write_file_atomically(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
