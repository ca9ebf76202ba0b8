//! Pixmaps, masks and the binary grid container.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageFormat};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bev_grid::{BevGrid, Mask};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::warping::ImageRaster;

const GRID_MAGIC: &[u8; 4] = b"BEVG";
const GRID_VERSION: u32 = 1;

pub fn quantize<T: Real>(v: T) -> u8 {
    (v.as_f64().clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn dequantize<T: Real>(b: u8) -> T {
    T::lit(b as f64 / 255.0)
}

/// Rounds every value to the nearest of the 256 levels a pixmap can hold.
pub fn quantize_raster<T: Real>(raster: &ImageRaster<T>) -> ImageRaster<T> {
    ImageRaster {
        data: raster.data.iter().map(|&v| dequantize(quantize(v))).collect(),
        ..raster.clone()
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn encode(path: &Path, bytes: &[u8], width: usize, height: usize, gray: bool) -> Result<()> {
    let w = create(path)?;
    let (subtype, color) = if gray {
        (PnmSubtype::Graymap(SampleEncoding::Binary), ExtendedColorType::L8)
    } else {
        (PnmSubtype::Pixmap(SampleEncoding::Binary), ExtendedColorType::Rgb8)
    };
    PnmEncoder::new(w)
        .with_subtype(subtype)
        .write_image(bytes, width as u32, height as u32, color)
        .map_err(|e| Error::format(path.display().to_string(), e))
}

fn decode(path: &Path) -> Result<image::DynamicImage> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    image::load(BufReader::new(f), ImageFormat::Pnm).map_err(|e| Error::format(path.display().to_string(), e))
}

/// Writes a 3-channel raster in [0, 1] as a binary P6 pixmap.
pub fn write_ppm<T: Real>(path: &Path, raster: &ImageRaster<T>) -> Result<()> {
    if raster.channels != 3 {
        return Err(Error::ShapeMismatch(format!(
            "pixmaps hold 3 channels, raster has {}",
            raster.channels
        )));
    }
    let bytes: Vec<u8> = raster.data.iter().map(|&v| quantize(v)).collect();
    encode(path, &bytes, raster.width, raster.height, false)
}

pub fn read_ppm<T: Real>(path: &Path) -> Result<ImageRaster<T>> {
    let img = decode(path)?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    ImageRaster::from_data(h, w, 3, img.into_raw().into_iter().map(dequantize).collect())
}

/// Writes a mask as a P5 graymap, 255 for set cells.
pub fn write_mask(path: &Path, mask: &Mask) -> Result<()> {
    let bytes: Vec<u8> = mask.data.iter().map(|&b| if b { 255 } else { 0 }).collect();
    encode(path, &bytes, mask.cols, mask.rows, true)
}

pub fn read_mask(path: &Path) -> Result<Mask> {
    let img = decode(path)?.to_luma8();
    let (cols, rows) = (img.width() as usize, img.height() as usize);
    Ok(Mask {
        rows,
        cols,
        data: img.into_raw().into_iter().map(|b| b >= 128).collect(),
    })
}

pub fn write_gray(path: &Path, bytes: &[u8], width: usize, height: usize) -> Result<()> {
    if bytes.len() != width * height {
        return Err(Error::ShapeMismatch("gray buffer does not match its size".into()));
    }
    encode(path, bytes, width, height, true)
}

pub fn read_gray(path: &Path) -> Result<(Vec<u8>, usize, usize)> {
    let img = decode(path)?.to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok((img.into_raw(), w, h))
}

pub fn write_rgb_bytes(path: &Path, bytes: &[u8], width: usize, height: usize) -> Result<()> {
    if bytes.len() != width * height * 3 {
        return Err(Error::ShapeMismatch("rgb buffer does not match its size".into()));
    }
    encode(path, bytes, width, height, false)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Storage {
    /// Values rounded to 0..=255 (labels are exact).
    U8,
    F32,
    F64,
}

impl Storage {
    fn width(self) -> usize {
        match self {
            Storage::U8 => 1,
            Storage::F32 => 4,
            Storage::F64 => 8,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
struct GridHeader<T> {
    storage: Storage,
    layout: crate::bev_grid::Layout<T>,
    channels: usize,
    fill_value: T,
}

/// Container layout: magic `BEVG`, version (u32 LE), header length (u32 LE),
/// JSON header with the lattice geometry, then row-major channel-last values
/// little-endian in the declared storage.
pub fn write_grid<T: Real + Serialize>(path: &Path, grid: &BevGrid<T>, storage: Storage) -> Result<()> {
    let header = serde_json::to_vec(&GridHeader {
        storage,
        layout: grid.layout,
        channels: grid.channels,
        fill_value: grid.fill_value,
    })
    .map_err(|e| Error::format("grid header", e))?;
    let mut w = create(path)?;
    let mut buf = Vec::with_capacity(12 + header.len() + grid.data.len() * storage.width());
    buf.extend_from_slice(GRID_MAGIC);
    buf.extend_from_slice(&GRID_VERSION.to_le_bytes());
    buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header);
    for &v in &grid.data {
        match storage {
            Storage::U8 => buf.push(v.as_f64().round().clamp(0.0, 255.0) as u8),
            Storage::F32 => buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes()),
            Storage::F64 => buf.extend_from_slice(&v.as_f64().to_le_bytes()),
        }
    }
    w.write_all(&buf).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn read_grid<T: Real + for<'de> Deserialize<'de>>(path: &Path) -> Result<BevGrid<T>> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let ctx = path.display().to_string();
    if bytes.len() < 12 || &bytes[..4] != GRID_MAGIC {
        return Err(Error::format(ctx, "not a grid container"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != GRID_VERSION {
        return Err(Error::format(ctx, format!("unsupported container version {version}")));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = bytes
        .get(12..12 + hlen)
        .ok_or_else(|| Error::format(&ctx, "truncated header"))?;
    let header: GridHeader<T> = serde_json::from_slice(body).map_err(|e| Error::format(&ctx, e))?;
    let payload = &bytes[12 + hlen..];
    let lat = header.layout.lattice();
    let n = lat.rows * lat.cols * header.channels;
    let width = header.storage.width();
    if payload.len() != n * width {
        return Err(Error::format(
            ctx,
            format!("expected {} payload bytes, found {}", n * width, payload.len()),
        ));
    }
    let data = payload
        .chunks_exact(width)
        .map(|c| match header.storage {
            Storage::U8 => T::lit(c[0] as f64),
            Storage::F32 => T::lit(f32::from_le_bytes(c.try_into().unwrap()) as f64),
            Storage::F64 => T::lit(f64::from_le_bytes(c.try_into().unwrap())),
        })
        .collect();
    let mut grid = BevGrid::from_data(header.layout, header.channels, data)?;
    grid.fill_value = header.fill_value;
    Ok(grid)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}
