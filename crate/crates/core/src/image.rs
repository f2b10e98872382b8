//! Linear-radiance images and their PFM/PNG encodings.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// H×W×C linear radiance, row-major with interleaved channels.
#[derive(Clone, Debug, PartialEq)]
pub struct RadianceImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl RadianceImage {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        RadianceImage {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn from_data(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {width}x{height}x{channels} image",
                data.len()
            )));
        }
        Ok(RadianceImage {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[self.index(x, y, c)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        let i = self.index(x, y, c);
        self.data[i] = v;
    }

    pub fn same_shape(&self, other: &RadianceImage) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub fn check_same_shape(&self, other: &RadianceImage) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "{}x{}x{} vs {}x{}x{}",
                self.width, self.height, self.channels, other.width, other.height, other.channels
            )))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &RadianceImage) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Rounds every value to the nearest `f32`, the precision of stored images.
    pub fn quantize_f32(&mut self) {
        self.data.iter_mut().for_each(|v| *v = *v as f32 as f64);
    }

    /// Mean of equally-shaped images.
    pub fn mean_of(images: &[RadianceImage]) -> Result<RadianceImage> {
        let first = images
            .first()
            .ok_or_else(|| Error::InvalidArgument("mean of zero images".into()))?;
        // running mean: identical inputs reproduce themselves bit-exactly
        let mut out = first.clone();
        for (k, img) in images.iter().enumerate().skip(1) {
            out.check_same_shape(img)?;
            let w = 1.0 / (k + 1) as f64;
            out.data.iter_mut().zip(&img.data).for_each(|(o, v)| *o += (v - *o) * w);
        }
        Ok(out)
    }
}

// PFM: text header, then little-endian f32 rows from bottom to top.
pub fn write_pfm(path: &Path, img: &RadianceImage) -> Result<()> {
    let tag = match img.channels {
        1 => "Pf",
        3 => "PF",
        c => return Err(Error::InvalidArgument(format!("PFM cannot hold {c} channels"))),
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut bytes = Vec::with_capacity(img.len() * 4 + 32);
    bytes.extend_from_slice(format!("{tag}\n{} {}\n-1.0\n", img.width, img.height).as_bytes());
    let row_len = img.width * img.channels;
    for y in (0..img.height).rev() {
        for v in &img.data[y * row_len..(y + 1) * row_len] {
            bytes.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    w.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_header_line(r: &mut impl BufRead, path: &Path) -> Result<String> {
    let mut line = String::new();
    let n = r.read_line(&mut line).map_err(|e| Error::io(path, e))?;
    if n == 0 {
        return Err(Error::format(path, "truncated PFM header"));
    }
    Ok(line.trim().to_string())
}

pub fn read_pfm(path: &Path) -> Result<RadianceImage> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let channels = match read_header_line(&mut r, path)?.as_str() {
        "PF" => 3,
        "Pf" => 1,
        other => return Err(Error::format(path, format!("not a PFM file (tag {other:?})"))),
    };
    let dims = read_header_line(&mut r, path)?;
    let mut it = dims.split_whitespace().map(str::parse::<usize>);
    let (width, height) = match (it.next(), it.next()) {
        (Some(Ok(w)), Some(Ok(h))) => (w, h),
        _ => return Err(Error::format(path, format!("bad PFM dimensions {dims:?}"))),
    };
    let scale: f64 = read_header_line(&mut r, path)?
        .parse()
        .map_err(|_| Error::format(path, "bad PFM scale"))?;
    let little = scale < 0.0;
    let mut raw = Vec::new();
    r.read_to_end(&mut raw).map_err(|e| Error::io(path, e))?;
    let count = width * height * channels;
    if raw.len() != count * 4 {
        return Err(Error::format(
            path,
            format!("expected {} bytes of pixel data, found {}", count * 4, raw.len()),
        ));
    }
    let mut data = vec![0.0; count];
    let row_len = width * channels;
    for (i, chunk) in raw.chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let file_row = i / row_len;
        let y = height - 1 - file_row;
        data[y * row_len + i % row_len] = v as f64;
    }
    RadianceImage::from_data(width, height, channels, data)
}

const GAMMA: f64 = 2.2;

/// 8-bit PNG with a 1/2.2 gamma applied to clamped linear radiance.
pub fn write_png(path: &Path, img: &RadianceImage) -> Result<()> {
    let color = match img.channels {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        c => return Err(Error::InvalidArgument(format!("PNG output needs 1 or 3 channels, got {c}"))),
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), img.width as u32, img.height as u32);
    enc.set_color(color);
    enc.set_depth(png::BitDepth::Eight);
    let bytes: Vec<u8> = img
        .data
        .iter()
        .map(|v| (v.clamp(0.0, 1.0).powf(1.0 / GAMMA) * 255.0).round() as u8)
        .collect();
    let mut w = enc
        .write_header()
        .map_err(|e| Error::format(path, e.to_string()))?;
    w.write_image_data(&bytes)
        .map_err(|e| Error::format(path, e.to_string()))
}

/// Reads an 8-bit gray or RGB PNG back to linear radiance.
pub fn read_png(path: &Path) -> Result<RadianceImage> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut dec = png::Decoder::new(BufReader::new(file));
    dec.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = dec.read_info().map_err(|e| Error::format(path, e.to_string()))?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::format(path, e.to_string()))?;
    let src_channels = info.color_type.samples();
    let (w, h) = (info.width as usize, info.height as usize);
    let channels = if src_channels >= 3 { 3 } else { 1 };
    let mut data = Vec::with_capacity(w * h * channels);
    for px in buf[..info.buffer_size()].chunks_exact(src_channels) {
        for &b in &px[..channels] {
            data.push((b as f64 / 255.0).powf(GAMMA));
        }
    }
    RadianceImage::from_data(w, h, channels, data)
}

/// Reads `.pfm` or `.png` by extension.
pub fn read_image(path: &Path) -> Result<RadianceImage> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("pfm") => read_pfm(path),
        Some("png") => read_png(path),
        _ => Err(Error::format(path, "unsupported image extension (expected .pfm or .png)")),
    }
}

pub fn write_image(path: &Path, img: &RadianceImage) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("pfm") => write_pfm(path, img),
        Some("png") => write_png(path, img),
        _ => Err(Error::format(path, "unsupported image extension (expected .pfm or .png)")),
    }
}
